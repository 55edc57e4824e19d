"""Command-line entry point.

Exit codes: 0 success, 1 a checked invariant or estimate failed, 2 bad input,
3 the solver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import energy
from .assembly import EllipticityError
from .fraccalc import TimeGrid, TimeSeries
from .mittag import MLDomainError, ml, ml_regime
from .solver import (
    PRESETS,
    Manufactured,
    ProblemSpec,
    StageError,
    load_config,
    manufactured_spec,
    manufactured_error,
    preset,
    solve,
)
from .volterra import NonConvergenceError, SingularStepError

EXIT_OK, EXIT_INVARIANT, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3


class InvariantFailure(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return values


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _spec_from_args(args) -> ProblemSpec:
    spec = load_config(args.config) if args.config else preset(args.preset)
    overrides = {
        k: v
        for k, v in (("alpha", args.alpha), ("N", args.N), ("n", args.modes), ("solver", args.solver))
        if v is not None
    }
    return spec.replace(**overrides) if overrides else spec


def _header(spec: ProblemSpec) -> str:
    return f"spec sha256: {spec.hash}\n"


# {{{ commands


def cmd_solve(args) -> int:
    spec = _spec_from_args(args)
    sol = solve(spec, energy=args.energy)
    text = _header(spec) + sol.trace.report()
    for other in sol.traces[1:]:
        text += "\n" + other.report()
    if sol.energy is not None:
        text += "\n" + sol.energy.to_text()
    print(text)
    out = _out_dir(args)
    if out is not None:
        sol.write_csv(out / "solution.csv", points=args.points, stride=args.stride)
        (out / "trace.txt").write_text(text + "\n")
        (out / "problem.ini").write_text(spec.to_config())
    if sol.energy is not None and not sol.energy.passed:
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_convergence(args) -> int:
    base = load_config(args.config) if args.config else manufactured_spec(args.alpha or 0.5)
    if args.alpha is not None:
        base = base.replace(alpha=args.alpha)
    base = base.replace(
        starting_weights=args.starting_weights == "on",
        solver=args.solver or base.solver,
        epsilon=0.0,
    )
    if args.profile == "smooth":
        exact = Manufactured.polynomial([1.0, 0.0, 1.0], args.mode)
    elif args.profile == "power":
        exact = Manufactured.power(base.alpha if args.gamma is None else args.gamma, args.mode)
    else:
        exact = Manufactured.polynomial([1.0], args.mode)
    report = manufactured_error(base, exact, args.N)
    print(_header(base) + report.to_text())
    out = _out_dir(args)
    if out is not None:
        report.write_csv(out / "errors.csv")
        (out / "problem.ini").write_text(base.to_config())
    return EXIT_OK


def _clamped_power(gamma: float) -> Callable:
    """``t^gamma`` with the node at ``t = 0`` set to the value at the next node."""

    def f(t):
        t = np.array(t, dtype=float)
        t[0] = t[1]
        return t**gamma

    return f


def _profiles(kind: str, alpha: float) -> list[tuple[str, Callable, bool]]:
    """``(name, function, smooth)``.

    ``divergent`` is ``t^gamma`` with ``gamma`` below the ``H^{alpha/2}``
    membership threshold ``alpha/2 - 1/2``; its residuals must not shrink,
    so the suite is expected to fail.
    """
    if kind == "divergent":
        gamma = alpha / 2 - 0.55
        return [(f"t^{gamma:g}", _clamped_power(gamma), False)]
    smooth = [("t", lambda t: t, True), ("sin", np.sin, True), ("1+t^2", lambda t: 1 + t**2, True)]
    singular = [
        (f"t^{alpha:g}", lambda t: t**alpha, False),
        ("ml_relaxation", lambda t: ml(alpha, -(t**alpha)), False),
    ]
    return {"smooth": smooth, "singular": singular, "all": smooth + singular}[kind]


def cmd_verify(args) -> int:
    Ns = sorted(args.N)
    if Ns[0] < 16:
        raise ValueError("identity checks need N >= 16")
    rows = [["profile", "identity", "N", "residual", "ratio"]]
    failures = []
    for name, f, smooth in _profiles(args.profiles, args.alpha):
        need = 1.5 if smooth else 1.2
        for label, check in (
            ("caputo_energy", energy.caputo_energy_identity_residual),
            ("rl_quadratic", energy.rl_quadratic_identity_residual),
        ):
            prev = None
            for N in Ns:
                w = TimeSeries.from_function(TimeGrid(args.T, N), f)
                r = check(w, args.alpha).residual
                ratio = math.nan if prev is None else prev / r
                rows.append([name, label, str(N), f"{r:.15g}", f"{ratio:.15g}"])
                if prev is not None and not ratio >= need:
                    failures.append(f"{name} {label}: ratio {ratio:.3f} < {need} at N={N}")
                prev = r
        lb = energy.rl_lower_bound(TimeSeries.from_function(TimeGrid(args.T, Ns[-1]), f), args.alpha)
        rows.append([name, "rl_lower_bound_margin", str(Ns[-1]), f"{lb.residual:.15g}", "nan"])
        if not lb.passed:
            failures.append(f"{name}: lower bound violated by {-lb.residual:.3g}")
    for r in rows:
        print(",".join(r))
    out = _out_dir(args)
    if out is not None:
        with open(out / "identities.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    if failures:
        raise InvariantFailure("; ".join(failures))
    return EXIT_OK


def cmd_ml(args) -> int:
    for z in args.z:
        value = ml(args.alpha, z, args.beta)
        line = f"{value:.16g}"
        if args.verbose:
            line = f"z={z:.16g} E={line} regime={ml_regime(args.alpha, args.beta, z)}"
        print(line)
    return EXIT_OK


def cmd_counterexample(args) -> int:
    report = energy.counterexample_demo(args.alpha, args.beta)
    print(report.to_text())
    out = _out_dir(args)
    if out is not None:
        (out / "counterexample.txt").write_text(report.to_text() + "\n")
    return EXIT_OK


def cmd_energy(args) -> int:
    spec = _spec_from_args(args)
    sol = solve(spec, energy=False)
    report = energy.first_energy_check(sol.field, sol.system, spec.alpha, raise_on_failure=False)
    print(_header(spec) + report.to_text())
    out = _out_dir(args)
    if out is not None:
        report.to_csv(out / "energy.csv")
        (out / "problem.ini").write_text(spec.to_config())
    return EXIT_OK if report.passed else EXIT_INVARIANT


# }}}


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="problem INI file")
    src.add_argument("--preset", default="heat", choices=sorted(PRESETS))
    p.add_argument("--alpha", type=float)
    p.add_argument("--N", type=int, help="time steps")
    p.add_argument("--modes", type=int, help="Galerkin modes")
    p.add_argument("--solver", choices=["auto", "both", "picard", "l1"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem and write the solution")
    _add_problem_args(p)
    p.add_argument("--out")
    p.add_argument("--points", type=int, default=33, help="lattice points per axis")
    p.add_argument("--stride", type=int, default=1, help="write every stride-th time node")
    p.add_argument("--energy", action="store_true", help="also run the first energy check")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("convergence-study", help="manufactured-solution error table")
    p.add_argument("--config")
    p.add_argument("--alpha", type=float)
    p.add_argument("--profile", choices=["smooth", "power", "constant"], default="smooth")
    p.add_argument("--gamma", type=float, help="power of the 'power' profile (default alpha)")
    p.add_argument("--mode", type=int, default=1)
    p.add_argument("--N", type=_int_list, default=[128, 256, 512, 1024])
    p.add_argument("--starting-weights", choices=["on", "off"], default="off")
    p.add_argument("--solver", choices=["both", "picard", "l1"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("verify-identities", help="residuals of the energy identities")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--profiles", choices=["smooth", "singular", "all", "divergent"], default="smooth")
    p.add_argument("--N", type=_int_list, default=[256, 512, 1024])
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("ml-eval", help="evaluate the Mittag-Leffler function")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--z", type=_float_list, required=True)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_ml)

    p = sub.add_parser("counterexample", help="unbounded solution for singular forcing")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("energy-check", help="first energy estimate on a solved problem")
    _add_problem_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_energy)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvariantFailure as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except energy.EnergyEstimateViolation as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVARIANT
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (NonConvergenceError, SingularStepError)):
            return EXIT_SOLVER
        if isinstance(exc.cause, energy.EnergyEstimateViolation):
            return EXIT_INVARIANT
        return EXIT_INPUT
    except (NonConvergenceError, SingularStepError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, EllipticityError, MLDomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

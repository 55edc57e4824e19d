"""Problem specification, end-to-end solves and manufactured-solution studies."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .assembly import (
    CoefficientSet,
    GalerkinSystem,
    assemble,
    coefficient_preset,
    parse_coefficients,
    parse_field,
    read_coefficient_csv,
    validate_ellipticity,
)
from .basis import (
    Domain,
    EigenBasis,
    SpectralField,
    eigenpairs,
    read_lattice_csv,
    spatial_preset,
)
from .energy import EnergyReport, first_energy_check
from .fraccalc import TimeGrid, check_order
from .volterra import PicardConfig, SolveTrace, l1_step_solve, picard_solve

__all__ = [
    "MAX_MODES",
    "MAX_STEPS",
    "PRESETS",
    "ProblemSpec",
    "Solution",
    "StageError",
    "Manufactured",
    "ManufacturedReport",
    "solve",
    "manufactured_error",
    "manufactured_spec",
    "spectral_h_minus_1_norm",
    "load_config",
    "read_solution_csv",
    "parse_config",
    "preset",
]

MAX_MODES = 128
MAX_STEPS = 2**20
SOLVERS = ("auto", "both", "picard", "l1")
COEFFICIENT_PRESETS = ("const", "separable", "checkerboard", "reaction")


class StageError(RuntimeError):
    """A failure inside :func:`solve`, labelled with the pipeline stage."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class ProblemSpec:
    """Data of one solve.

    ``coefficients`` is a preset name, ``csv:<path>`` or an expression such as
    ``"a: (1+0.5*sin(t))*I; c: -1"``. ``forcing`` is an expression in
    ``x[, y], t`` (``phi(k)`` names eigenfunctions) and ``initial`` a spatial
    preset, ``csv:<path>`` or an expression in ``x[, y]``.
    ``epsilon = None`` mollifies with half-width ``1/n``; ``0`` disables it.
    ``solver = "auto"`` runs both solvers when ``N <= 4096`` and L1 otherwise.
    """

    domain: Domain = field(default_factory=Domain.interval)
    alpha: float = 0.5
    T: float = 1.0
    n: int = 8
    N: int = 256
    coefficients: str = "const"
    lam: float | None = None
    mu: float | None = None
    forcing: str = "0"
    initial: str = "zero"
    epsilon: float | None = None
    solver: str = "auto"
    starting_weights: bool = True
    picard: PicardConfig = field(default_factory=PicardConfig)

    def __post_init__(self) -> None:
        check_order(self.alpha)
        if not (1 <= self.n <= MAX_MODES):
            raise ValueError(f"mode count must lie in [1, {MAX_MODES}], got {self.n}")
        if not (1 <= self.N <= MAX_STEPS):
            raise ValueError(f"step count must lie in [1, {MAX_STEPS}], got {self.N}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {', '.join(SOLVERS)}, got {self.solver!r}")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        TimeGrid(self.T, self.N)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.N)

    @property
    def methods(self) -> tuple[str, ...]:
        if self.solver == "auto":
            return ("picard", "l1") if self.N <= 4096 else ("l1",)
        if self.solver == "both":
            return ("picard", "l1")
        return (self.solver,)

    def replace(self, **changes) -> ProblemSpec:
        return dataclasses.replace(self, **changes)

    def to_config(self) -> str:
        """Canonical INI text; :func:`parse_config` inverts it."""
        cp = configparser.ConfigParser(interpolation=None)
        cp["domain"] = {
            "kind": self.domain.kind,
            "lengths": ", ".join(repr(float(L)) for L in self.domain.lengths),
            "panels": str(self.domain.M),
            "modes": str(self.n),
        }
        cp["time"] = {"alpha": repr(self.alpha), "T": repr(self.T), "N": str(self.N)}
        coeffs = {"spec": self.coefficients}
        if self.lam is not None:
            coeffs["lam"] = repr(self.lam)
        if self.mu is not None:
            coeffs["mu"] = repr(self.mu)
        cp["coefficients"] = coeffs
        cp["forcing"] = {
            "expression": self.forcing,
            "epsilon": "auto" if self.epsilon is None else repr(self.epsilon),
        }
        cp["initial"] = {"field": self.initial}
        cp["solver"] = {
            "method": self.solver,
            "starting_weights": str(self.starting_weights).lower(),
            "rho": repr(self.picard.rho),
            "tol": repr(self.picard.tol),
            "max_iter": str(self.picard.max_iter),
            "shrink": repr(self.picard.shrink),
            "window": "auto" if self.picard.window is None else str(self.picard.window),
        }
        out = io.StringIO()
        cp.write(out)
        return out.getvalue()

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_config().encode()).hexdigest()


_SECTIONS = {
    "domain": {"kind", "lengths", "panels", "modes"},
    "time": {"alpha", "t", "n"},
    "coefficients": {"spec", "lam", "mu"},
    "forcing": {"expression", "epsilon"},
    "initial": {"field"},
    "solver": {"method", "starting_weights", "rho", "tol", "max_iter", "shrink", "window"},
}


def parse_config(text: str) -> ProblemSpec:
    """Build a :class:`ProblemSpec` from INI text; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValueError(f"malformed config: {exc}") from None
    for name in cp.sections():
        if name not in _SECTIONS:
            raise ValueError(f"unknown config section [{name}]")
        extra = set(cp[name]) - _SECTIONS[name]
        if extra:
            raise ValueError(f"unknown keys in [{name}]: {', '.join(sorted(extra))}")

    def get(section: str, key: str, default=None):
        return cp.get(section, key, fallback=default) if cp.has_section(section) else default

    def num(section: str, key: str, default, kind=float):
        raw = get(section, key)
        if raw is None:
            return default
        try:
            return kind(raw)
        except ValueError:
            raise ValueError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None

    kind = get("domain", "kind", "interval")
    panels = num("domain", "panels", None, int)
    lengths_raw = get("domain", "lengths")
    lengths = None
    if lengths_raw is not None:
        try:
            lengths = [float(v) for v in lengths_raw.split(",")]
        except ValueError:
            raise ValueError(f"[domain] lengths = {lengths_raw!r} is not a list of numbers") from None
    if kind == "interval":
        domain = Domain.interval(*(lengths or [math.pi]), **({"M": panels} if panels else {}))
    elif kind == "rectangle":
        domain = Domain.rectangle(*(lengths or [math.pi, math.pi]), **({"M": panels} if panels else {}))
    else:
        raise ValueError(f"unknown domain kind {kind!r}")

    eps_raw = get("forcing", "epsilon", "auto")
    epsilon = None if eps_raw.strip().lower() == "auto" else num("forcing", "epsilon", None)
    sw_raw = get("solver", "starting_weights", "true").strip().lower()
    if sw_raw not in ("true", "false", "yes", "no", "1", "0"):
        raise ValueError(f"[solver] starting_weights = {sw_raw!r} is not a boolean")
    window_raw = get("solver", "window", "auto")
    picard = PicardConfig(
        rho=num("solver", "rho", 0.5),
        tol=num("solver", "tol", 1e-10),
        max_iter=num("solver", "max_iter", 200, int),
        shrink=num("solver", "shrink", 0.5),
        window=None if window_raw.strip().lower() == "auto" else num("solver", "window", None, int),
    )
    return ProblemSpec(
        domain=domain,
        alpha=num("time", "alpha", 0.5),
        T=num("time", "T", 1.0),
        n=num("domain", "modes", 8, int),
        N=num("time", "N", 256, int),
        coefficients=get("coefficients", "spec", "const"),
        lam=num("coefficients", "lam", None),
        mu=num("coefficients", "mu", None),
        forcing=get("forcing", "expression", "0"),
        initial=get("initial", "field", "zero"),
        epsilon=epsilon,
        solver=get("solver", "method", "auto"),
        starting_weights=sw_raw in ("true", "yes", "1"),
        picard=picard,
    )


def load_config(path: str | Path) -> ProblemSpec:
    return parse_config(Path(path).read_text())


PRESETS = {
    "heat": dict(coefficients="const", initial="sine:1", forcing="0"),
    "forced": dict(coefficients="const", initial="zero", forcing="sin(t)*phi(1)"),
    "variable": dict(coefficients="separable", initial="parabola", forcing="0"),
    "reaction": dict(coefficients="reaction", initial="bump", forcing="0"),
}


def preset(name: str, **overrides) -> ProblemSpec:
    """Shipped problems on ``[0, pi]`` with ``alpha = 0.5``, ``T = 1``.

    ``heat``: ``a = I``, ``u0 = phi_1``; ``forced``: ``a = I``,
    ``f = sin(t) phi_1``; ``variable``: ``a = (1 + sin(t)/2) I``,
    ``u0 = x (pi - x)``; ``reaction``: ``a = I``, ``b = 1/2``,
    ``c = -1 + cos(t)/2``, ``u0`` a bump.
    """
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return ProblemSpec(**{**base, **overrides})


# {{{ resolution of the ProblemSpec strings


def _resolve_coefficients(spec: ProblemSpec) -> CoefficientSet:
    dim = spec.domain.dim
    text = spec.coefficients.strip()
    if text.lower() in COEFFICIENT_PRESETS:
        coeffs = coefficient_preset(text, dim)
        if spec.lam is not None or spec.mu is not None:
            coeffs = dataclasses.replace(
                coeffs,
                lam=coeffs.lam if spec.lam is None else spec.lam,
                mu=coeffs.mu if spec.mu is None else spec.mu,
            )
        return coeffs
    if text.startswith("csv:"):
        return read_coefficient_csv(text[4:].strip(), dim, spec.lam, spec.mu)
    return parse_coefficients(text, dim, spec.lam, spec.mu, spec.domain, spec.grid)


def _resolve_initial(spec: ProblemSpec, basis: EigenBasis):
    text = spec.initial.strip()
    if text.startswith("csv:"):
        return read_lattice_csv(text[4:].strip(), spec.domain)
    try:
        return spatial_preset(text, basis)
    except ValueError:
        if text.lower().startswith("sine:"):
            raise
    f = parse_field(text, spec.domain.dim, basis)
    return lambda *coords: f(*coords, 0.0)


def _resolve_forcing(spec: ProblemSpec, basis: EigenBasis):
    text = spec.forcing.strip()
    if text in ("0", "0.0", ""):
        return None
    return parse_field(text, spec.domain.dim, basis)


# }}}


@dataclass(frozen=True, eq=False)
class Solution:
    """Solved trajectory. ``field`` is the Picard result when both solvers ran."""

    spec: ProblemSpec
    field: SpectralField
    trace: SolveTrace
    system: GalerkinSystem
    traces: tuple[SolveTrace, ...] = ()
    energy: EnergyReport | None = None

    def sample(self, *coords: np.ndarray) -> np.ndarray:
        return self.field.sample(*coords)

    def lattice(self, points: int = 33) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
        """Uniform tensor lattice (boundary included) and values of shape ``(N+1, P)``."""
        axes = [np.linspace(0.0, L, points) for L in self.spec.domain.lengths]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = tuple(m.ravel() for m in mesh)
        return coords, self.field.sample(*coords)

    def write_csv(self, path: str | Path, points: int = 33, stride: int = 1) -> None:
        """Rows ``t, x[, y], u`` at 15 significant digits."""
        coords, values = self.lattice(points)
        t = self.field.grid.nodes
        names = ["t", "x"] + (["y"] if len(coords) == 2 else []) + ["u"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for j in range(0, t.size, stride):
                for p in range(values.shape[1]):
                    writer.writerow(
                        [f"{t[j]:.15g}"] + [f"{c[p]:.15g}" for c in coords] + [f"{values[j, p]:.15g}"]
                    )


def read_solution_csv(path: str | Path) -> tuple[np.ndarray, tuple[np.ndarray, ...], np.ndarray]:
    """Inverse of :meth:`Solution.write_csv`: nodes, lattice coordinates, values ``(times, P)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in r] for r in reader if r])
    if header not in (["t", "x", "u"], ["t", "x", "y", "u"]):
        raise ValueError(f"{path}: unexpected header {','.join(header)}")
    t = np.unique(rows[:, 0])
    P = rows.shape[0] // t.size
    if P * t.size != rows.shape[0]:
        raise ValueError(f"{path}: rows do not form a time x lattice table")
    coords = tuple(rows[:P, i] for i in range(1, len(header) - 1))
    return t, coords, rows[:, -1].reshape(t.size, P)


def _stage(name: str, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _build_system(spec: ProblemSpec, forcing=None, u0=None) -> GalerkinSystem:
    grid = spec.grid
    coeffs = _stage("coefficients", _resolve_coefficients, spec)
    _stage("ellipticity", validate_ellipticity, coeffs, spec.domain, grid)
    basis = _stage("eigenpairs", eigenpairs, spec.domain, spec.n)
    if forcing is None:
        forcing = _stage("forcing", _resolve_forcing, spec, basis)
    if u0 is None:
        u0 = _stage("initial", _resolve_initial, spec, basis)
    return _stage(
        "assembly", assemble, coeffs, forcing, u0, basis, grid, spec.epsilon, validate=False
    )


def _run(spec: ProblemSpec, system: GalerkinSystem, energy: bool) -> Solution:
    results = {}
    for method in spec.methods:
        if method == "picard":
            results[method] = _stage("picard", picard_solve, system, spec.alpha, spec.picard)
        else:
            results[method] = _stage(
                "l1", l1_step_solve, system, spec.alpha, spec.starting_weights
            )
    primary = "picard" if "picard" in results else "l1"
    field_, trace = results[primary]
    if len(results) == 2:
        other = results["l1"][0]
        trace.discrepancy = float(np.abs(field_.coefficients - other.coefficients).max())
    report = None
    if energy:
        report = _stage("energy", first_energy_check, field_, system, spec.alpha, False)
    return Solution(
        spec, field_, trace, system, tuple(r[1] for r in results.values()), report
    )


def solve(spec: ProblemSpec, energy: bool = False) -> Solution:
    """Validate, assemble, solve and package; failures carry the stage name."""
    return _run(spec, _build_system(spec), energy)


def spectral_h_minus_1_norm(coeffs: np.ndarray, basis: EigenBasis) -> float:
    """``(sum_k f_k^2 / lambda_k)^{1/2}``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.count,):
        raise ValueError(f"expected {basis.count} coefficients, got shape {coeffs.shape}")
    return float(np.sqrt((coeffs**2) @ (1.0 / basis.eigenvalues)))


# {{{ manufactured solutions


@dataclass(frozen=True)
class Manufactured:
    """``u*(x, t) = g(t) phi_mode(x)`` with ``g(t) = sum_i coef_i t^{power_i}``.

    Powers are 0 or at least ``alpha`` so that ``D^alpha g`` is bounded.
    """

    terms: tuple[tuple[float, float], ...]
    mode: int = 1
    label: str = ""

    @classmethod
    def polynomial(cls, coefficients: Sequence[float], mode: int = 1) -> Manufactured:
        terms = tuple((float(c), float(k)) for k, c in enumerate(coefficients) if c != 0)
        label = " + ".join(f"{c:g}*t^{k:g}" for c, k in terms)
        return cls(terms, mode, f"({label}) phi_{mode}")

    @classmethod
    def power(cls, gamma: float, mode: int = 1) -> Manufactured:
        return cls(((1.0, 0.0), (1.0, float(gamma))), mode, f"(1 + t^{gamma:g}) phi_{mode}")

    def g(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return sum(c * t**p for c, p in self.terms)

    def caputo_g(self, t: np.ndarray, alpha: float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for c, p in self.terms:
            if p == 0:
                continue
            scale = math.exp(gammaln(p + 1.0) - gammaln(p + 1.0 - alpha))
            with np.errstate(divide="ignore"):
                out += c * scale * np.where(t > 0, t ** (p - alpha), 0.0 if p > alpha else 1.0)
        return out

    def check(self, alpha: float, n: int) -> None:
        if not 1 <= self.mode <= n:
            raise ValueError(f"mode {self.mode} outside the basis of {n} modes")
        for _, p in self.terms:
            if p != 0 and p < alpha:
                raise ValueError(
                    f"power {p} in (0, alpha) gives an unbounded forcing; supported powers are 0 or >= alpha"
                )


def _spatially_constant(coeffs: CoefficientSet, spec: ProblemSpec) -> tuple[np.ndarray, np.ndarray]:
    """``s(t)`` and ``c(t)`` when ``a = s(t) I``, ``b = 0`` and ``c = c(t)``."""
    if coeffs.b is not None:
        raise ValueError("manufactured solutions need b = 0")
    coords, _ = spec.domain.quadrature
    pts = tuple(c[:: max(1, c.size // 64)] for c in coords)
    t = spec.grid.nodes
    a = coeffs.sample_a(pts, t)
    s = a[..., 0, 0]
    eye = np.eye(spec.domain.dim)
    if not np.allclose(a, s[..., None, None] * eye, rtol=0, atol=1e-12) or not np.allclose(
        s, s[:, :1], rtol=0, atol=1e-12
    ):
        raise ValueError("manufactured solutions need a = s(t) I, constant in space")
    c = np.zeros_like(t)
    if coeffs.c is not None:
        cv = np.broadcast_to(np.asarray(coeffs.c(*pts, t[:, None]), dtype=float), s.shape)
        if not np.allclose(cv, cv[:, :1], rtol=0, atol=1e-12):
            raise ValueError("manufactured solutions need c constant in space")
        c = cv[:, 0]
    return s[:, 0], c


@dataclass(frozen=True)
class ManufacturedReport:
    label: str
    alpha: float
    Ns: tuple[int, ...]
    final_errors: np.ndarray
    l2l2_errors: np.ndarray
    sup_errors: np.ndarray
    starting_weights: bool

    @staticmethod
    def _order(N: Sequence[int], err: np.ndarray) -> float:
        return float(-np.polyfit(np.log(np.asarray(N, float)), np.log(err), 1)[0])

    @property
    def at_roundoff(self) -> bool:
        return bool(self.sup_errors.max() < 1e-9)

    @property
    def final_order(self) -> float:
        """Least-squares slope of ``log error(T)`` against ``log h``."""
        return self._order(self.Ns, self.final_errors)

    @property
    def sup_order(self) -> float:
        return self._order(self.Ns, self.sup_errors)

    @property
    def pairwise_orders(self) -> np.ndarray:
        return np.log2(self.final_errors[:-1] / self.final_errors[1:])

    def rows(self) -> list[list[str]]:
        out = [["N", "error_T", "error_L2L2", "error_sup", "order_T"]]
        orders = [math.nan, *self.pairwise_orders]
        for N, e, l, s, o in zip(self.Ns, self.final_errors, self.l2l2_errors, self.sup_errors, orders):
            out.append([str(N), f"{e:.15g}", f"{l:.15g}", f"{s:.15g}", f"{o:.15g}"])
        return out

    def to_text(self) -> str:
        lines = [
            f"manufactured: {self.label}",
            f"alpha: {self.alpha:.15g}",
            f"starting weights: {self.starting_weights}",
        ]
        lines += [",".join(r) for r in self.rows()]
        if self.at_roundoff:
            lines.append("errors at roundoff level: the scheme reproduces u* exactly, no order to fit")
        lines.append(f"fitted order (final time): {self.final_order:.4f}")
        lines.append(f"fitted order (sup over time): {self.sup_order:.4f}")
        return "\n".join(lines)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(self.rows())


def manufactured_spec(alpha: float = 0.5, **overrides) -> ProblemSpec:
    """Base problem for manufactured studies: ``a = I``, no mollification, L1 solver."""
    return ProblemSpec(**{"alpha": alpha, "epsilon": 0.0, "solver": "l1", "n": 4, **overrides})


def manufactured_error(
    spec: ProblemSpec,
    exact: Manufactured,
    Ns: Sequence[int] = (128, 256, 512, 1024),
) -> ManufacturedReport:
    """Errors of the solve against ``u*`` on every grid in *Ns*.

    The forcing ``f = (D^alpha g + (s lambda_j - c) g) phi_j`` is built in
    closed form; ``spec.forcing``, ``spec.initial`` and ``spec.N`` are
    ignored. Errors are L2 in space (Parseval on the coefficients).
    """
    exact.check(spec.alpha, spec.n)
    finals, l2l2, sups = [], [], []
    for N in Ns:
        sp = spec.replace(N=int(N))
        coeffs = _resolve_coefficients(sp)
        s, c = _spatially_constant(coeffs, sp)
        basis = eigenpairs(sp.domain, sp.n)
        t = sp.grid.nodes
        lam_j = basis.eigenvalues[exact.mode - 1]
        g = exact.g(t)
        F = np.zeros((N + 1, sp.n))
        F[:, exact.mode - 1] = exact.caputo_g(t, sp.alpha) + (s * lam_j - c) * g
        u0 = np.zeros(sp.n)
        u0[exact.mode - 1] = g[0]
        system = _build_system(sp, forcing=F, u0=u0)
        sol = _run(sp, system, energy=False)
        err = sol.field.coefficients.copy()
        err[:, exact.mode - 1] -= g
        norms = np.sqrt((err**2).sum(axis=1))
        finals.append(norms[-1])
        sups.append(norms.max())
        l2l2.append(math.sqrt(sp.grid.h * (0.5 * norms[0] ** 2 + (norms[1:-1] ** 2).sum() + 0.5 * norms[-1] ** 2)))
    return ManufacturedReport(
        exact.label, spec.alpha, tuple(int(N) for N in Ns), np.array(finals), np.array(l2l2),
        np.array(sups), spec.starting_weights,
    )


# }}}

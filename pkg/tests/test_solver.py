import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tfde.basis import Domain, eigenpairs
from tfde.energy import a_priori_check
from tfde.mittag import ml
from tfde.solver import (
    MAX_MODES,
    PRESETS,
    Manufactured,
    ProblemSpec,
    StageError,
    manufactured_error,
    manufactured_spec,
    parse_config,
    preset,
    read_solution_csv,
    solve,
    spectral_h_minus_1_norm,
)
from tfde.volterra import PicardConfig, residual


def l2l2(diff, h):
    sq = (diff**2).sum(axis=1)
    return math.sqrt(h * (0.5 * sq[0] + sq[1:-1].sum() + 0.5 * sq[-1]))


class TestSpec:
    @pytest.mark.parametrize(
        "kwargs",
        [{"n": 0}, {"n": MAX_MODES + 1}, {"N": 2**20 + 1}, {"alpha": 1.0}, {"solver": "rk4"}, {"epsilon": -1.0}],
    )
    def test_guards(self, kwargs):
        with pytest.raises(ValueError):
            ProblemSpec(**kwargs)

    def test_methods(self):
        assert ProblemSpec(N=4096).methods == ("picard", "l1")
        assert ProblemSpec(N=8192).methods == ("l1",)
        assert ProblemSpec(solver="both", N=8192).methods == ("picard", "l1")

    @given(
        st.floats(0.05, 0.95),
        st.floats(0.1, 10),
        st.integers(1, 128),
        st.integers(16, 4096),
        st.sampled_from(["auto", "both", "picard", "l1"]),
        st.one_of(st.none(), st.floats(0, 0.5)),
        st.booleans(),
        st.sampled_from(["interval", "rectangle"]),
    )
    def test_config_roundtrip(self, alpha, T, n, N, solver, eps, sw, kind):
        domain = Domain.interval(2.0) if kind == "interval" else Domain.rectangle(1.0, 3.0, M=16)
        spec = ProblemSpec(
            domain=domain, alpha=alpha, T=T, n=n, N=N, coefficients="a: 2*I; c: -t", lam=2.0, mu=2.0,
            forcing="sin(t)*phi(1)", initial="bump", epsilon=eps, solver=solver, starting_weights=sw,
            picard=PicardConfig(rho=0.4, tol=1e-9, window=32),
        )
        back = parse_config(spec.to_config())
        assert back == spec and back.hash == spec.hash

    @pytest.mark.parametrize(
        "text",
        [
            "[mesh]\nkind = interval\n",
            "[time]\nalpha = 0.5\nsteps = 3\n",
            "[time]\nalpha = half\n",
            "[domain]\nkind = disk\n",
            "[solver]\nstarting_weights = maybe\n",
            "not an ini file",
        ],
    )
    def test_malformed(self, text):
        with pytest.raises(ValueError):
            parse_config(text)

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="heat"):
            preset("wave")


class TestSolve:
    def test_heat_against_relaxation(self):
        sol = solve(preset("heat", N=2048, n=8, solver="l1"))
        coords, values = sol.lattice(17)
        t = sol.field.grid.nodes
        exact = ml(0.5, -np.sqrt(t))[:, None] * math.sqrt(2 / math.pi) * np.sin(coords[0])[None, :]
        assert np.abs(values - exact).max() < 1e-2

    def test_zero_data(self):
        sol = solve(preset("heat", initial="zero", N=64))
        assert np.all(sol.field.coefficients == 0.0)

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_presets_residual_and_discrepancy(self, name):
        sol = solve(preset(name, N=256))
        assert sol.trace.solver == "picard" and len(sol.traces) == 2
        assert sol.trace.discrepancy is not None and sol.trace.discrepancy < 1e-2
        res = residual(sol.field, sol.system, sol.spec.alpha).values.max()
        assert res <= 1e-6 * max(1.0, np.abs(sol.field.coefficients).max())

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_a_priori_surrogate(self, name):
        sol = solve(preset(name, N=256, solver="l1"))
        assert a_priori_check(sol.field, sol.system, sol.spec.alpha).passed

    # the parabola's sine coefficients decay like k^-3, so its preset needs more modes
    @pytest.mark.parametrize("name,n", [("heat", 8), ("forced", 8), ("variable", 16)])
    def test_mode_refinement(self, name, n):
        coarse = solve(preset(name, N=256, n=n, epsilon=0.1, solver="l1"))
        fine = solve(preset(name, N=256, n=2 * n, epsilon=0.1, solver="l1"))
        diff = fine.field.coefficients.copy()
        diff[:, :n] -= coarse.field.coefficients
        assert l2l2(diff, coarse.field.grid.h) < 1e-4

    def test_deterministic(self):
        a = solve(preset("reaction", N=128))
        b = solve(preset("reaction", N=128))
        assert a.field.coefficients.tobytes() == b.field.coefficients.tobytes()
        assert a.trace.report() == b.trace.report()

    def test_energy_attached(self):
        sol = solve(preset("forced", N=128, solver="l1"), energy=True)
        assert sol.energy is not None and sol.energy.passed

    @pytest.mark.parametrize(
        "overrides,stage",
        [
            ({"coefficients": "a: x*y*"}, "coefficients"),
            ({"coefficients": "a: (1+0.9*sin(8*t))*I", "lam": 0.5, "mu": 2.0}, "ellipticity"),
            ({"forcing": "psi(1)"}, "forcing"),
            ({"initial": "csv:/nonexistent/u0.csv"}, "initial"),
            ({"epsilon": 1e-6}, "assembly"),
            ({"solver": "picard", "picard": PicardConfig(max_iter=1, tol=1e-15)}, "picard"),
        ],
    )
    def test_stage_labels(self, overrides, stage):
        with pytest.raises(StageError) as info:
            solve(preset("heat", N=64, **overrides))
        assert info.value.stage == stage
        assert str(info.value).startswith(f"[{stage}]")

    def test_solution_csv_roundtrip(self, tmp_path):
        sol = solve(preset("reaction", N=32, domain=Domain.rectangle(), n=4, solver="l1"))
        sol.write_csv(tmp_path / "u.csv", points=5, stride=4)
        t, coords, values = read_solution_csv(tmp_path / "u.csv")
        np.testing.assert_allclose(t, sol.field.grid.nodes[::4], rtol=1e-14)
        ref = sol.field.sample(*coords)[::4]
        np.testing.assert_allclose(values, ref, rtol=1e-13, atol=1e-15)


class TestDualNorm:
    def test_examples(self):
        b = eigenpairs(Domain.interval(), 3)
        assert spectral_h_minus_1_norm([1, 0, 0], b) == pytest.approx(1.0)
        assert spectral_h_minus_1_norm([0, 1, 0], b) == pytest.approx(0.5)
        assert spectral_h_minus_1_norm([1, 1, 0], b) == pytest.approx(math.sqrt(1.25))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            spectral_h_minus_1_norm([1, 0], eigenpairs(Domain.interval(), 3))


class TestManufactured:
    def test_smooth_order(self):
        rep = manufactured_error(manufactured_spec(), Manufactured.polynomial([1, 0, 1]))
        assert rep.final_order >= 1.2
        assert np.all(np.diff(rep.final_errors) < 0)

    def test_stationary(self):
        for solver in ("l1", "picard"):
            rep = manufactured_error(manufactured_spec(solver=solver), Manufactured.polynomial([1]), Ns=(512,))
            assert rep.sup_errors[0] < 1e-6

    def test_power_order_reduction(self):
        spec = manufactured_spec(starting_weights=False)
        rep = manufactured_error(spec, Manufactured.power(0.5))
        assert rep.final_order >= 0.5
        smooth = manufactured_error(spec, Manufactured.polynomial([1, 0, 1]))
        assert rep.sup_order < smooth.sup_order
        assert "fitted order" in rep.to_text()

    def test_power_with_starting_weights_is_exact(self):
        rep = manufactured_error(manufactured_spec(), Manufactured.power(0.5), Ns=(128, 256))
        assert rep.at_roundoff and "roundoff" in rep.to_text()

    def test_variable_coefficient(self):
        spec = manufactured_spec(coefficients="a: (1 + 0.5*sin(t))*I; c: -1", lam=0.5, mu=1.5)
        rep = manufactured_error(spec, Manufactured.polynomial([1, 0, 1], mode=2))
        assert rep.final_order >= 1.2

    @pytest.mark.parametrize(
        "exact,overrides",
        [
            (Manufactured.power(0.2), {}),
            (Manufactured.polynomial([1], mode=9), {}),
            (Manufactured.polynomial([1]), {"coefficients": "reaction"}),
            (Manufactured.polynomial([1]), {"coefficients": "a: (1+x/4)*I", "lam": 1, "mu": 2}),
        ],
    )
    def test_unsupported(self, exact, overrides):
        with pytest.raises(ValueError):
            manufactured_error(manufactured_spec(**overrides), exact, Ns=(32,))

    def test_error_csv(self, tmp_path):
        rep = manufactured_error(manufactured_spec(), Manufactured.polynomial([1, 0, 1]), Ns=(32, 64))
        rep.write_csv(tmp_path / "e.csv")
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines[0] == "N,error_T,error_L2L2,error_sup,order_T" and len(lines) == 3

import csv
import math
from pathlib import Path

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import erfc, gamma

from tfde.fraccalc import TimeGrid, TimeSeries
from tfde.mittag import (
    GronwallError,
    MLDomainError,
    MLParams,
    gronwall_bound,
    ml,
    ml_regime,
)
from tfde.volterra import picard_solve, scalar_system

FIXTURE = Path(__file__).parent / "fixtures" / "ml_reference.csv"


def load_fixture():
    with open(FIXTURE, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            (float(r["alpha"]), float(r["beta"]), float(r["z"]), mpmath.mpf(r["value"]))
            for r in reader
        ]


class TestParams:
    @pytest.mark.parametrize("alpha,beta", [(0, 1), (2.5, 1), (-1, 1), (1, 0), (1, -1), (math.nan, 1)])
    def test_rejects(self, alpha, beta):
        with pytest.raises(MLDomainError):
            MLParams(alpha, beta)

    def test_beta_twice(self):
        with pytest.raises(TypeError):
            ml(MLParams(0.5, 1.0), 1.0, beta=2.0)

    @pytest.mark.parametrize("z", [800.0, -5000.0, math.inf])
    def test_horizon(self, z):
        with pytest.raises(MLDomainError):
            ml(1.0, z)


class TestValues:
    def test_exponential(self):
        assert ml(1.0, 1.0) == pytest.approx(math.e, rel=1e-15)

    @given(st.floats(0.05, 2.0), st.floats(0.05, 5.0))
    def test_origin(self, alpha, beta):
        assert ml(alpha, 0.0, beta) == pytest.approx(1 / gamma(beta), rel=1e-14)

    def test_erfc_identity(self):
        # E_{1/2}(z) = exp(z^2) erfc(-z)
        for z in (-1.0, -3.0, 0.5, 2.0):
            assert ml(0.5, z) == pytest.approx(math.exp(z * z) * erfc(-z), rel=1e-12)
        assert ml(0.5, -1.0) == pytest.approx(0.4275836, abs=1e-7)

    @given(st.floats(-30, 30).filter(lambda z: abs(z) > 1e-3))
    def test_e12(self, z):
        assert ml(1.0, z, 2.0) == pytest.approx(math.expm1(z) / z, rel=1e-10)

    @given(st.floats(0, 400))
    def test_cosh(self, z):
        assert ml(2.0, z) == pytest.approx(math.cosh(math.sqrt(z)), rel=1e-10)

    @given(st.floats(-60, 0))
    def test_cos(self, z):
        assert ml(2.0, z) == pytest.approx(math.cos(math.sqrt(-z)), abs=1e-12)

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8, 1.0, 1.5])
    def test_monotone(self, alpha):
        # E_a(x) overflows doubles beyond x = 700^a
        x = np.linspace(-10, min(10.0, 700.0**alpha), 401)
        if alpha > 1:
            # complete monotonicity of E_a(-x) only holds for alpha <= 1
            x = x[x >= 0]
        assert np.all(np.diff(ml(alpha, x)) > 0)

    def test_array_shape(self):
        z = np.linspace(-1, 1, 6).reshape(2, 3)
        assert ml(0.5, z).shape == (2, 3)

    def test_fixture(self):
        worst = 0.0
        for alpha, beta, z, ref in load_fixture():
            if abs(z) > 50:
                continue
            val = ml(alpha, z, beta)
            err = abs(mpmath.mpf(val) - ref) / max(abs(ref), mpmath.mpf("1e-300"))
            worst = max(worst, float(err))
        assert worst <= 1e-10

    def test_regimes(self):
        assert ml_regime(0.5, 1.0, 0.0) == "origin"
        assert ml_regime(0.5, 1.0, 3.0) == "series"
        assert ml_regime(0.5, 1.0, -50.0) == "asymptotic"
        assert ml_regime(1.5, 1.0, -40.0) == "extended"


def series(N, values):
    return TimeSeries(TimeGrid(1.0, N), np.broadcast_to(values, (N + 1,)).copy())


class TestGronwall:
    def test_zero_g(self):
        g = TimeGrid(1.0, 32)
        a = TimeSeries(g, 1 + g.nodes)
        out = gronwall_bound(a, series(32, 0.0), 0.5)
        np.testing.assert_array_equal(out.values, a.values)

    @pytest.mark.parametrize("a0,g0,alpha", [(1.0, 1.0, 0.5), (2.0, 3.0, 0.3), (0.5, 0.7, 0.9)])
    def test_constant_data(self, a0, g0, alpha):
        N = 256
        out = gronwall_bound(series(N, a0), series(N, g0), alpha).values
        t = TimeGrid(1.0, N).nodes
        np.testing.assert_allclose(out, a0 * ml(alpha, g0 * t**alpha), rtol=1e-12)

    def test_dominates_equality_solution(self):
        # w = 1 + I^a w solved as D^a w = w, w(0) = 1
        N = 16384
        grid = TimeGrid(1.0, N)
        w, _ = picard_solve(scalar_system(grid, -1.0), 0.5)
        bound = gronwall_bound(series(N, 1.0), series(N, 1.0), 0.5).values
        assert np.all(w.coefficients[:, 0] <= bound + 1e-8)

    @given(
        st.lists(st.floats(0, 3), min_size=33, max_size=33),
        st.lists(st.floats(0, 0.1), min_size=33, max_size=33),
        st.floats(0.1, 0.9),
    )
    def test_dominates_input(self, a, dg, alpha):
        grid = TimeGrid(1.0, 32)
        g = np.cumsum(dg)
        out = gronwall_bound(TimeSeries(grid, a), TimeSeries(grid, g), alpha).values
        assert np.all(out >= np.array(a))

    @pytest.mark.parametrize("T", [1.0, 5.0, 10.0])
    def test_converges_for_bounded_g(self, T):
        grid = TimeGrid(T, 64)
        g = TimeSeries(grid, 1 + grid.nodes / T)
        out = gronwall_bound(TimeSeries(grid, np.ones(65)), g, 0.3)
        assert np.isfinite(out.values).all()

    def test_rejects_decreasing_g(self):
        grid = TimeGrid(1.0, 8)
        with pytest.raises(GronwallError, match="node 5"):
            g = np.ones(9)
            g[5:] = 0.5
            gronwall_bound(series(8, 1.0), TimeSeries(grid, g), 0.5)

    def test_rejects_negative(self):
        with pytest.raises(GronwallError):
            gronwall_bound(series(8, -1.0), series(8, 1.0), 0.5)

    def test_overflow(self):
        with pytest.raises(GronwallError, match="overflows"):
            gronwall_bound(series(8, 1.0), series(8, 1e3), 0.1)

    def test_term_cap(self):
        with pytest.raises(GronwallError):
            gronwall_bound(series(8, 1.0), series(8, 50.0), 0.5, max_terms=5)

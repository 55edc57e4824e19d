import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tfde.assembly import (
    CoefficientSet,
    EllipticityError,
    ExtensionMode,
    _constant,
    assemble,
    check_ellipticity_samples,
    coefficient_preset,
    forcing_delta_proxy,
    mollifier_weights,
    mollify,
    mollify_array,
    parse_coefficients,
    parse_field,
    read_coefficient_csv,
    validate_ellipticity,
)
from tfde.basis import Domain, eigenpairs
from tfde.fraccalc import TimeGrid, TimeSeries, rl_derivative


def l2(values, grid):
    return math.sqrt(grid.h * (values[1:-1] ** 2).sum() + 0.5 * grid.h * (values[0] ** 2 + values[-1] ** 2))


def nova_check(beta, eps=0.1, N=2048):
    """``||RL^beta mollify(t)|| <= 2 exp(2 pi sqrt(beta(1-beta))) ||RL^beta t||``."""
    grid = TimeGrid(1.0, N)
    f = TimeSeries.from_function(grid, lambda t: t)
    smooth = mollify(f, eps, ExtensionMode.ODD)
    lhs = rl_derivative(smooth, beta).with_origin(0.0).values
    rhs = rl_derivative(f, beta).with_origin(0.0).values
    const = 2 * math.exp(2 * math.pi * math.sqrt(beta * (1 - beta)))
    return l2(lhs, grid), const * l2(rhs, grid)


class TestMollifier:
    @given(st.floats(0.02, 0.5))
    def test_weights_unit_mass(self, eps):
        w = mollifier_weights(eps, 0.01)
        assert w[0] + 2 * w[1:].sum() == pytest.approx(1.0, abs=1e-15)
        assert np.all(w >= 0)

    def test_rejects_unresolved(self):
        with pytest.raises(ValueError):
            mollifier_weights(0.01, 0.01)
        with pytest.raises(ValueError):
            mollify(TimeSeries.from_function(TimeGrid(1.0, 16), np.sin), 0.01)

    @given(st.floats(-100, 100), st.floats(0.05, 0.4))
    def test_constant_preserved(self, k, eps):
        grid = TimeGrid(1.0, 128)
        out = mollify(TimeSeries(grid, np.full(129, k)), eps, ExtensionMode.EVEN).values
        np.testing.assert_array_equal(out, k)

    @given(st.floats(0.05, 0.4))
    def test_odd_vanishes_at_origin(self, eps):
        grid = TimeGrid(1.0, 256)
        out = mollify(TimeSeries.from_function(grid, lambda t: 1 + np.cos(3 * t)), eps, "odd").values
        assert out[0] == 0.0

    def test_second_order_interior(self):
        grid = TimeGrid(math.pi, 8192)
        f = TimeSeries.from_function(grid, np.cos)
        j = grid.N // 3
        errs = [abs(mollify(f, e, "even").values[j] - f.values[j]) for e in (0.2, 0.1, 0.05)]
        assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
        assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)

    def test_l2_convergence(self):
        grid = TimeGrid(math.pi, 4096)
        f = TimeSeries.from_function(grid, np.cos)
        errs = [l2(mollify(f, e, "even").values - f.values, grid) for e in (0.2, 0.1, 0.05, 0.025)]
        assert all(a > b for a, b in zip(errs, errs[1:]))

    @pytest.mark.parametrize("beta", [0.25, 0.5, 0.75])
    def test_fractional_norm_bound(self, beta):
        lhs, rhs = nova_check(beta)
        assert lhs <= rhs + 1e-3

    def test_vector_signal(self):
        grid = TimeGrid(1.0, 64)
        V = np.stack([np.sin(grid.nodes), grid.nodes], axis=1)
        out = mollify_array(V, grid, 0.1, "zero")
        np.testing.assert_array_equal(out[:, 0], mollify_array(V[:, 0], grid, 0.1, "zero"))


class TestEllipticity:
    grid = TimeGrid(1.0, 16)

    def test_identity_zero_margin(self):
        rep = validate_ellipticity(coefficient_preset("const", 2), Domain.rectangle(), self.grid)
        assert rep.passed and rep.lower_margin == 0 and rep.upper_margin == 0

    def test_witness(self):
        a = np.zeros((1, 1, 2, 2))
        a[..., 0, 0], a[..., 1, 1] = 2.0, 0.5
        with pytest.raises(EllipticityError) as info:
            check_ellipticity_samples(a, 1.0, 2.0, (np.array([0.3]), np.array([0.4])), np.array([0.5]))
        np.testing.assert_array_equal(info.value.xi, [0.0, 1.0])
        assert info.value.t == 0.5 and info.value.x == (0.3, 0.4)

    def test_separable_passes(self):
        assert validate_ellipticity(coefficient_preset("separable", 2), Domain.rectangle(), self.grid).passed

    def test_entry_bound(self):
        coeffs = parse_coefficients("a: [[1, 0.9], [0.9, 1]]", 2, lam=0.1, mu=1.95)
        with pytest.raises(EllipticityError):
            # largest eigenvalue 1.9 exceeds mu
            validate_ellipticity(parse_coefficients("a: [[1, 0.9], [0.9, 1]]", 2, lam=0.1, mu=0.95), Domain.rectangle(), self.grid)
        assert validate_ellipticity(coeffs, Domain.rectangle(), self.grid).passed

    def test_asymmetric_rejected(self):
        coeffs = parse_coefficients("a: [[1, 0.1], [0, 1]]", 2, lam=0.5, mu=2)
        with pytest.raises(EllipticityError, match="symmetric"):
            validate_ellipticity(coeffs, Domain.rectangle(), self.grid)

    def test_mollified_keeps_bounds(self):
        grid = TimeGrid(1.0, 512)
        t = grid.nodes
        s = mollify_array(1 + 0.5 * np.sin(8 * t), grid, 0.1, "even")
        a = (s[:, None, None, None] * np.eye(2)).repeat(3, axis=1)
        pts = (np.zeros(3), np.zeros(3))
        assert check_ellipticity_samples(a, 0.5, 1.5, pts, t).passed


class TestGrammar:
    def test_scalar(self):
        c = parse_coefficients("a: (1+0.5*sin(t))*I; b: 0; c: 0", 2, domain=Domain.rectangle(), grid=TimeGrid(math.pi, 64))
        assert c.b is None and c.c is None
        assert c.lam == pytest.approx(1.0, abs=0.05) and c.mu == pytest.approx(1.5, abs=1e-3)
        assert c.a[0][0](0.0, 0.0, math.pi / 2) == pytest.approx(1.5)

    def test_one_dimensional(self):
        c = parse_coefficients("a: 2 + x; c: -t", 1, lam=2, mu=2 + math.pi)
        assert c.a[0][0](1.0, 0.0) == pytest.approx(3.0)
        assert c.c(0.0, 2.0) == pytest.approx(-2.0)

    @pytest.mark.parametrize(
        "text", ["b: 1", "a: I; a: I", "a: I; d: 1", "a: x*y", "a I", "a: [[1, 0]]", "a: I; b: [1]"]
    )
    def test_errors(self, text):
        with pytest.raises(ValueError):
            parse_coefficients(text, 2, lam=1, mu=1)

    def test_field_phi(self):
        b = eigenpairs(Domain.interval(), 3)
        f = parse_field("sin(t)*phi(2)", 1, b)
        x = np.array([0.3])
        assert f(x, 1.0)[0] == pytest.approx(math.sin(1.0) * math.sqrt(2 / math.pi) * math.sin(0.6))

    def test_csv(self, tmp_path):
        path = tmp_path / "a.csv"
        xs, ts = np.linspace(0, math.pi, 5), np.linspace(0, 1, 3)
        with open(path, "w") as fh:
            fh.write("x,t,value\n")
            for x in xs:
                for t in ts:
                    fh.write(f"{x},{t},{1 + t}\n")
        c = read_coefficient_csv(path, 1)
        assert (c.lam, c.mu) == (1.0, 2.0)
        assert c.a[0][0](np.array([1.0]), np.array([0.25]))[0] == pytest.approx(1.25)


class TestAssemble:
    grid = TimeGrid(math.pi, 64)

    def test_laplacian(self):
        b = eigenpairs(Domain.interval(), 6)
        s = assemble(coefficient_preset("const", 1), None, None, b, self.grid)
        np.testing.assert_allclose(s.A, np.broadcast_to(np.diag(np.arange(1, 7) ** 2.0), s.A.shape), atol=1e-8)
        assert s.B is None and s.C is None and s.is_decoupled

    def test_constant_reaction(self):
        b = eigenpairs(Domain.rectangle(), 5)
        coeffs = CoefficientSet.isotropic(2, _constant(1.0), 1, 1, c=_constant(-0.7))
        s = assemble(coeffs, None, None, b, self.grid, epsilon=0)
        np.testing.assert_allclose(s.C, np.broadcast_to(-0.7 * np.eye(5), s.C.shape), atol=1e-8)

    def test_separable_factorization(self):
        b = eigenpairs(Domain.interval(), 4)
        eps = 0.25
        s = assemble(coefficient_preset("separable", 1), None, None, b, self.grid, epsilon=eps)
        smooth = mollify_array(1 + 0.5 * np.sin(self.grid.nodes), self.grid, eps, "even")
        expected = smooth[:, None, None] * np.diag(np.arange(1, 5) ** 2.0)
        np.testing.assert_allclose(s.A, expected, atol=1e-8)

    def test_positive_definite(self):
        b = eigenpairs(Domain.rectangle(), 8)
        coeffs = coefficient_preset("checkerboard", 2)
        s = assemble(coeffs, None, None, b, self.grid)
        rng = np.random.default_rng(1)
        v = rng.normal(size=(200, 8))
        q = np.einsum("pi,tij,pj->tp", v, s.A, v) / (v**2).sum(axis=1)
        assert q.min() >= coeffs.lam * b.eigenvalues[0] - 1e-8
        np.testing.assert_allclose(s.A, np.swapaxes(s.A, 1, 2), atol=1e-14)

    def test_forcing_odd_extension(self):
        b = eigenpairs(Domain.interval(), 3)
        f = parse_field("(1 + t)*phi(1)", 1, b)
        s = assemble(coefficient_preset("const", 1), f, None, b, self.grid, epsilon=0.2)
        assert np.all(s.F[0] == 0.0)
        np.testing.assert_allclose(s.F_raw[:, 0], 1 + self.grid.nodes, atol=1e-12)
        assert forcing_delta_proxy(s) > 0

    def test_no_mollification(self):
        b = eigenpairs(Domain.interval(), 3)
        f = parse_field("(1 + t)*phi(1)", 1, b)
        s = assemble(coefficient_preset("const", 1), f, None, b, self.grid, epsilon=0)
        np.testing.assert_array_equal(s.F, s.F_raw)
        assert forcing_delta_proxy(s) == 0.0

    def test_drift_matrix(self):
        # b <phi_k', phi_m> on [0, pi] with b = 1/2
        b = eigenpairs(Domain.interval(), 3)
        coeffs = coefficient_preset("reaction", 1)
        s = assemble(coeffs, None, None, b, self.grid, epsilon=0)
        k, m = 2, 1
        exact = 0.5 * (2 / math.pi) * k * (1 - (-1) ** (k + m)) * m / (m * m - k * k)
        assert s.B[0, m - 1, k - 1] == pytest.approx(exact, abs=1e-10)
        assert not s.is_decoupled

    def test_rejects_bad_shapes(self):
        b = eigenpairs(Domain.interval(), 3)
        with pytest.raises(ValueError):
            assemble(coefficient_preset("const", 1), np.zeros((3, 3)), None, b, self.grid)
        with pytest.raises(ValueError):
            assemble(coefficient_preset("const", 2), None, None, b, self.grid)

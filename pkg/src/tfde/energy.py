"""Numerical checks of the energy identities and estimates.

Trajectories are sampled on a uniform grid and read as their piecewise-linear
interpolants ``P w``. For such data the singular memory integral

    G(t_n) = int_0^{t_n} (t_n - tau)^{-alpha-1} |w(t_n) - P w(tau)|^2 dtau

is a finite sum of exact power moments (the numerator vanishes quadratically
at ``tau = t_n``), and the endpoint weights ``t^-alpha`` and ``(T-t)^-alpha``
are integrated exactly on the first/last interval and by 8-point
Gauss-Legendre elsewhere. Caputo derivatives use the L1 scheme, so the
remaining defect of an identity is quadrature error of the L1 rule on
``|w|^2`` and of the outer trapezoid sums.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import integrate
from scipy.special import gamma, gammaln

from .assembly import GalerkinSystem, forcing_delta_proxy
from .basis import SpectralField
from .fraccalc import (
    L1Differentiator,
    ProductIntegrator,
    TimeGrid,
    TimeSeries,
    check_order,
)
from .mittag import ml

__all__ = [
    "EnergyReport",
    "EnergyEstimateViolation",
    "memory_integral",
    "caputo_energy_identity_residual",
    "rl_quadratic_identity_residual",
    "rl_lower_bound",
    "first_energy_check",
    "a_priori_check",
    "h_alpha_half_seminorm",
    "initial_trace_check",
    "counterexample_demo",
    "TraceReport",
    "CounterexampleReport",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class EnergyEstimateViolation(AssertionError):
    def __init__(self, report: EnergyReport) -> None:
        self.report = report
        super().__init__("energy estimate violated\n" + report.to_text())


@dataclass(frozen=True)
class EnergyReport:
    """Named scalar terms, optional nodal series, and a residual or margin."""

    name: str
    alpha: float
    T: float
    N: int
    terms: Mapping[str, float]
    residual: float
    nodal: Mapping[str, np.ndarray] = field(default_factory=dict)
    passed: bool | None = None

    def to_text(self) -> str:
        lines = [f"report: {self.name}", f"alpha: {self.alpha:.15g}", f"T: {self.T:.15g}", f"N: {self.N}"]
        lines += [f"{k}: {v:.15g}" for k, v in self.terms.items()]
        lines.append(f"residual: {self.residual:.15g}")
        if self.passed is not None:
            lines.append(f"passed: {self.passed}")
        return "\n".join(lines)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["term", "value"])
            for k, v in self.terms.items():
                writer.writerow([k, f"{v:.15g}"])
            writer.writerow(["residual", f"{self.residual:.15g}"])


# {{{ helpers


def _as_matrix(w) -> tuple[TimeGrid, np.ndarray]:
    """Samples as ``(N+1, d)``; a SpectralField contributes its coefficients (Parseval)."""
    if isinstance(w, SpectralField):
        return w.grid, w.coefficients
    if isinstance(w, TimeSeries):
        w.require_full()
        return w.grid, w.values.reshape(w.grid.N + 1, -1)
    raise TypeError(f"expected TimeSeries or SpectralField, got {type(w).__name__}")


def _require_nodes(grid: TimeGrid, minimum: int = 16) -> None:
    if grid.N < minimum:
        raise ValueError(f"need at least N = {minimum} steps, got {grid.N}")


def _power_moment(p: np.ndarray, h: float, q: float) -> np.ndarray:
    """``int_p^{p+h} r^q dr`` for ``p = j h`` with integer ``j >= 1``, without cancellation."""
    j = p / h
    e = q + 1.0
    # h^e j^e ((1 + 1/j)^e - 1) / e
    return h**e * j**e * np.expm1(e * np.log1p(1.0 / j)) / e


def memory_integral(w: np.ndarray, h: float, alpha: float) -> np.ndarray:
    """``G(t_n)`` for every node of piecewise-linear samples ``w`` of shape ``(N+1, d)``."""
    N = w.shape[0] - 1
    slopes = np.diff(w, axis=0) / h
    G = np.zeros(N + 1)
    # interval adjacent to t_n: |w_n - P w(tau)|^2 = r^2 |s|^2, r = t_n - tau
    near = (slopes**2).sum(axis=1) * h ** (2.0 - alpha) / (2.0 - alpha)
    G[1:] = near
    if N < 2:
        return G
    lag = np.arange(1, N, dtype=float) * h  # p for intervals k = n-2, n-3, ..., 0
    m_a = _power_moment(lag, h, -alpha - 1.0)
    m_b = _power_moment(lag, h, -alpha)
    m_c = _power_moment(lag, h, 1.0 - alpha)
    for n in range(2, N + 1):
        k = np.arange(n - 1)  # intervals [t_k, t_{k+1}] with k + 1 < n
        p_idx = n - k - 2  # index into lag: p = (n-k-1) h
        s = slopes[k]
        P = w[n] - w[k + 1] - lag[p_idx][:, None] * s
        G[n] += (
            (P**2).sum(axis=1) @ m_a[p_idx]
            + 2.0 * (P * s).sum(axis=1) @ m_b[p_idx]
            + (s**2).sum(axis=1) @ m_c[p_idx]
        )
    return G


def _weighted_square_integrals(w: np.ndarray, h: float, alpha: float, reverse: bool = False) -> np.ndarray:
    """Per-interval ``int t^-alpha |P w|^2`` (or ``(T-t)^-alpha`` when *reverse*)."""
    if reverse:
        w = w[::-1]
    N = w.shape[0] - 1
    s = np.diff(w, axis=0) / h
    out = np.empty(N)
    w0, s0 = w[0], s[0]
    out[0] = (
        (w0 @ w0) * h ** (1 - alpha) / (1 - alpha)
        + 2.0 * (w0 @ s0) * h ** (2 - alpha) / (2 - alpha)
        + (s0 @ s0) * h ** (3 - alpha) / (3 - alpha)
    )
    if N > 1:
        u = 0.5 * h * (_GL_NODES + 1.0)
        k = np.arange(1, N)
        t = k[:, None] * h + u[None, :]
        vals = w[k][:, None, :] + u[None, :, None] * s[k][:, None, :]
        out[1:] = (t ** (-alpha) * (vals**2).sum(axis=2)) @ (0.5 * h * _GL_WEIGHTS)
    return out[::-1] if reverse else out


def _cumulative_trapezoid(values: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * h * (values[1:] + values[:-1]))
    return out


# }}}

# {{{ identities


def caputo_energy_identity_residual(w, alpha: float) -> EnergyReport:
    """Defect of ``2<D^a w, w> = D^a|w|^2 + a/G(1-a) G(t) + t^-a/G(1-a) |w - w0|^2``.

    Evaluated at ``t_1..t_N``; the residual is the L1-in-time norm of the
    nodal defect.
    """
    alpha = check_order(alpha)
    grid, W = _as_matrix(w)
    _require_nodes(grid)
    h, t = grid.h, grid.nodes
    L1 = L1Differentiator(grid, alpha)
    sq = (W**2).sum(axis=1)
    d_sq = L1.apply(sq)
    d_w = L1.apply(W)
    G = memory_integral(W, h, alpha)
    g1 = math.gamma(1.0 - alpha)
    memory = alpha / g1 * G
    initial = np.zeros_like(t)
    initial[1:] = t[1:] ** (-alpha) / g1 * ((W[1:] - W[0]) ** 2).sum(axis=1)
    cross = 2.0 * (d_w * W).sum(axis=1)
    defect = np.zeros_like(t)
    defect[1:] = d_sq[1:] + memory[1:] + initial[1:] - cross[1:]
    res = float(h * np.abs(defect[1:]).sum())
    terms = {
        "D|w|^2(T)": float(d_sq[-1]),
        "memory(T)": float(memory[-1]),
        "initial(T)": float(initial[-1]),
        "2<Dw,w>(T)": float(cross[-1]),
        "max_nodal_defect": float(np.abs(defect[1:]).max()),
    }
    return EnergyReport(
        "caputo_energy_identity", alpha, grid.T, grid.N, terms, res, {"defect": defect}
    )


def _rl_pairing(W: np.ndarray, grid: TimeGrid, alpha: float) -> float:
    """``int_0^T <RL-derivative of w, w> dt`` for piecewise-linear ``w``."""
    h = grid.h
    d_w = L1Differentiator(grid, alpha).apply(W)
    prod = (d_w * W).sum(axis=1)
    w0, s0 = W[0], (W[1] - W[0]) / h
    g2 = math.gamma(2.0 - alpha)
    # exact on [0, t_1], where D^a P w = s0 t^{1-a} / Gamma(2-a)
    first = ((s0 @ w0) * h ** (2 - alpha) / (2 - alpha) + (s0 @ s0) * h ** (3 - alpha) / (3 - alpha)) / g2
    caputo_part = first + 0.5 * h * (prod[1] + prod[-1]) + h * prod[2:-1].sum()
    # w0 t^-a / Gamma(1-a) paired with P w, moments per interval
    N = grid.N
    s = np.diff(W, axis=0) / h
    pieces = np.empty(N)
    pieces[0] = (w0 @ w0) * h ** (1 - alpha) / (1 - alpha) + (w0 @ s0) * h ** (2 - alpha) / (2 - alpha)
    if N > 1:
        u = 0.5 * h * (_GL_NODES + 1.0)
        k = np.arange(1, N)
        tt = k[:, None] * h + u[None, :]
        vals = (W[k] @ w0)[:, None] + u[None, :] * (s[k] @ w0)[:, None]
        pieces[1:] = (tt ** (-alpha) * vals) @ (0.5 * h * _GL_WEIGHTS)
    return float(caputo_part + pieces.sum() / math.gamma(1.0 - alpha))


def rl_quadratic_identity_residual(w, alpha: float) -> EnergyReport:
    """Defect of the quadratic identity for the Riemann-Liouville derivative on ``[0, T]``.

    ``int <d^a w, w> = a/(4 G(1-a)) int int |w(t)-w(s)|^2/|t-s|^{1+a}
    + 1/(2 G(1-a)) int ((T-t)^-a + t^-a) |w|^2``; the double integral is
    ``2 int_0^T G(t) dt``.
    """
    alpha = check_order(alpha)
    grid, W = _as_matrix(w)
    _require_nodes(grid)
    h = grid.h
    g1 = math.gamma(1.0 - alpha)
    lhs = _rl_pairing(W, grid, alpha)
    G = memory_integral(W, h, alpha)
    double = 2.0 * _cumulative_trapezoid(G, h)[-1]
    double_term = alpha / (4.0 * g1) * double
    weights = _weighted_square_integrals(W, h, alpha).sum() + _weighted_square_integrals(
        W, h, alpha, reverse=True
    ).sum()
    weight_term = weights / (2.0 * g1)
    res = abs(lhs - double_term - weight_term)
    terms = {
        "lhs": lhs,
        "double_integral_term": float(double_term),
        "endpoint_weight_term": float(weight_term),
    }
    return EnergyReport("rl_quadratic_identity", alpha, grid.T, grid.N, terms, float(res))


def rl_lower_bound(w, alpha: float) -> EnergyReport:
    """``int_0^T <d^a w, w> >= T^-a / (2 G(1-a)) int_0^T |w|^2``; residual is the margin."""
    alpha = check_order(alpha)
    grid, W = _as_matrix(w)
    _require_nodes(grid)
    lhs = _rl_pairing(W, grid, alpha)
    # exact integral of the piecewise quadratic |P w|^2
    s = np.diff(W, axis=0)
    l2 = grid.h * ((W[:-1] ** 2).sum(axis=1) + (W[:-1] * s).sum(axis=1) + (s**2).sum(axis=1) / 3.0).sum()
    bound = grid.T ** (-alpha) / (2.0 * math.gamma(1.0 - alpha)) * l2
    margin = lhs - bound
    return EnergyReport(
        "rl_lower_bound", alpha, grid.T, grid.N, {"lhs": lhs, "bound": float(bound)}, float(margin),
        passed=bool(margin >= 0),
    )


def h_alpha_half_seminorm(u, alpha: float) -> float:
    """``(int int |u(t)-u(s)|^2 / |t-s|^{1+alpha} ds dt)^{1/2}`` over ``[0, T]^2``."""
    alpha = check_order(alpha)
    grid, W = _as_matrix(u)
    _require_nodes(grid)
    G = memory_integral(W, grid.h, alpha)
    return float(math.sqrt(max(2.0 * _cumulative_trapezoid(G, grid.h)[-1], 0.0)))


# }}}

# {{{ first energy estimate


def _estimate_rates(system: GalerkinSystem) -> tuple[float, float]:
    """Sup over time of the drift and reaction rates entering the Gronwall factor.

    ``b_eff(t) = ||Lambda^{-1/2} B(t)||_2`` bounds ``<B c, c>`` by
    ``b_eff ||grad u|| ||u||`` and ``c_plus(t)`` is the largest eigenvalue of
    the symmetric part of ``C(t)``, clipped at 0.
    """
    b_eff = 0.0
    if system.B is not None:
        scale = 1.0 / np.sqrt(system.basis.eigenvalues)
        b_eff = float(np.linalg.norm(scale[None, :, None] * system.B, ord=2, axis=(1, 2)).max())
    c_plus = 0.0
    if system.C is not None:
        sym = 0.5 * (system.C + np.swapaxes(system.C, 1, 2))
        c_plus = max(0.0, float(np.linalg.eigvalsh(sym).max()))
    return b_eff, c_plus


def estimate_constants(system: GalerkinSystem, alpha: float) -> dict[str, float]:
    """``g``, ``d0``, ``d1`` and ``C0`` of the first energy estimate.

    With ``lam`` the ellipticity constant:
    ``g = 2 b_eff^2 / lam + 2 c_plus``, ``d0 = g T E_{a,2}(g T^a)``,
    ``d1 = E_{a,1}(g T^a)`` and
    ``C0 = max(T^{1-a}/Gamma(2-a) + d0, 2 (1 + d1) / lam)``.
    """
    T, lam = system.grid.T, system.lam
    b_eff, c_plus = _estimate_rates(system)
    g = 2.0 * b_eff**2 / lam + 2.0 * c_plus
    d0 = g * T * ml(alpha, g * T**alpha, 2.0)
    d1 = ml(alpha, g * T**alpha, 1.0)
    C0 = max(T ** (1.0 - alpha) / math.gamma(2.0 - alpha) + d0, 2.0 * (1.0 + d1) / lam)
    return {"b_eff": b_eff, "c_plus": c_plus, "g": g, "d0": d0, "d1": d1, "C0": C0}


def _first_energy_terms(u: SpectralField, system: GalerkinSystem, alpha: float):
    grid, c = u.grid, u.coefficients
    h = grid.h
    g1 = math.gamma(1.0 - alpha)
    sq = (c**2).sum(axis=1)
    frac = ProductIntegrator(grid, 1.0 - alpha).apply(sq)
    memory = alpha / g1 * _cumulative_trapezoid(memory_integral(c, h, alpha), h)
    diff = c - system.c0
    initial = np.concatenate([[0.0], np.cumsum(_weighted_square_integrals(diff, h, alpha))]) / g1
    grad = system.lam * _cumulative_trapezoid(u.h1_seminorms_sq, h)
    return frac, memory, initial, grad


def first_energy_check(
    u: SpectralField, system: GalerkinSystem, alpha: float, raise_on_failure: bool = True
) -> EnergyReport:
    """Check the first energy estimate at every node.

    LHS: ``I^{1-a}|u|^2 + a/G(1-a) int_0^t G + 1/G(1-a) int_0^t s^-a |u-u0|^2
    + lam int_0^t |grad u|^2``; RHS: ``C0 (|u0|^2 + int_0^t |f|^2_{H^-1} + delta)``
    with the unmollified forcing and the mollification proxy ``delta``.
    """
    alpha = check_order(alpha)
    if u.grid != system.grid:
        raise ValueError("solution and system grids differ")
    grid = u.grid
    const = estimate_constants(system, alpha)
    frac, memory, initial, grad = _first_energy_terms(u, system, alpha)
    lhs = frac + memory + initial + grad
    dual = (system.F_raw**2) @ (1.0 / system.basis.eigenvalues)
    forcing = _cumulative_trapezoid(dual, grid.h)
    delta = forcing_delta_proxy(system)
    u0_sq = float(system.c0 @ system.c0)
    rhs = const["C0"] * (u0_sq + forcing + delta)
    margin = rhs - lhs
    worst = int(np.argmin(margin))
    passed = bool(margin[worst] >= -1e-12 * max(1.0, rhs[worst]))
    terms = {
        "I^(1-a)|u|^2(T)": float(frac[-1]),
        "memory_double_integral(T)": float(memory[-1]),
        "initial_weight_integral(T)": float(initial[-1]),
        "lam_grad_integral(T)": float(grad[-1]),
        "lhs(T)": float(lhs[-1]),
        "rhs(T)": float(rhs[-1]),
        "|u0|^2": u0_sq,
        "forcing_H-1_integral(T)": float(forcing[-1]),
        "delta": delta,
        **const,
        "worst_margin": float(margin[worst]),
        "worst_margin_t": float(grid.nodes[worst]),
    }
    report = EnergyReport(
        "first_energy_estimate", alpha, grid.T, grid.N, terms, float(margin[worst]),
        {"lhs": lhs, "rhs": rhs}, passed,
    )
    if raise_on_failure and not passed:
        raise EnergyEstimateViolation(report)
    return report


def a_priori_check(u: SpectralField, system: GalerkinSystem, alpha: float) -> EnergyReport:
    """``||grad u||_{L2 L2} + |u|_{H^{a/2}} <= C (||u0|| + ||f||_{L2 H^-1} + sqrt(delta))``.

    ``C = sqrt(C0) (lam^{-1/2} + (2 G(1-a) / a)^{1/2})`` follows from the first
    energy estimate at ``t = T``.
    """
    alpha = check_order(alpha)
    const = estimate_constants(system, alpha)
    grad = math.sqrt(_cumulative_trapezoid(u.h1_seminorms_sq, u.grid.h)[-1])
    semi = h_alpha_half_seminorm(u, alpha)
    dual = (system.F_raw**2) @ (1.0 / system.basis.eigenvalues)
    f_norm = math.sqrt(_cumulative_trapezoid(dual, u.grid.h)[-1])
    delta = forcing_delta_proxy(system)
    C = math.sqrt(const["C0"]) * (
        1.0 / math.sqrt(system.lam) + math.sqrt(2.0 * math.gamma(1.0 - alpha) / alpha)
    )
    lhs = grad + semi
    rhs = C * (math.sqrt(float(system.c0 @ system.c0)) + f_norm + math.sqrt(delta))
    return EnergyReport(
        "a_priori_bound", alpha, u.grid.T, u.grid.N,
        {"grad_L2L2": grad, "seminorm": semi, "lhs": lhs, "C": C, "rhs": rhs},
        float(rhs - lhs), passed=bool(lhs <= rhs),
    )


# }}}

# {{{ initial trace and counterexample


@dataclass(frozen=True)
class TraceReport:
    deltas: np.ndarray
    sup_errors: np.ndarray
    fitted_exponent: float
    holder_bound: float
    converges: bool
    consistent: bool

    def to_text(self) -> str:
        lines = ["delta,sup_error"] + [
            f"{d:.15g},{e:.15g}" for d, e in zip(self.deltas, self.sup_errors)
        ]
        lines += [
            f"fitted_exponent: {self.fitted_exponent:.6g}",
            f"holder_bound: {self.holder_bound:.6g}",
            f"converges: {self.converges}",
            f"consistent: {self.consistent}",
        ]
        return "\n".join(lines)


def initial_trace_check(
    u, u0: np.ndarray | float, alpha: float, p: float = math.inf, tolerance: float = 0.1
) -> TraceReport:
    """Fit ``sup_{0 < t <= delta} |u(t) - u0| ~ delta^kappa`` over dyadic ``delta``.

    ``delta`` runs over ``T/16, T/32, ...`` while at least four grid steps
    remain. The trace converges when ``kappa > 0`` (or the error vanishes),
    and is consistent with the Hoelder exponent ``alpha - 1/p`` when
    ``kappa >= alpha - 1/p - tolerance``.
    """
    alpha = check_order(alpha)
    grid, W = _as_matrix(u)
    u0 = np.broadcast_to(np.asarray(u0, dtype=float), W.shape[1:])
    err = np.sqrt(((W - u0) ** 2).sum(axis=1))
    t = grid.nodes
    deltas = []
    delta = grid.T / 16.0
    while delta >= 4.0 * grid.h:
        deltas.append(delta)
        delta /= 2.0
    if len(deltas) < 3:
        raise ValueError("grid too coarse for an initial-trace fit")
    deltas = np.array(deltas)
    sup = np.array([err[1:][t[1:] <= d * (1 + 1e-12)].max() for d in deltas])
    bound = alpha - (0.0 if math.isinf(p) else 1.0 / p)
    if np.all(sup == 0.0):
        return TraceReport(deltas, sup, math.inf, bound, True, True)
    positive = sup > 0
    slope = float(np.polyfit(np.log(deltas[positive]), np.log(sup[positive]), 1)[0])
    # a sup pinned at the first node (slope 0) is not decay
    converges = bool(slope > 0 and sup[-1] < sup[0])
    return TraceReport(deltas, sup, slope, bound, converges, converges and slope >= bound - tolerance)


@dataclass(frozen=True)
class CounterexampleReport:
    alpha: float
    beta: float
    exponent: float
    constant: float
    constant_quadrature: float
    deltas: np.ndarray
    sup_values: np.ndarray
    quadrature_values: np.ndarray
    bounded: bool

    @property
    def growth(self) -> float:
        """Ratio of the value at the smallest to the largest ``delta``."""
        return float(self.sup_values[-1] / self.sup_values[0])

    def to_text(self) -> str:
        lines = [
            f"alpha: {self.alpha:.15g}",
            f"beta: {self.beta:.15g}",
            f"exponent alpha+beta: {self.exponent:.15g}",
            f"constant Gamma(beta+1)/Gamma(alpha+beta+1): {self.constant:.15g}",
            f"constant by quadrature: {self.constant_quadrature:.15g}",
            f"bounded: {self.bounded}",
            "delta,|w(delta)-w0|,quadrature",
        ]
        lines += [
            f"{d:.15g},{v:.15g},{q:.15g}"
            for d, v, q in zip(self.deltas, self.sup_values, self.quadrature_values)
        ]
        lines.append(f"growth over the delta range: {self.growth:.15g}")
        return "\n".join(lines)


def counterexample_demo(
    alpha: float, beta: float, deltas: np.ndarray | None = None
) -> CounterexampleReport:
    """Solve ``D^alpha w = t^beta`` as ``w - w0 = Gamma(b+1)/Gamma(a+b+1) t^{a+b}``.

    Requires ``beta > -1/2`` (square-integrable forcing). For
    ``beta < -alpha`` the solution is unbounded near 0; the report lists
    ``|w(delta) - w0|`` over ``delta = 1e-1 .. 1e-5`` both in closed form and
    by direct quadrature of ``I^alpha t^beta``.
    """
    alpha = check_order(alpha)
    beta = float(beta)
    if not beta > -0.5:
        raise ValueError(
            f"beta = {beta} outside the admissible band beta > -1/2 (t^beta must be square "
            f"integrable); unbounded solutions need beta in (-1/2, {-alpha:g})"
        )
    exponent = alpha + beta
    const = math.exp(gammaln(beta + 1.0) - gammaln(alpha + beta + 1.0))
    # I^a t^b (1) = (1/Gamma(a)) int_0^1 (1-s)^{a-1} s^b ds
    quad_const = integrate.quad(lambda s: 1.0, 0.0, 1.0, weight="alg", wvar=(beta, alpha - 1.0))[0] / math.gamma(alpha)
    if deltas is None:
        deltas = 10.0 ** -np.arange(1, 6, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    values = const * deltas**exponent
    quad_values = np.array(
        [
            integrate.quad(lambda s: 1.0, 0.0, d, weight="alg", wvar=(beta, alpha - 1.0))[0]
            / math.gamma(alpha)
            for d in deltas
        ]
    )
    return CounterexampleReport(
        alpha, beta, exponent, const, quad_const, deltas, values, quad_values, exponent >= 0
    )


# }}}

"""Discrete fractional calculus on uniform time grids.

All operators act on samples at the nodes ``t_j = j T / N``:

* :func:`frac_integral` -- product-trapezoidal quadrature of the Riemann-Liouville
  integral (exact for piecewise-linear data),
* :func:`caputo_derivative` -- the L1 scheme,
* :func:`rl_derivative` -- Caputo plus the analytic ``f(0) t^{-alpha}`` term,
* :func:`y_alpha_norm` -- the weighted ``sup|f| + sup|t^{1-alpha} f'|`` norm.

The integral and the L1 derivative optionally take *starting weights*: a small
correction on the first few nodes that makes the rule exact on ``t^sigma`` for
a list of exponents (typically ``k * alpha``), which restores accuracy for the
``t^alpha``-type start-up behaviour of fractional relaxation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import binom, gammaln

__all__ = [
    "TimeGrid",
    "TimeSeries",
    "NonFiniteError",
    "ProductIntegrator",
    "L1Differentiator",
    "check_order",
    "singular_exponents",
    "frac_integral",
    "caputo_derivative",
    "rl_derivative",
    "rl_correction",
    "y_alpha_norm",
    "read_series_csv",
    "write_series_csv",
]


class NonFiniteError(ValueError):
    """Raised when a sample that must be finite is not."""

    def __init__(self, index: int, message: str = "") -> None:
        self.index = index
        super().__init__(message or f"non-finite value at node {index}")


def check_order(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"fractional order must lie in (0, 1), got {alpha}")
    return alpha


# {{{ grids and series


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_j = j T / N`` on ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self) -> None:
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"need N >= 2 steps, got {self.N}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.T * np.arange(self.N + 1) / self.N

    def refine(self, factor: int = 2) -> TimeGrid:
        return TimeGrid(self.T, self.N * factor)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Samples of a scalar (shape ``(N+1,)``) or vector (``(N+1, n)``) signal.

    Nodes before ``defined_from`` carry NaN sentinels, e.g. the derivative
    operators leave ``t_0`` undefined.
    """

    grid: TimeGrid
    values: np.ndarray
    defined_from: int = 0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim not in (1, 2) or values.shape[0] != self.grid.N + 1:
            raise ValueError(
                f"values of shape {values.shape} do not match a grid with "
                f"{self.grid.N + 1} nodes"
            )
        bad = ~np.isfinite(values[self.defined_from :])
        if bad.any():
            idx = int(np.argwhere(bad)[0][0]) + self.defined_from
            raise NonFiniteError(idx)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: TimeGrid, func) -> TimeSeries:
        return cls(grid, np.asarray(func(grid.nodes), dtype=float))

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == 2

    def with_origin(self, value: float | np.ndarray) -> TimeSeries:
        """Replace the undefined node(s) before ``defined_from`` by *value*."""
        values = self.values.copy()
        values[: self.defined_from] = value
        return TimeSeries(self.grid, values)

    def require_full(self) -> None:
        if self.defined_from != 0:
            raise NonFiniteError(0, "series is undefined at t_0; use with_origin()")


def write_series_csv(series: TimeSeries, path: str | Path) -> None:
    values = series.values.reshape(series.grid.N + 1, -1)
    header = ["t"] + [f"v{i}" for i in range(values.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t, row in zip(series.t, values):
            writer.writerow([f"{t:.15g}"] + [f"{v:.15g}" for v in row])


def read_series_csv(path: str | Path) -> TimeSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "t" or len(header) < 2:
            raise ValueError(f"{path}: expected header 't,v0,...'")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=float)
    t = data[:, 0]
    grid = TimeGrid(t[-1], len(t) - 1)
    if not np.allclose(t, grid.nodes, rtol=0, atol=1e-12 * max(1.0, grid.T)):
        raise ValueError(f"{path}: time column is not a uniform grid from 0")
    values = data[:, 1] if data.shape[1] == 2 else data[:, 1:]
    defined_from = 0
    while defined_from < len(t) and not np.all(np.isfinite(values[defined_from])):
        defined_from += 1
    return TimeSeries(grid, values, defined_from=defined_from)


# }}}

# {{{ weights


def _first_difference_power(m: np.ndarray, p: float) -> np.ndarray:
    """``(m+1)^p - m^p`` for integer ``m >= 0``, without cancellation."""
    m = np.asarray(m, dtype=float)
    out = np.ones_like(m)
    pos = m > 0
    mp = m[pos]
    out[pos] = mp**p * np.expm1(p * np.log1p(1.0 / mp))
    return out


def _second_difference_power(k: np.ndarray, p: float) -> np.ndarray:
    """``(k+1)^p - 2 k^p + (k-1)^p`` for integer ``k >= 1``."""
    k = np.asarray(k, dtype=float)
    if p > 3.0:
        return (k + 1) ** p - 2 * k**p + (k - 1) ** p
    out = np.empty_like(k)
    small = k < 16
    ks = k[small]
    out[small] = (ks + 1) ** p - 2 * ks**p + (ks - 1) ** p
    kl = k[~small]
    x2 = 1.0 / kl**2
    acc = np.zeros_like(kl)
    term_pow = np.ones_like(kl)
    for m in range(1, 40):
        term_pow = term_pow * x2
        c = binom(p, 2 * m)
        if c == 0.0:
            break
        acc += c * term_pow
        if abs(c) * 16.0 ** (-2 * m) < 1e-18:
            break
    out[~small] = 2.0 * kl**p * acc
    return out


def _origin_weight(n: np.ndarray, beta: float) -> np.ndarray:
    """``(n-1)^{beta+1} - (n-1-beta) n^beta`` for integer ``n >= 1``."""
    n = np.asarray(n, dtype=float)
    p = beta + 1.0
    if p > 3.0:
        return (n - 1) ** p - (n - 1 - beta) * n**beta
    out = np.empty_like(n)
    small = n < 16
    ns = n[small]
    out[small] = (ns - 1) ** p - (ns - 1 - beta) * ns**beta
    nl = n[~small]
    # n^p [(1 - 1/n)^p - 1 + p/n] as a binomial tail
    x = -1.0 / nl
    acc = np.zeros_like(nl)
    xm = x.copy()
    for m in range(2, 60):
        xm = xm * x
        c = binom(p, m)
        if c == 0.0:
            break
        acc += c * xm
        if abs(c) * 16.0 ** (-m) < 1e-18:
            break
    out[~small] = nl**p * acc
    return out


def _integral_weights(N: int, beta: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Product-trapezoid weights for ``I^beta`` on a uniform grid.

    Returns ``(origin, lag)`` with ``(I^beta f)(t_n) ~ origin[n] f_0 +
    sum_{j=1}^n lag[n-j] f_j``; ``origin[0] = 0``.
    """
    p = beta + 1.0
    lags = np.arange(N + 1, dtype=float)
    origin = np.zeros(N + 1)
    if p <= 3.0:
        scale = math.exp(beta * math.log(h) - gammaln(beta + 2.0))
        lag = np.empty(N + 1)
        lag[0] = 1.0
        lag[1:] = _second_difference_power(lags[1:], p)
        origin[1:] = _origin_weight(lags[1:], beta)
        return origin * scale, lag * scale

    # high orders (Gronwall kernel series): evaluate in time units to avoid overflow
    def scaled_pow(x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(p * np.log(x[pos] * h) - gammaln(p + 1.0)) / h
        return out

    t_next = scaled_pow(lags + 1)
    t_cur = scaled_pow(lags)
    t_prev = scaled_pow(np.maximum(lags - 1, 0))
    lag = t_next - 2 * t_cur + t_prev
    lag[0] = t_next[0]
    n = lags[1:]
    # (n-1)^p - (n-1-beta) n^beta, scaled the same way
    n_beta = np.exp(beta * np.log(n * h) - gammaln(p + 1.0))
    origin[1:] = scaled_pow(n - 1) - (n - 1 - beta) * n_beta
    return origin, lag


def _lag_convolve(kernel: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``out[n] = sum_{j=0}^n kernel[n-j] values[j]`` along axis 0."""
    n = values.shape[0]
    if values.ndim == 1:
        if n <= 4096:
            return np.convolve(kernel[:n], values)[:n]
        return fftconvolve(kernel[:n], values)[:n]
    if n * values.shape[1] <= 2**16:
        return np.stack(
            [np.convolve(kernel[:n], values[:, i])[:n] for i in range(values.shape[1])],
            axis=1,
        )
    return fftconvolve(kernel[:n, None], values, axes=0)[:n]


def singular_exponents(
    alpha: float, upper: float = 2.0, min_gap: float = 0.05
) -> tuple[float, ...]:
    """Exponents ``k alpha`` below *upper* used for starting weights.

    The exponent ``1`` is always included so that the corrected rules stay
    exact on linear data; exponents closer than *min_gap* to one already in
    the list are dropped to keep the starting system well conditioned.
    """
    chosen = [1.0]
    k = 1
    while k * alpha < upper - 1e-12:
        sigma = k * alpha
        if all(abs(sigma - s) >= min_gap for s in chosen):
            chosen.append(sigma)
        k += 1
    return tuple(sorted(chosen))


def _starting_weights(
    defects: np.ndarray, exponents: Sequence[float]
) -> np.ndarray:
    """Solve ``sum_j W[j, n] j^sigma_i = defect_i(n)`` for every node ``n``."""
    m = len(exponents)
    j = np.arange(1, m + 1, dtype=float)
    vander = np.array([j**s for s in exponents])
    return np.linalg.solve(vander, defects)


class ProductIntegrator:
    """Product-trapezoid ``I^beta`` on a fixed grid, with optional starting weights.

    ``apply`` computes ``origin[n] f_0 + sum_{j>=1} lag[n-j] f_j +
    sum_{j=1}^m start[j-1, n] (f_j - f_0)``.
    """

    def __init__(
        self, grid: TimeGrid, order: float, exponents: Sequence[float] = ()
    ) -> None:
        if order <= 0:
            raise ValueError(f"integration order must be positive, got {order}")
        self.grid = grid
        self.order = float(order)
        self.exponents = tuple(exponents)
        self.origin, self.lag = _integral_weights(grid.N, self.order, grid.h)
        self.start = None
        if self.exponents:
            if len(self.exponents) >= grid.N:
                raise ValueError("grid too coarse for the requested starting weights")
            # defects in unit-step scaling, then rescale by h^beta
            unit_origin, unit_lag = _integral_weights(grid.N, self.order, 1.0)
            n = np.arange(grid.N + 1, dtype=float)
            defects = np.empty((len(self.exponents), grid.N + 1))
            for i, s in enumerate(self.exponents):
                f = n**s
                exact = np.exp(gammaln(s + 1) - gammaln(s + 1 + self.order)) * n ** (
                    s + self.order
                )
                approx = unit_origin * f[0]
                approx[1:] += np.convolve(unit_lag[: grid.N], f[1:])[: grid.N]
                defects[i] = exact - approx
            defects[:, 0] = 0.0
            self.start = _starting_weights(defects, self.exponents) * grid.h**self.order

    @property
    def m(self) -> int:
        return 0 if self.start is None else self.start.shape[0]

    def diagonal(self, n: int) -> float:
        """Coefficient multiplying ``f_n`` in the rule at node ``n``."""
        d = self.lag[0]
        if self.start is not None and 1 <= n <= self.m:
            d += self.start[n - 1, n]
        return d

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        f0 = values[0]
        out = np.zeros_like(values)
        out[1:] = _lag_convolve(self.lag, values[1:])
        out[1:] += np.multiply.outer(self.origin[1:], f0)
        if self.start is not None:
            diff = values[1 : self.m + 1] - f0
            out += np.tensordot(self.start.T, diff, axes=(1, 0))
        out[0] = 0.0
        return out


class L1Differentiator:
    """L1 scheme for the Caputo derivative, with optional starting weights.

    ``apply`` returns ``h^{-alpha} [sum_{k=1}^n b[n-k] (f_k - f_{k-1}) +
    sum_{j=1}^m start[j-1, n] (f_j - f_0)]`` at ``n >= 1``.
    """

    def __init__(
        self, grid: TimeGrid, alpha: float, exponents: Sequence[float] = ()
    ) -> None:
        self.grid = grid
        self.alpha = check_order(alpha)
        self.exponents = tuple(exponents)
        self.scale = grid.h ** (-self.alpha)
        self.b = _first_difference_power(np.arange(grid.N + 1), 1.0 - self.alpha) / math.gamma(
            2.0 - self.alpha
        )
        self.start = None
        if self.exponents:
            if len(self.exponents) >= grid.N:
                raise ValueError("grid too coarse for the requested starting weights")
            n = np.arange(grid.N + 1, dtype=float)
            defects = np.empty((len(self.exponents), grid.N + 1))
            for i, s in enumerate(self.exponents):
                f = n**s
                exact = np.zeros_like(n)
                exact[1:] = np.exp(gammaln(s + 1) - gammaln(s + 1 - self.alpha)) * n[1:] ** (
                    s - self.alpha
                )
                approx = np.zeros_like(n)
                approx[1:] = np.convolve(self.b[: grid.N], np.diff(f))[: grid.N]
                defects[i] = exact - approx
            defects[:, 0] = 0.0
            self.start = _starting_weights(defects, self.exponents)

    @property
    def m(self) -> int:
        return 0 if self.start is None else self.start.shape[0]

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        out = np.empty_like(values)
        out[1:] = _lag_convolve(self.b, np.diff(values, axis=0))
        if self.start is not None:
            diff = values[1 : self.m + 1] - values[0]
            out += np.tensordot(self.start.T, diff, axes=(1, 0))
        out *= self.scale
        out[0] = np.nan
        return out


# }}}

# {{{ operators


def frac_integral(
    f: TimeSeries, alpha: float, exponents: Sequence[float] = ()
) -> TimeSeries:
    """Riemann-Liouville integral ``I^alpha f`` at every node (``I^alpha f(0) = 0``)."""
    alpha = check_order(alpha)
    f.require_full()
    return TimeSeries(f.grid, ProductIntegrator(f.grid, alpha, exponents).apply(f.values))


def caputo_derivative(
    f: TimeSeries, alpha: float, exponents: Sequence[float] = ()
) -> TimeSeries:
    """Caputo derivative by the L1 scheme; node ``t_0`` is left undefined (NaN)."""
    alpha = check_order(alpha)
    f.require_full()
    values = L1Differentiator(f.grid, alpha, exponents).apply(f.values)
    return TimeSeries(f.grid, values, defined_from=1)


def rl_correction(f0: float | np.ndarray, grid: TimeGrid, alpha: float) -> np.ndarray:
    """``f(0) t^{-alpha} / Gamma(1 - alpha)`` on the grid (NaN at ``t_0``)."""
    t = grid.nodes
    with np.errstate(divide="ignore"):
        w = t ** (-alpha) / math.gamma(1.0 - alpha)
    w[0] = np.nan
    return np.multiply.outer(w, np.asarray(f0, dtype=float))


def rl_derivative(
    f: TimeSeries, alpha: float, exponents: Sequence[float] = ()
) -> TimeSeries:
    """Riemann-Liouville derivative ``D^alpha f + f(0) t^{-alpha}/Gamma(1-alpha)``."""
    caputo = caputo_derivative(f, alpha, exponents)
    values = caputo.values + rl_correction(f.values[0], f.grid, alpha)
    return TimeSeries(f.grid, values, defined_from=1)


def y_alpha_norm(f: TimeSeries, alpha: float) -> float:
    """``sup |f| + sup_{t > 0} |t^{1-alpha} f'(t)|`` on the grid.

    The weighted derivative is computed as ``alpha * df/ds`` with ``s = t^alpha``
    by second-order differences in ``s`` (one-sided at the ends), which is exact
    for ``f = t^alpha``.
    """
    alpha = check_order(alpha)
    f.require_full()
    if f.grid.N < 4:
        raise ValueError("y_alpha_norm needs at least N = 4 steps")
    s = f.t**alpha
    values = f.values.reshape(f.grid.N + 1, -1)
    weighted = alpha * np.gradient(values, s, axis=0, edge_order=2)
    sup_f = np.abs(values).max(axis=1).max()
    sup_d = np.abs(weighted[1:]).max(axis=1).max()
    return float(sup_f + sup_d)


# }}}

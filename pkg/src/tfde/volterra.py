"""Solvers for the Galerkin system ``D^alpha c = -A~(t) c + F(t)``, ``c(0) = c0``.

Two independent discretizations:

* :func:`picard_solve` iterates the equivalent Volterra equation
  ``c = c0 - I^alpha(A~ c) + I^alpha F`` (product-trapezoid quadrature) on
  successive time windows, accepting a window once the iteration has
  converged with an observed contraction factor at most ``rho`` and halving
  it otherwise;
* :func:`l1_step_solve` marches the L1 discretization of the Caputo form
  implicitly, one node at a time.

Both use starting weights for the exponents :func:`singular_exponents`
by default, so the ``t^alpha``-type start-up behaviour of the solution does
not cap their accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import toeplitz

from .assembly import GalerkinSystem
from .basis import Domain, SpectralField, eigenpairs
from .fraccalc import (
    L1Differentiator,
    ProductIntegrator,
    TimeGrid,
    TimeSeries,
    check_order,
    singular_exponents,
)

__all__ = [
    "PicardConfig",
    "SolveTrace",
    "NonConvergenceError",
    "SingularStepError",
    "picard_solve",
    "l1_step_solve",
    "residual",
    "scalar_system",
]


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, trace: SolveTrace | None = None) -> None:
        self.trace = trace
        super().__init__(message)


class SingularStepError(RuntimeError):
    pass


@dataclass(frozen=True)
class PicardConfig:
    """Window acceptance and iteration controls.

    ``window`` is the initial window length in nodes (``None``: ``max(8, N // 16)``);
    ``initial`` selects the first iterate on a window: ``"constant"`` (last
    accepted value) or ``"zero"``.
    """

    rho: float = 0.5
    max_iter: int = 200
    shrink: float = 0.5
    tol: float = 1e-10
    window: int | None = None
    initial: str = "constant"
    starting_weights: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0 < self.shrink < 1:
            raise ValueError(f"shrink must lie in (0, 1), got {self.shrink}")
        if self.max_iter < 1 or not self.tol > 0:
            raise ValueError("need max_iter >= 1 and tol > 0")
        if self.window is not None and self.window < 1:
            raise ValueError("window must hold at least one node")
        if self.initial not in ("constant", "zero"):
            raise ValueError(f"unknown initial iterate {self.initial!r}")


@dataclass
class SolveTrace:
    """What happened during a solve.

    ``windows`` lists accepted ``(first, last)`` node ranges; ``start_block``
    is the number of leading nodes solved jointly because the starting
    weights couple them.
    """

    solver: str
    grid: TimeGrid
    start_block: int = 0
    windows: list[tuple[int, int]] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    factors: list[float] = field(default_factory=list)
    rejected: list[tuple[int, int, float]] = field(default_factory=list)
    residual: float = math.nan
    discrepancy: float | None = None

    @property
    def window_times(self) -> list[float]:
        t = self.grid.nodes
        return [float(t[b]) for _, b in self.windows]

    def report(self) -> str:
        lines = [
            f"solver: {self.solver}",
            f"grid: T={self.grid.T:.15g} N={self.grid.N}",
            f"start block nodes: {self.start_block}",
            f"accepted windows: {len(self.windows)}",
            f"rejected windows: {len(self.rejected)}",
        ]
        t = self.grid.nodes
        for (a, b), its, q in zip(self.windows, self.iterations, self.factors):
            lines.append(
                f"  window [{t[a]:.6g}, {t[b]:.6g}] nodes {a + 1}..{b} iterations {its} contraction {q:.4g}"
            )
        for a, b, q in self.rejected:
            lines.append(f"  rejected nodes {a + 1}..{b} contraction {q:.4g}")
        lines.append(f"residual: {self.residual:.6e}")
        if self.discrepancy is not None:
            lines.append(f"cross-solver discrepancy: {self.discrepancy:.6e}")
        return "\n".join(lines)


def _exponents(alpha: float, enabled: bool) -> tuple[float, ...]:
    return singular_exponents(alpha) if enabled else ()


def _checked_operator(system: GalerkinSystem) -> np.ndarray:
    At = system.A_tilde
    if not np.isfinite(At).all():
        raise ValueError("system operator has non-finite entries")
    return At


def _start_block_rule(P: ProductIntegrator, m: int) -> np.ndarray:
    """``R[n-1, j-1]``: weight of ``y_j`` in the rule at node ``n`` for ``n, j <= m``."""
    R = np.zeros((m, m))
    for n in range(1, m + 1):
        for j in range(1, n + 1):
            R[n - 1, j - 1] = P.lag[n - j]
        R[n - 1] += P.start[:, n]
    return R


def picard_solve(
    system: GalerkinSystem, alpha: float, config: PicardConfig | None = None
) -> tuple[SpectralField, SolveTrace]:
    """Windowed Picard iteration for ``c = c0 - I^alpha(A~ c) + I^alpha F``.

    Each sweep updates every node of the active window from the previous
    iterate, except that the node's own quadrature weight is taken
    implicitly, ``(I + w_0 A~_n) c_n = rhs_n``; without this, modes with
    ``lambda_k h^alpha`` of order one make plain substitution diverge on
    every window size. When starting weights are on, their first ``m`` nodes
    are coupled through future values and are solved jointly before the
    windows start.
    """
    alpha = check_order(alpha)
    config = config or PicardConfig()
    grid = system.grid
    N, nm = grid.N, system.n
    At = _checked_operator(system)
    P = ProductIntegrator(grid, alpha, _exponents(alpha, config.starting_weights))
    m = P.m
    G = P.apply(system.F)
    trace = SolveTrace("picard", grid, start_block=m)

    c = np.zeros((N + 1, nm))
    c[0] = system.c0
    y = np.zeros((N + 1, nm))
    y[0] = At[0] @ c[0]
    eye = np.eye(nm)

    if m:
        R = _start_block_rule(P, m)
        rhs = c[0] + G[1 : m + 1] - np.outer(P.origin[1 : m + 1], y[0])
        rhs += np.outer(P.start[:, 1 : m + 1].sum(axis=0), y[0])
        block = np.kron(np.eye(m), eye) + np.einsum("nj,jab->najb", R, At[1 : m + 1]).reshape(
            m * nm, m * nm
        )
        c[1 : m + 1] = np.linalg.solve(block, rhs.ravel()).reshape(m, nm)
        y[1 : m + 1] = np.einsum("tab,tb->ta", At[1 : m + 1], c[1 : m + 1])

    w_max = config.window or max(8, N // 16)
    w = w_max
    a = m
    lag = P.lag
    correction = None
    if m:
        # frozen starting-weight contributions sum_j W[j, n] (y_j - y_0)
        correction = P.start.T @ (y[1 : m + 1] - y[0])
    while a < N:
        b = min(a + w, N)
        idx = np.arange(a + 1, b + 1)
        known = c[0] + G[idx] - np.outer(P.origin[idx], y[0])
        if a >= 1:
            hist = lag[idx[:, None] - np.arange(1, a + 1)[None, :]]
            known -= hist @ y[1 : a + 1]
        if correction is not None:
            known -= correction[idx]
        size = b - a
        lower = toeplitz(np.concatenate([[0.0], lag[1:size]]), np.zeros(size))
        Minv = np.linalg.inv(eye + lag[0] * At[idx])
        guess = np.zeros((size, nm)) if config.initial == "zero" else np.repeat(c[a][None], size, 0)
        deltas = []
        converged = False
        for _ in range(config.max_iter):
            ywin = np.einsum("tab,tb->ta", At[idx], guess)
            rhs = known - lower @ ywin
            new = np.einsum("tab,tb->ta", Minv, rhs)
            delta = float(np.abs(new - guess).max())
            guess = new
            if not math.isfinite(delta):
                break
            deltas.append(delta)
            scale = max(1.0, float(np.abs(new).max()))
            if delta <= config.tol * scale:
                converged = True
                break
            if len(deltas) > 3 and delta > 1e6 * deltas[0]:
                break
        if len(deltas) >= 2 and deltas[0] > 0:
            factor = (deltas[-1] / deltas[0]) ** (1.0 / (len(deltas) - 1))
        else:
            factor = 0.0
        if converged and factor <= config.rho:
            c[idx] = guess
            y[idx] = np.einsum("tab,tb->ta", At[idx], guess)
            trace.windows.append((a, b))
            trace.iterations.append(len(deltas))
            trace.factors.append(factor)
            a = b
            w = min(w_max, 2 * w)
            continue
        trace.rejected.append((a, b, factor))
        w = int(w * config.shrink)
        if w < 1:
            raise NonConvergenceError(
                f"Picard window at t={grid.nodes[a]:.6g} shrank below one step", trace
            )

    field_ = SpectralField(system.basis, grid, c)
    trace.residual = float(residual(field_, system, alpha, P.exponents).values.max())
    return field_, trace


def l1_step_solve(
    system: GalerkinSystem, alpha: float, starting_weights: bool = True
) -> tuple[SpectralField, SolveTrace]:
    """Implicit L1 time stepping: ``(h^-alpha b_0 I + A~_n) c_n = F_n + history``.

    The first ``m`` nodes, coupled by the starting weights, form one block
    system; afterwards every step is a dense ``n x n`` solve (a division
    when the operator is diagonal).
    """
    alpha = check_order(alpha)
    grid = system.grid
    N, nm = grid.N, system.n
    At = _checked_operator(system)
    D = L1Differentiator(grid, alpha, _exponents(alpha, starting_weights))
    m = D.m
    s, b = D.scale, D.b
    F = system.F
    c = np.zeros((N + 1, nm))
    c[0] = system.c0
    eye = np.eye(nm)
    diagonal = system.is_decoupled

    if m:
        # rows n = 1..m: s [sum_{k<=n} b[n-k] (c_k - c_{k-1}) + sum_j S[j, n] (c_j - c_0)] + A~_n c_n = F_n
        Dm = np.zeros((m, m))
        for n in range(1, m + 1):
            for k in range(1, n + 1):
                Dm[n - 1, k - 1] += b[n - k]
                if k > 1:
                    Dm[n - 1, k - 2] -= b[n - k]
            Dm[n - 1] += D.start[:, n]
        # the c_0 terms: from k = 1 (b[n-1] c_0) and the starting sum
        c0_coef = b[np.arange(m)] + D.start[:, 1 : m + 1].sum(axis=0)
        block = s * np.kron(Dm, eye)
        for n in range(m):
            block[n * nm : (n + 1) * nm, n * nm : (n + 1) * nm] += At[n + 1]
        rhs = F[1 : m + 1] + s * np.outer(c0_coef, c[0])
        try:
            c[1 : m + 1] = np.linalg.solve(block, rhs.ravel()).reshape(m, nm)
        except np.linalg.LinAlgError:
            raise SingularStepError("starting block matrix is singular") from None

    dc = np.zeros((N + 1, nm))
    dc[1 : m + 1] = np.diff(c[: m + 1], axis=0)
    start_corr = D.start.T @ (c[1 : m + 1] - c[0]) if m else None
    lead = s * b[0]
    for n in range(m + 1, N + 1):
        # history sum_{k=1}^{n-1} b[n-k] dc_k
        hist = b[n - 1 : 0 : -1] @ dc[1:n]
        rhs = F[n] + lead * c[n - 1] - s * hist
        if start_corr is not None:
            rhs -= s * start_corr[n]
        if diagonal:
            diag = lead + np.diagonal(At[n])
            if np.any(diag == 0):
                raise SingularStepError(f"singular step matrix at t={grid.nodes[n]:.6g}")
            c[n] = rhs / diag
        else:
            try:
                c[n] = np.linalg.solve(lead * eye + At[n], rhs)
            except np.linalg.LinAlgError:
                raise SingularStepError(
                    f"singular step matrix at t={grid.nodes[n]:.6g}"
                ) from None
        dc[n] = c[n] - c[n - 1]

    field_ = SpectralField(system.basis, grid, c)
    trace = SolveTrace("l1", grid, start_block=m, windows=[(0, N)], iterations=[1], factors=[0.0])
    trace.residual = float(residual(field_, system, alpha, D.exponents).values.max())
    return field_, trace


def residual(
    field_: SpectralField,
    system: GalerkinSystem,
    alpha: float,
    exponents: Sequence[float] | None = None,
) -> TimeSeries:
    """Nodewise sup-norm of ``c - c0 + I^alpha(A~ c) - I^alpha F``.

    The quadrature is the product-trapezoid rule with the given starting
    exponents (default: those the solvers use).
    """
    alpha = check_order(alpha)
    if field_.grid != system.grid or field_.basis.count != system.n:
        raise ValueError("field and system live on different grids or bases")
    if exponents is None:
        exponents = singular_exponents(alpha)
    P = ProductIntegrator(system.grid, alpha, exponents)
    c = field_.coefficients
    y = np.einsum("tab,tb->ta", system.A_tilde, c)
    defect = c - system.c0 + P.apply(y) - P.apply(system.F)
    return TimeSeries(system.grid, np.abs(defect).max(axis=1))


def scalar_system(
    grid: TimeGrid,
    a_tilde: float | np.ndarray,
    forcing: float | np.ndarray = 0.0,
    c0: float = 1.0,
) -> GalerkinSystem:
    """One-mode system ``D^alpha c = -a(t) c + f(t)`` for scalar studies."""
    basis = eigenpairs(Domain.interval(), 1)
    N1 = grid.N + 1
    A = np.broadcast_to(np.asarray(a_tilde, dtype=float), (N1,)).reshape(N1, 1, 1).copy()
    F = np.broadcast_to(np.asarray(forcing, dtype=float), (N1,)).reshape(N1, 1).copy()
    return GalerkinSystem(grid, basis, A, None, None, F, np.array([float(c0)]))

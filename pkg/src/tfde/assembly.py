"""Coefficients, time mollification and Galerkin assembly.

The operator is ``L u = div(a grad u) + b . grad u + c u``; projecting onto the
eigenbasis gives ``D^alpha c = -A(t) c + B(t) c + C(t) c + F(t)`` with

* ``A_{mk} = sum_ij int a_ij d_j phi_k d_i phi_m``,
* ``B_{mk} = sum_j int b_j d_j phi_k phi_m``,
* ``C_{mk} = int c phi_k phi_m``,
* ``F_m = int f phi_m``.

Coefficient fields are callables ``f(*coords, t)`` broadcasting over their
arguments. Mollification acts in time only and is linear, so it commutes with
the spatial projection: the assembled matrices are mollified entrywise, which
equals assembling from mollified coefficients.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import sympy
from scipy.interpolate import RegularGridInterpolator
from sympy.parsing.sympy_parser import (
    implicit_multiplication_application,
    parse_expr,
    standard_transformations,
)

from .basis import Domain, EigenBasis, project
from .fraccalc import TimeGrid, TimeSeries

__all__ = [
    "ExtensionMode",
    "EllipticityError",
    "EllipticityReport",
    "CoefficientSet",
    "GalerkinSystem",
    "mollifier_weights",
    "mollify",
    "mollify_array",
    "validate_ellipticity",
    "check_ellipticity_samples",
    "assemble",
    "parse_coefficients",
    "parse_field",
    "coefficient_preset",
    "read_coefficient_csv",
    "forcing_delta_proxy",
]

Field = Callable[..., np.ndarray]


class ExtensionMode(enum.Enum):
    """How a signal on ``[0, T]`` is continued before mollification."""

    EVEN = "even"
    ODD = "odd"
    ZERO = "zero"


# {{{ mollification


def mollifier_weights(epsilon: float, h: float) -> np.ndarray:
    """Discrete bump ``exp(-1/(1-(s/eps)^2))`` on offsets ``s = m h``, unit sum.

    Returns weights for offsets ``0, 1, ..., K``; the kernel is symmetric.
    """
    if not epsilon > h:
        raise ValueError(f"mollifier half-width {epsilon} must exceed the grid step {h}")
    K = int(math.ceil(epsilon / h))
    s = np.arange(K + 1) * h / epsilon
    w = np.zeros(K + 1)
    inside = s < 1.0
    w[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    total = w[0] + 2.0 * w[1:].sum()
    return w / total


def _extend(values: np.ndarray, K: int, mode: ExtensionMode) -> np.ndarray:
    N = values.shape[0] - 1
    pad_shape = (K,) + values.shape[1:]
    left_idx = np.arange(K, 0, -1)  # nodes -K..-1 mirror K..1
    right_idx = N - np.arange(1, K + 1)  # nodes N+1..N+K mirror N-1..N-K
    if mode is ExtensionMode.EVEN:
        left = values[np.clip(left_idx, 0, N)]
        right = values[np.clip(right_idx, 0, N)]
    elif mode is ExtensionMode.ODD:
        left = -values[np.clip(left_idx, 0, N)]
        right = np.zeros(pad_shape)
    else:
        left = np.zeros(pad_shape)
        right = np.zeros(pad_shape)
    if mode is ExtensionMode.ODD:
        values = values.copy()
        values[0] = 0.0
    return np.concatenate([left, values, right])


def mollify_array(
    values: np.ndarray, grid: TimeGrid, epsilon: float, mode: ExtensionMode | str
) -> np.ndarray:
    """Mollify samples along axis 0; see :func:`mollify`."""
    mode = ExtensionMode(mode)
    if not 0 < epsilon < grid.T:
        raise ValueError(f"mollifier half-width must lie in (0, T), got {epsilon}")
    w = mollifier_weights(epsilon, grid.h)
    K = w.size - 1
    if K > grid.N:
        raise ValueError("mollifier wider than the time interval")
    values = np.asarray(values, dtype=float)
    ext = _extend(values, K, mode)
    n = grid.N + 1
    center = ext[K : K + n]
    # difference form v + sum_m w_m (v_{+m} + v_{-m} - 2 v) keeps constants bitwise exact
    out = np.zeros_like(center)
    for m in range(K, 0, -1):
        out = out + w[m] * ((ext[K + m : K + m + n] - center) + (ext[K - m : K - m + n] - center))
    return center + out


def mollify(
    signal: TimeSeries, epsilon: float, mode: ExtensionMode | str = ExtensionMode.EVEN
) -> TimeSeries:
    """Convolve with a symmetric unit-mass bump of half-width ``epsilon``.

    The signal is first continued outside ``[0, T]`` by *mode*: even
    reflection about both ends, odd reflection about 0 and zero beyond ``T``,
    or zero on both sides. ``epsilon`` must exceed the grid step.
    """
    signal.require_full()
    return TimeSeries(signal.grid, mollify_array(signal.values, signal.grid, epsilon, mode))


# }}}

# {{{ coefficients


class EllipticityError(ValueError):
    """Ellipticity violated; carries the witness point, time and direction."""

    def __init__(self, message: str, x: tuple[float, ...], t: float, xi: np.ndarray) -> None:
        self.x = x
        self.t = t
        self.xi = xi
        super().__init__(f"{message} at x={x}, t={t:.6g}, xi={np.round(xi, 6).tolist()}")


@dataclass(frozen=True)
class EllipticityReport:
    lam: float
    mu: float
    lower_margin: float
    upper_margin: float
    max_abs_entry: float
    samples: int

    @property
    def passed(self) -> bool:
        return self.lower_margin >= 0 and self.upper_margin >= 0 and self.max_abs_entry <= self.mu


@dataclass(frozen=True)
class CoefficientSet:
    """Fields ``a_ij``, ``b_j``, ``c`` and the ellipticity bounds ``lam <= mu``.

    ``b`` and ``c`` are ``None`` when identically zero.
    """

    dim: int
    a: tuple[tuple[Field, ...], ...]
    b: tuple[Field, ...] | None
    c: Field | None
    lam: float
    mu: float
    description: str = ""

    def __post_init__(self) -> None:
        if len(self.a) != self.dim or any(len(row) != self.dim for row in self.a):
            raise ValueError("a must be a dim x dim array of fields")
        if self.b is not None and len(self.b) != self.dim:
            raise ValueError("b must have one field per dimension")
        if not 0 < self.lam <= self.mu:
            raise ValueError(f"need 0 < lambda <= mu, got {self.lam}, {self.mu}")

    @classmethod
    def isotropic(
        cls,
        dim: int,
        s: Field,
        lam: float,
        mu: float,
        b: Sequence[Field] | None = None,
        c: Field | None = None,
        description: str = "",
    ) -> CoefficientSet:
        zero = _constant(0.0)
        a = tuple(tuple(s if i == j else zero for j in range(dim)) for i in range(dim))
        return cls(dim, a, None if b is None else tuple(b), c, lam, mu, description)

    def sample_a(self, coords: tuple[np.ndarray, ...], t: np.ndarray) -> np.ndarray:
        """``a_ij`` on ``t x points``, shape ``(len(t), P, dim, dim)``."""
        out = np.empty((t.size, coords[0].size, self.dim, self.dim))
        for i in range(self.dim):
            for j in range(self.dim):
                out[:, :, i, j] = _sample(self.a[i][j], coords, t)
        return out


def _constant(value: float) -> Field:
    def f(*args):
        return np.full(np.broadcast(*args).shape, value)

    f.constant = value  # type: ignore[attr-defined]
    return f


def _sample(f: Field, coords: tuple[np.ndarray, ...], t: np.ndarray) -> np.ndarray:
    """Field values on the tensor lattice ``t x points``."""
    args = [c[None, :] for c in coords] + [np.asarray(t, dtype=float)[:, None]]
    values = np.asarray(f(*args), dtype=float)
    return np.broadcast_to(values, (t.size, coords[0].size))


def _probe_directions(dim: int) -> np.ndarray:
    if dim == 1:
        return np.ones((1, 1))
    eye = np.eye(dim)
    diag = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
    rng = np.random.default_rng(0)
    rand = rng.normal(size=(32, dim))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    return np.concatenate([eye, diag, rand])


def check_ellipticity_samples(
    a: np.ndarray,
    lam: float,
    mu: float,
    coords: tuple[np.ndarray, ...],
    times: np.ndarray,
) -> EllipticityReport:
    """Validate sampled ``a`` of shape ``(T, P, d, d)``; raise on violation."""
    dim = a.shape[-1]
    asym = np.abs(a - np.swapaxes(a, -1, -2))
    if asym.max() > 1e-12 * max(1.0, np.abs(a).max()):
        ti, pi = np.unravel_index(int(np.argmax(asym.max(axis=(-1, -2)))), asym.shape[:2])
        raise EllipticityError(
            "a is not symmetric", tuple(float(c[pi]) for c in coords), float(times[ti]), np.zeros(dim)
        )
    xi = _probe_directions(dim)
    forms = np.einsum("tpij,ki,kj->tpk", a, xi, xi)
    tol = 1e-12 * max(1.0, mu)
    lower = forms.min() - lam
    upper = mu - forms.max()
    for margin, idx, what in (
        (lower, np.argmin(forms), "lower ellipticity bound violated"),
        (upper, np.argmax(forms), "upper ellipticity bound violated"),
    ):
        if margin < -tol:
            ti, pi, ki = np.unravel_index(int(idx), forms.shape)
            raise EllipticityError(
                what, tuple(float(c[pi]) for c in coords), float(times[ti]), xi[ki]
            )
    max_abs = float(np.abs(a).max())
    if max_abs > mu + tol:
        ti, pi = np.unravel_index(int(np.argmax(np.abs(a).max(axis=(-1, -2)))), a.shape[:2])
        raise EllipticityError(
            "|a_ij| exceeds mu", tuple(float(c[pi]) for c in coords), float(times[ti]), np.zeros(dim)
        )
    return EllipticityReport(
        lam, mu, float(max(lower, 0.0)), float(max(upper, 0.0)), max_abs, int(forms.size)
    )


def _validation_lattice(domain: Domain, grid: TimeGrid, max_times: int = 65):
    coords, _ = domain.quadrature
    stride = max(1, coords[0].size // 512)
    pts = tuple(c[::stride] for c in coords)
    tstride = max(1, grid.N // (max_times - 1))
    times = grid.nodes[::tstride]
    if times[-1] != grid.T:
        times = np.append(times, grid.T)
    return pts, times


def validate_ellipticity(
    coeffs: CoefficientSet, domain: Domain, grid: TimeGrid
) -> EllipticityReport:
    """Check ``lam |xi|^2 <= xi^T a xi <= mu |xi|^2`` and ``|a_ij| <= mu`` on a lattice.

    The lattice is (a subsample of) the spatial quadrature points times up
    to 65 time nodes; the probe directions are the axes, the diagonals and
    32 seeded random unit vectors.
    """
    if coeffs.dim != domain.dim:
        raise ValueError("coefficient and domain dimensions differ")
    pts, times = _validation_lattice(domain, grid)
    return check_ellipticity_samples(coeffs.sample_a(pts, times), coeffs.lam, coeffs.mu, pts, times)


# }}}

# {{{ grammar


_X, _Y, _T = sympy.symbols("x y t", real=True)
_ID = sympy.Symbol("Id")
_PHI = sympy.Function("phi")
_TRANSFORMS = standard_transformations + (implicit_multiplication_application,)


def _sympify(text: str) -> object:
    local = {"x": _X, "y": _Y, "t": _T, "I": _ID, "phi": _PHI, "pi": sympy.pi, "E": sympy.E}
    try:
        return parse_expr(text, local_dict=local, transformations=_TRANSFORMS)
    except Exception as exc:  # sympy raises a zoo of exception types
        raise ValueError(f"cannot parse expression {text!r}: {exc}") from None


def _phi_expr(k: int, basis: EigenBasis) -> sympy.Expr:
    if k < 1:
        raise ValueError(f"phi index must be >= 1, got {k}")
    from .basis import eigenpairs

    b = basis if k <= basis.count else eigenpairs(basis.domain, k)
    mode = b.modes[k - 1]
    out = sympy.Integer(1)
    for sym, L, m in zip((_X, _Y), b.domain.lengths, mode):
        out = out * sympy.sqrt(sympy.Rational(2) / sympy.Float(L, 17)) * sympy.sin(m * sympy.pi * sym / sympy.Float(L, 17))
    return out


def _lambdify(expr: sympy.Expr, dim: int, basis: EigenBasis | None) -> Field:
    if expr.has(_PHI):
        if basis is None:
            raise ValueError("phi(k) needs a basis")
        expr = expr.replace(
            lambda e: isinstance(e, sympy.Function) and e.func == _PHI,
            lambda e: _phi_expr(int(e.args[0]), basis),
        )
    allowed = {_X, _T} if dim == 1 else {_X, _Y, _T}
    extra = expr.free_symbols - allowed
    if extra:
        raise ValueError(f"unknown symbols {sorted(map(str, extra))} in {expr}")
    args = (_X, _T) if dim == 1 else (_X, _Y, _T)
    fn = sympy.lambdify(args, expr, modules="numpy")
    if not expr.free_symbols:
        return _constant(float(expr))

    def f(*a):
        return np.asarray(fn(*a), dtype=float)

    return f


def parse_field(text: str, dim: int, basis: EigenBasis | None = None) -> Field:
    """Scalar field ``f(x[, y], t)`` from an expression; ``phi(k)`` is the k-th eigenfunction."""
    expr = _sympify(text)
    if not isinstance(expr, sympy.Expr) or expr.has(_ID):
        raise ValueError(f"expected a scalar expression, got {text!r}")
    return _lambdify(expr, dim, basis)


def parse_coefficients(
    text: str,
    dim: int,
    lam: float | None = None,
    mu: float | None = None,
    domain: Domain | None = None,
    grid: TimeGrid | None = None,
) -> CoefficientSet:
    """Parse ``"a: (1+0.5*sin(t))*I; b: 0; c: 0"``.

    ``a`` is ``s*I`` or a nested list ``[[a11, a12], [a21, a22]]``; ``b`` is a
    scalar (1-D) or a list; ``c`` a scalar. Missing ``b``/``c`` mean zero.
    Missing ``lam``/``mu`` are measured on the validation lattice of
    *domain* x *grid*.
    """
    parts: dict[str, str] = {}
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        if ":" not in chunk:
            raise ValueError(f"expected 'name: expression', got {chunk.strip()!r}")
        name, expr = chunk.split(":", 1)
        name = name.strip().lower()
        if name not in ("a", "b", "c"):
            raise ValueError(f"unknown coefficient {name!r}")
        if name in parts:
            raise ValueError(f"coefficient {name!r} given twice")
        parts[name] = expr.strip()
    if "a" not in parts:
        raise ValueError("coefficient 'a' is required")

    zero = _constant(0.0)
    a_expr = _sympify(parts["a"])
    if isinstance(a_expr, (list, tuple)):
        rows = [list(r) if isinstance(r, (list, tuple)) else [r] for r in a_expr]
        if len(rows) != dim or any(len(r) != dim for r in rows):
            raise ValueError(f"a must be {dim}x{dim}")
        a = tuple(tuple(_lambdify(sympy.sympify(e), dim, None) for e in r) for r in rows)
    else:
        scalar = sympy.expand(a_expr)
        if scalar.has(_ID):
            s = sympy.simplify(scalar / _ID)
            if s.has(_ID):
                raise ValueError(f"a must be linear in I, got {parts['a']!r}")
        elif dim == 1:
            s = scalar
        else:
            raise ValueError("a scalar a needs '*I' in two dimensions")
        sf = _lambdify(s, dim, None)
        a = tuple(tuple(sf if i == j else zero for j in range(dim)) for i in range(dim))

    b = None
    if "b" in parts:
        b_expr = _sympify(parts["b"])
        items = list(b_expr) if isinstance(b_expr, (list, tuple)) else [b_expr]
        if len(items) == 1 and items[0] == 0:
            items = [0] * dim
        if len(items) != dim:
            raise ValueError(f"b needs {dim} components")
        if not all(sympy.sympify(e) == 0 for e in items):
            b = tuple(_lambdify(sympy.sympify(e), dim, None) for e in items)
    c = None
    if "c" in parts:
        c_expr = _sympify(parts["c"])
        if not isinstance(c_expr, sympy.Expr):
            raise ValueError("c must be scalar")
        if c_expr != 0:
            c = _lambdify(c_expr, dim, None)

    if lam is None or mu is None:
        if domain is None or grid is None:
            raise ValueError("lambda/mu missing and no lattice to measure them on")
        pts, times = _validation_lattice(domain, grid)
        probe = CoefficientSet(dim, a, b, c, 1.0, 1.0)
        eig = np.linalg.eigvalsh(probe.sample_a(pts, times))
        lam = float(eig.min()) if lam is None else lam
        mu = float(max(eig.max(), np.abs(probe.sample_a(pts, times)).max())) if mu is None else mu
    return CoefficientSet(dim, a, b, c, float(lam), float(mu), text.strip())


def coefficient_preset(name: str, dim: int) -> CoefficientSet:
    """Named coefficient sets.

    * ``const``: ``a = I``
    * ``separable``: ``a = (1 + sin(t)/2) I``
    * ``checkerboard``: ``a = s(x) I`` with ``s`` alternating 3/2 and 3/4 on a
      4-cell (per axis) partition of the domain, normalized to ``[0, pi]``
    * ``reaction``: ``a = I``, ``b = 1/2`` per axis, ``c = -1 + cos(t)/2``
    """
    name = name.strip().lower()
    if name == "const":
        return CoefficientSet.isotropic(dim, _constant(1.0), 1.0, 1.0, description="a: I")
    if name == "separable":
        return CoefficientSet.isotropic(
            dim, lambda *a: 1.0 + 0.5 * np.sin(a[-1]), 0.5, 1.5, description="a: (1+0.5*sin(t))*I"
        )
    if name == "checkerboard":

        def s(*a):
            cells = sum(np.floor(4.0 * np.asarray(c) / math.pi) for c in a[:-1])
            return np.where(np.remainder(cells, 2.0) == 0.0, 1.5, 0.75) + 0.0 * a[-1]

        return CoefficientSet.isotropic(dim, s, 0.75, 1.5, description="a: checkerboard*I")
    if name == "reaction":
        half = _constant(0.5)
        return CoefficientSet.isotropic(
            dim,
            _constant(1.0),
            1.0,
            1.0,
            b=[half] * dim,
            c=lambda *a: -1.0 + 0.5 * np.cos(a[-1]),
            description="a: I; b: 0.5; c: -1+0.5*cos(t)",
        )
    raise ValueError(f"unknown coefficient preset {name!r}")


def read_coefficient_csv(
    path: str | Path, dim: int, lam: float | None = None, mu: float | None = None
) -> CoefficientSet:
    """Isotropic ``a = s(x[, y], t) I`` tabulated as ``x[,y],t,value`` on a tensor lattice."""
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = np.array([[float(v) for v in row] for row in reader if row])
    expected = (["x"] if dim == 1 else ["x", "y"]) + ["t", "value"]
    if header != expected:
        raise ValueError(f"{path}: expected header {','.join(expected)}")
    axes = [np.unique(rows[:, i]) for i in range(dim + 1)]
    shape = tuple(a.size for a in axes)
    if rows.shape[0] != int(np.prod(shape)):
        raise ValueError(f"{path}: samples do not form a tensor lattice")
    order = np.lexsort(tuple(rows[:, i] for i in reversed(range(dim + 1))))
    values = rows[order, -1].reshape(shape)
    interp = RegularGridInterpolator(axes, values, bounds_error=False, fill_value=None)

    def s(*a):
        pts = np.stack(np.broadcast_arrays(*a), axis=-1)
        return interp(pts)

    lam = float(values.min()) if lam is None else lam
    mu = float(values.max()) if mu is None else mu
    return CoefficientSet.isotropic(dim, s, lam, mu, description=f"csv: {path}")


# }}}

# {{{ assembly


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    """Time-sampled Galerkin matrices of ``D^alpha c = -(A - B - C) c + F``.

    ``B`` and ``C`` are ``None`` when the corresponding coefficients vanish.
    ``F_raw`` is the projected forcing before mollification.
    """

    grid: TimeGrid
    basis: EigenBasis
    A: np.ndarray
    B: np.ndarray | None
    C: np.ndarray | None
    F: np.ndarray
    c0: np.ndarray
    epsilon: float = 0.0
    F_raw: np.ndarray | None = None
    lam: float = 1.0

    def __post_init__(self) -> None:
        n, N1 = self.basis.count, self.grid.N + 1
        for name in ("A", "B", "C"):
            M = getattr(self, name)
            if M is not None and M.shape != (N1, n, n):
                raise ValueError(f"{name} has shape {M.shape}, expected {(N1, n, n)}")
        if self.F.shape != (N1, n) or self.c0.shape != (n,):
            raise ValueError("forcing or initial data do not match the basis/grid")
        if self.F_raw is None:
            object.__setattr__(self, "F_raw", self.F)

    @property
    def n(self) -> int:
        return self.basis.count

    @property
    def A_tilde(self) -> np.ndarray:
        out = self.A.copy()
        if self.B is not None:
            out -= self.B
        if self.C is not None:
            out -= self.C
        return out

    @property
    def is_decoupled(self) -> bool:
        At = self.A_tilde
        off = At - np.einsum("tii->ti", At)[:, :, None] * np.eye(self.n)
        return bool(np.abs(off).max() <= 1e-14 * max(1.0, np.abs(At).max()))


def _time_chunks(N1: int, P: int, budget: int = 2_000_000) -> list[slice]:
    step = max(1, budget // max(P, 1))
    return [slice(i, min(i + step, N1)) for i in range(0, N1, step)]


def _is_const(f: Field) -> float | None:
    return getattr(f, "constant", None)


def assemble(
    coeffs: CoefficientSet,
    forcing: Field | np.ndarray | None,
    u0: Field | np.ndarray | None,
    basis: EigenBasis,
    grid: TimeGrid,
    epsilon: float | None = None,
    validate: bool = True,
) -> GalerkinSystem:
    """Assemble ``A, B, C, F`` on every time node and project ``u0``.

    *forcing* is a field ``f(*coords, t)`` or precomputed coefficients of
    shape ``(N+1, n)``; *u0* a spatial field or a coefficient vector.
    ``epsilon`` is the mollifier half-width (``None``: ``1/n``; ``0``: off).
    """
    if coeffs.dim != basis.domain.dim:
        raise ValueError("coefficient and domain dimensions differ")
    if validate:
        validate_ellipticity(coeffs, basis.domain, grid)
    eps = 1.0 / basis.count if epsilon is None else float(epsilon)
    if eps < 0:
        raise ValueError("epsilon must be nonnegative")
    if eps > 0 and not eps > grid.h:
        raise ValueError(f"mollifier half-width {eps} does not exceed the grid step {grid.h}")

    coords, w = basis.domain.quadrature
    phi = basis.lattice_values  # (P, n)
    grads = basis.lattice_gradients  # (d, P, n)
    n, d, N1 = basis.count, basis.domain.dim, grid.N + 1
    t = grid.nodes

    A = np.zeros((N1, n, n))
    for i in range(d):
        for j in range(i, d):
            const = _is_const(coeffs.a[i][j])
            if const == 0.0:
                continue
            # d_j phi_k d_i phi_m, symmetrized over (i, j) when i != j
            Q = np.einsum("pm,pk->pmk", grads[i], grads[j])
            if i != j:
                Q = Q + np.einsum("pm,pk->pmk", grads[j], grads[i])
            Q = Q.reshape(-1, n * n)
            if const is not None:
                A += const * (w @ Q).reshape(n, n)
                continue
            for sl in _time_chunks(N1, w.size):
                vals = _sample(coeffs.a[i][j], coords, t[sl])
                A[sl] += ((vals * w) @ Q).reshape(-1, n, n)
    A = 0.5 * (A + np.swapaxes(A, 1, 2))

    B = None
    if coeffs.b is not None:
        B = np.zeros((N1, n, n))
        for j in range(d):
            Q = np.einsum("pm,pk->pmk", phi, grads[j]).reshape(-1, n * n)
            for sl in _time_chunks(N1, w.size):
                vals = _sample(coeffs.b[j], coords, t[sl])
                B[sl] += ((vals * w) @ Q).reshape(-1, n, n)
    C = None
    if coeffs.c is not None:
        C = np.zeros((N1, n, n))
        Q = np.einsum("pm,pk->pmk", phi, phi).reshape(-1, n * n)
        for sl in _time_chunks(N1, w.size):
            vals = _sample(coeffs.c, coords, t[sl])
            C[sl] += ((vals * w) @ Q).reshape(-1, n, n)
        C = 0.5 * (C + np.swapaxes(C, 1, 2))

    if forcing is None:
        F = np.zeros((N1, n))
    elif callable(forcing):
        F = np.zeros((N1, n))
        for sl in _time_chunks(N1, w.size):
            F[sl] = project(_sample(forcing, coords, t[sl]), basis)
    else:
        F = np.asarray(forcing, dtype=float)
        if F.shape != (N1, n):
            raise ValueError(f"forcing coefficients of shape {F.shape}, expected {(N1, n)}")
    F_raw = F.copy()

    if u0 is None:
        c0 = np.zeros(n)
    elif callable(u0):
        c0 = project(u0, basis)
    else:
        c0 = np.asarray(u0, dtype=float)
        if c0.shape != (n,):
            raise ValueError(f"initial coefficients of shape {c0.shape}, expected {(n,)}")

    if eps > 0:
        A = mollify_array(A.reshape(N1, -1), grid, eps, ExtensionMode.EVEN).reshape(N1, n, n)
        if B is not None:
            B = mollify_array(B.reshape(N1, -1), grid, eps, ExtensionMode.ZERO).reshape(N1, n, n)
        if C is not None:
            C = mollify_array(C.reshape(N1, -1), grid, eps, ExtensionMode.ZERO).reshape(N1, n, n)
        F = mollify_array(F, grid, eps, ExtensionMode.ODD)

    for name, M in (("A", A), ("B", B), ("C", C), ("F", F), ("c0", c0)):
        if M is not None and not np.isfinite(M).all():
            raise ValueError(f"assembled {name} has non-finite entries")
    return GalerkinSystem(grid, basis, A, B, C, F, c0, eps, F_raw, coeffs.lam)


def forcing_delta_proxy(system: GalerkinSystem) -> float:
    """``sup_t int_t^{t+eps} ||f||^2_{H^-1}`` of the unmollified forcing (0 when off)."""
    eps = system.epsilon
    if eps <= 0:
        return 0.0
    dual = (system.F_raw**2) @ (1.0 / system.basis.eigenvalues)
    t = system.grid.nodes
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dual[1:] + dual[:-1]) * np.diff(t))])
    upper = np.interp(np.minimum(t + eps, t[-1]), t, cum)
    return float((upper - cum).max())


# }}}

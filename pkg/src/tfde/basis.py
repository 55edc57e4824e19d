"""Dirichlet Laplacian eigenpairs on an interval or a rectangle.

Fields are plain callables of the coordinate arrays: ``f(x)`` on an interval
and ``f(x, y)`` on a rectangle. All inner products use one composite
Gauss-Legendre lattice per domain (``M`` panels of 8 points per axis), so the
discrete Gram and stiffness matrices of the sine basis are exact to rounding.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .fraccalc import TimeGrid

__all__ = [
    "Domain",
    "EigenBasis",
    "SpectralField",
    "eigenpairs",
    "project",
    "reconstruct",
    "spatial_preset",
    "read_lattice_csv",
    "write_lattice_csv",
]

GAUSS_POINTS = 8


def _sinpi(s: np.ndarray) -> np.ndarray:
    """``sin(pi s)``, exactly zero at integers."""
    r = np.remainder(s, 2.0)
    return np.where(r == np.round(r), 0.0, np.sin(np.pi * r))


def _cospi(s: np.ndarray) -> np.ndarray:
    return np.cos(np.pi * np.remainder(s, 2.0))


def _composite_gauss(length: float, panels: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    h = length / panels
    left = h * np.arange(panels)
    x = (left[:, None] + 0.5 * h * (nodes[None, :] + 1.0)).ravel()
    w = np.tile(0.5 * h * weights, panels)
    return x, w


@dataclass(frozen=True)
class Domain:
    """``[0, L]`` or ``[0, Lx] x [0, Ly]`` with ``M`` quadrature panels per axis."""

    kind: str
    lengths: tuple[float, ...]
    M: int = 32

    def __post_init__(self) -> None:
        expected = {"interval": 1, "rectangle": 2}
        if self.kind not in expected:
            raise ValueError(f"unsupported domain kind {self.kind!r}")
        lengths = tuple(float(v) for v in self.lengths)
        if len(lengths) != expected[self.kind]:
            raise ValueError(f"{self.kind} needs {expected[self.kind]} lengths")
        if not all(v > 0 and math.isfinite(v) for v in lengths):
            raise ValueError(f"domain lengths must be positive, got {lengths}")
        if self.M < 16:
            raise ValueError(f"quadrature resolution must be >= 16, got {self.M}")
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def interval(cls, L: float = math.pi, M: int = 32) -> Domain:
        return cls("interval", (L,), M)

    @classmethod
    def rectangle(cls, Lx: float = math.pi, Ly: float = math.pi, M: int = 16) -> Domain:
        return cls("rectangle", (Lx, Ly), M)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))

    @cached_property
    def axes(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        return tuple(_composite_gauss(L, self.M) for L in self.lengths)

    @cached_property
    def quadrature(self) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
        """Flattened lattice coordinates and weights."""
        if self.dim == 1:
            x, w = self.axes[0]
            return (x,), w
        (x, wx), (y, wy) = self.axes
        X, Y = np.meshgrid(x, y, indexing="ij")
        return (X.ravel(), Y.ravel()), np.outer(wx, wy).ravel()

    def boundary_points(self, count: int = 33) -> tuple[np.ndarray, ...]:
        if self.dim == 1:
            return (np.array([0.0, self.lengths[0]]),)
        Lx, Ly = self.lengths
        s = np.linspace(0.0, 1.0, count)
        x = np.concatenate([s * Lx, s * Lx, np.zeros(count), np.full(count, Lx)])
        y = np.concatenate([np.zeros(count), np.full(count, Ly), s * Ly, s * Ly])
        return x, y


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """The first ``count`` Dirichlet eigenpairs in ascending eigenvalue order."""

    domain: Domain
    count: int
    modes: tuple[tuple[int, ...], ...]
    eigenvalues: np.ndarray

    def __post_init__(self) -> None:
        if len(self.modes) != self.count or self.eigenvalues.shape != (self.count,):
            raise ValueError("mode list does not match count")
        self.eigenvalues.setflags(write=False)

    def _factors(self, coords: tuple[np.ndarray, ...], derivative: int | None = None):
        out = []
        for axis, (L, x) in enumerate(zip(self.domain.lengths, coords)):
            k = np.array([m[axis] for m in self.modes], dtype=float)
            freq = k * math.pi / L
            half_turns = np.multiply.outer(np.asarray(x, dtype=float) / L, k)
            scale = math.sqrt(2.0 / L)
            if derivative == axis:
                out.append(scale * freq * _cospi(half_turns))
            else:
                out.append(scale * _sinpi(half_turns))
        return out

    def evaluate(self, *coords: np.ndarray) -> np.ndarray:
        """``phi_k`` at the points, shape ``(*points, count)``."""
        factors = self._factors(coords)
        return factors[0] if len(factors) == 1 else factors[0] * factors[1]

    def gradient(self, *coords: np.ndarray) -> np.ndarray:
        """``grad phi_k`` at the points, shape ``(dim, *points, count)``."""
        parts = []
        for axis in range(self.domain.dim):
            factors = self._factors(coords, derivative=axis)
            parts.append(factors[0] if len(factors) == 1 else factors[0] * factors[1])
        return np.stack(parts)

    @cached_property
    def lattice_values(self) -> np.ndarray:
        coords, _ = self.domain.quadrature
        return self.evaluate(*coords)

    @cached_property
    def lattice_gradients(self) -> np.ndarray:
        coords, _ = self.domain.quadrature
        return self.gradient(*coords)

    def gram(self) -> np.ndarray:
        _, w = self.domain.quadrature
        phi = self.lattice_values
        return phi.T @ (w[:, None] * phi)

    def stiffness(self) -> np.ndarray:
        _, w = self.domain.quadrature
        grads = self.lattice_gradients
        return sum(g.T @ (w[:, None] * g) for g in grads)

    def mode_function(self, k: int) -> Callable[..., np.ndarray]:
        """The eigenfunction ``phi_k`` (1-based) as a field callable."""
        if not 1 <= k <= self.count:
            raise ValueError(f"mode {k} outside 1..{self.count}")
        sub = EigenBasis(self.domain, 1, (self.modes[k - 1],), self.eigenvalues[k - 1 : k].copy())
        return lambda *coords: sub.evaluate(*coords)[..., 0]


def eigenpairs(domain: Domain, n: int) -> EigenBasis:
    if int(n) != n or n < 1:
        raise ValueError(f"need at least one mode, got {n}")
    n = int(n)
    if domain.kind == "interval":
        (L,) = domain.lengths
        modes = tuple((k,) for k in range(1, n + 1))
        lam = np.array([(k * math.pi / L) ** 2 for k in range(1, n + 1)])
        return EigenBasis(domain, n, modes, lam)
    if domain.kind == "rectangle":
        Lx, Ly = domain.lengths
        # every mode with eigenvalue below the n-th is among p, q <= n
        cand = [
            ((p * math.pi / Lx) ** 2 + (q * math.pi / Ly) ** 2, p, q)
            for p in range(1, n + 1)
            for q in range(1, n + 1)
        ]
        # round before sorting so analytically equal eigenvalues tie exactly
        cand.sort(key=lambda e: (round(e[0], 9), e[1], e[2]))
        chosen = cand[:n]
        modes = tuple((p, q) for _, p, q in chosen)
        lam = np.array([v for v, _, _ in chosen])
        return EigenBasis(domain, n, modes, lam)
    raise ValueError(f"unsupported domain kind {domain.kind!r}")


def _lattice_samples(field, basis: EigenBasis) -> np.ndarray:
    coords, w = basis.domain.quadrature
    if callable(field):
        values = np.broadcast_to(np.asarray(field(*coords), dtype=float), w.shape)
    else:
        values = np.asarray(field, dtype=float)
        if values.shape[-1] != w.size:
            raise ValueError(
                f"sample array has {values.shape[-1]} points, lattice has {w.size}"
            )
    bad = ~np.isfinite(values)
    if bad.any():
        raise ValueError(f"non-finite field value at lattice point {int(np.argmax(bad.ravel()))}")
    return values


def project(field, basis: EigenBasis) -> np.ndarray:
    """``(<f, phi_k>)_k`` by the domain quadrature.

    *field* is a callable of the coordinates or samples on the quadrature
    lattice (last axis); leading axes of samples are kept, e.g. time.
    """
    _, w = basis.domain.quadrature
    values = _lattice_samples(field, basis)
    return (values * w) @ basis.lattice_values


def reconstruct(coeffs: np.ndarray, basis: EigenBasis, *coords: np.ndarray) -> np.ndarray:
    """``sum_k c_k phi_k`` at the points; leading axes of *coeffs* are kept."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] != basis.count:
        raise ValueError(f"expected {basis.count} coefficients, got {coeffs.shape[-1]}")
    phi = basis.evaluate(*coords)
    return coeffs @ phi.reshape(-1, basis.count).T


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Galerkin coefficients ``c_k(t_j)`` of a trajectory, shape ``(N+1, n)``."""

    basis: EigenBasis
    grid: TimeGrid
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coefficients, dtype=float)
        if c.shape != (self.grid.N + 1, self.basis.count):
            raise ValueError(
                f"coefficients of shape {c.shape}, expected {(self.grid.N + 1, self.basis.count)}"
            )
        if not np.isfinite(c).all():
            raise ValueError("spectral field has non-finite coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def l2_norms(self) -> np.ndarray:
        """``||u(t_j)||_{L^2}`` (Parseval)."""
        return np.sqrt((self.coefficients**2).sum(axis=1))

    @property
    def h1_seminorms_sq(self) -> np.ndarray:
        """``||grad u(t_j)||^2 = sum_k lambda_k c_k^2``."""
        return (self.coefficients**2) @ self.basis.eigenvalues

    def sample(self, *coords: np.ndarray) -> np.ndarray:
        """Field values, shape ``(N+1, points)``."""
        return reconstruct(self.coefficients, self.basis, *coords)


# {{{ spatial presets and lattice CSV


def _bump(domain: Domain) -> Callable[..., np.ndarray]:
    centers = [L / 2 for L in domain.lengths]
    radius = min(domain.lengths) / 4

    def f(*coords):
        r2 = sum((np.asarray(c) - c0) ** 2 for c, c0 in zip(coords, centers)) / radius**2
        out = np.zeros(np.broadcast(*coords).shape)
        inside = r2 < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        return out

    return f


def spatial_preset(name: str, basis: EigenBasis) -> Callable[..., np.ndarray]:
    """Named spatial fields: ``parabola``, ``sine:k`` (the eigenfunction phi_k), ``bump``, ``zero``."""
    name = name.strip().lower()
    domain = basis.domain
    if name == "zero":
        return lambda *coords: np.zeros(np.broadcast(*coords).shape)
    if name == "parabola":
        def parabola(*coords):
            out = 1.0
            for c, L in zip(coords, domain.lengths):
                out = out * np.asarray(c) * (L - np.asarray(c))
            return out
        return parabola
    if name == "bump":
        return _bump(domain)
    if name.startswith("sine:"):
        try:
            k = int(name.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad mode index in preset {name!r}") from None
        if k > basis.count:
            return eigenpairs(domain, k).mode_function(k)
        return basis.mode_function(k)
    raise ValueError(f"unknown spatial preset {name!r}")


def read_lattice_csv(path: str | Path, domain: Domain) -> Callable[..., np.ndarray]:
    """Load ``x[,y],value`` samples on a tensor lattice as a (multi)linear interpolant."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = np.array([[float(v) for v in row] for row in reader if row])
    expected = ["x", "value"] if domain.dim == 1 else ["x", "y", "value"]
    if header != expected:
        raise ValueError(f"{path}: expected header {','.join(expected)}")
    axes = [np.unique(rows[:, i]) for i in range(domain.dim)]
    shape = tuple(a.size for a in axes)
    if rows.shape[0] != int(np.prod(shape)):
        raise ValueError(f"{path}: samples do not form a tensor lattice")
    order = np.lexsort(tuple(rows[:, i] for i in reversed(range(domain.dim))))
    values = rows[order, -1].reshape(shape)
    interp = RegularGridInterpolator(axes, values, bounds_error=False, fill_value=None)

    def f(*coords):
        pts = np.stack(np.broadcast_arrays(*coords), axis=-1)
        return interp(pts)

    return f


def write_lattice_csv(path: str | Path, coords: tuple[np.ndarray, ...], values: np.ndarray) -> None:
    names = ["x", "y"][: len(coords)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["value"])
        for row in zip(*coords, values):
            writer.writerow([f"{v:.15g}" for v in row])


# }}}

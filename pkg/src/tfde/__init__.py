"""Time-fractional diffusion: fractional calculus, Mittag-Leffler evaluation,
spectral Galerkin solvers and numerical energy checks."""

from .fraccalc import TimeGrid, TimeSeries, caputo_derivative, frac_integral, rl_derivative
from .mittag import MLParams, gronwall_bound, ml
from .basis import Domain, EigenBasis, SpectralField, eigenpairs
from .assembly import CoefficientSet, GalerkinSystem, assemble, mollify
from .volterra import PicardConfig, l1_step_solve, picard_solve
from .solver import ProblemSpec, Solution, manufactured_error, preset, solve

__all__ = [
    "TimeGrid",
    "TimeSeries",
    "caputo_derivative",
    "frac_integral",
    "rl_derivative",
    "MLParams",
    "gronwall_bound",
    "ml",
    "Domain",
    "EigenBasis",
    "SpectralField",
    "eigenpairs",
    "CoefficientSet",
    "GalerkinSystem",
    "assemble",
    "mollify",
    "PicardConfig",
    "l1_step_solve",
    "picard_solve",
    "ProblemSpec",
    "Solution",
    "manufactured_error",
    "preset",
    "solve",
]

"""Euler-Maruyama simulation of stochastic functional differential equations
driven by fractional Brownian motion with Hurst parameter H > 1/2."""

from .coefficient import (
    ConstantCoefficient,
    IntegralFunctional,
    Measure,
    OuterFunction,
    PointDelay,
    paper_coefficient,
)
from .convergence import RateExperimentConfig, fit_rate, run_ladder, sup_error
from .euler import euler_solve, reference_solve, scheme_remainder, solution_remainder
from .fbm import FbmPath, sample_fbm_cholesky, sample_fbm_circulant, subsample
from .path import GridPath, GridSpec, InitialCondition, Segment, build_grid, segment_at

__version__ = "0.1.0"

__all__ = [
    "ConstantCoefficient",
    "IntegralFunctional",
    "Measure",
    "OuterFunction",
    "PointDelay",
    "paper_coefficient",
    "RateExperimentConfig",
    "fit_rate",
    "run_ladder",
    "sup_error",
    "euler_solve",
    "reference_solve",
    "scheme_remainder",
    "solution_remainder",
    "FbmPath",
    "sample_fbm_cholesky",
    "sample_fbm_circulant",
    "subsample",
    "GridPath",
    "GridSpec",
    "InitialCondition",
    "Segment",
    "build_grid",
    "segment_at",
]

"""Variable-metric inexact proximal gradient solvers for composite problems
whose nonsmooth part has no closed-form proximal mapping."""

from .driver import (RunReport, SolverConfig, UncertifiedSolveError,
                     power_schedule, run)
from .problem import CompositeProblem

__all__ = [
    "CompositeProblem",
    "RunReport",
    "SolverConfig",
    "UncertifiedSolveError",
    "power_schedule",
    "run",
]

__version__ = "0.1.0"

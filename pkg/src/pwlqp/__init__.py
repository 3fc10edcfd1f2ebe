"""Active-set solver for convex quadratic programs with piecewise-linear terms.

The outer loop is a proximal method of multipliers; each sub-problem is
solved by a semismooth Newton method whose linear systems only involve the
currently active rows and columns.  An optional proximal ADMM supplies the
starting point.
"""

from .models import (
    LabeledDataset,
    ReturnsDataset,
    build_cvar,
    build_masd,
    build_quantile,
    build_svm,
)
from .pmm import PenaltySchedule, SolveReport, Status, pmm_solve
from .problem import Iterate, ProblemData, make_problem, objective
from .solver import solve

__all__ = [
    "Iterate",
    "LabeledDataset",
    "PenaltySchedule",
    "ProblemData",
    "ReturnsDataset",
    "SolveReport",
    "Status",
    "build_cvar",
    "build_masd",
    "build_quantile",
    "build_svm",
    "make_problem",
    "objective",
    "pmm_solve",
    "solve",
]

__version__ = "0.1.0"

"""Constrained derivatives and second-order classification of stationary points.

Objective and constraint are scalar expressions in named variables (see
:mod:`condiff.expr`).  The package computes constrained gradients under a
choice of weights, constrained Hessians by several routes, classifies
stationary points from the retained spectrum, and locates stationary points
with a KKT Newton multistart.
"""

__version__ = "0.1.0"  # read by probio before the imports below

from .autodiff import Jet, check_jet, fd_jet, jet
from .chessian import (ConstrainedJet, Method, constrained_taylor, general_hessian,
                       lagrange_multiplier, retraction_hessian, rho_hessian_kernel,
                       stationary_hessian, successive_hessian, successive_third)
from .classify import (Classification, Tolerances, Verdict, VerdictKind,
                       bordered_oracle, chart_oracle, classify, eigensym,
                       excluded_direction)
from .errors import CondiffError
from .expr import Expr, parse
from .probio import Problem, Report, bundled_problem_path, load_problem
from .projection import (HOMOGENEOUS, ORTHOGONAL, ConstraintSpec, Custom,
                         Homogeneous, Orthogonal, RetractionKind, constrained_gradient,
                         projection_kernel, retract)
from .solver import StationaryPoint, kkt_residual, multistart, newton_kkt

__all__ = [
    "bordered_oracle",
    "chart_oracle",
    "check_jet",
    "Classification",
    "classify",
    "CondiffError",
    "constrained_gradient",
    "constrained_taylor",
    "ConstrainedJet",
    "ConstraintSpec",
    "Custom",
    "eigensym",
    "excluded_direction",
    "Expr",
    "fd_jet",
    "general_hessian",
    "HOMOGENEOUS",
    "Homogeneous",
    "Jet",
    "jet",
    "kkt_residual",
    "lagrange_multiplier",
    "load_problem",
    "bundled_problem_path",
    "Method",
    "multistart",
    "newton_kkt",
    "ORTHOGONAL",
    "Orthogonal",
    "parse",
    "Problem",
    "projection_kernel",
    "Report",
    "retract",
    "retraction_hessian",
    "RetractionKind",
    "rho_hessian_kernel",
    "stationary_hessian",
    "StationaryPoint",
    "successive_hessian",
    "successive_third",
    "Tolerances",
    "Verdict",
    "VerdictKind",
]

"""Bi-level optimization by aggregated descent with reverse-mode hypergradients."""

from .errors import (
    BilevelError,
    ConfigurationError,
    EvaluationError,
    FormatError,
    InputError,
    ParameterError,
)
from .hypergrad import HypergradResult, fd_hypergrad, relative_error, reverse_unroll, truncated_reverse
from .inner import (
    Constant,
    InnerTape,
    Reciprocal,
    Schedule,
    Scheme,
    Theoretical,
    alpha_at,
    beta_of,
    final_iterate,
    run_inner,
)
from .kernels import BACKEND
from .outer import RunTrace, SolveConfig, dist_to_solution_set, metrics, phi_on_grid, solve
from .problem import (
    BilevelProblem,
    BoxSet,
    OracleReport,
    ProblemConstants,
    Reference,
    project_box,
    verify_first_order,
    verify_hvp,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BilevelError",
    "BilevelProblem",
    "BoxSet",
    "ConfigurationError",
    "Constant",
    "EvaluationError",
    "FormatError",
    "HypergradResult",
    "InnerTape",
    "InputError",
    "OracleReport",
    "ParameterError",
    "ProblemConstants",
    "Reciprocal",
    "Reference",
    "RunTrace",
    "Schedule",
    "Scheme",
    "SolveConfig",
    "Theoretical",
    "alpha_at",
    "beta_of",
    "dist_to_solution_set",
    "fd_hypergrad",
    "final_iterate",
    "metrics",
    "phi_on_grid",
    "project_box",
    "relative_error",
    "reverse_unroll",
    "run_inner",
    "solve",
    "truncated_reverse",
    "verify_first_order",
    "verify_hvp",
]

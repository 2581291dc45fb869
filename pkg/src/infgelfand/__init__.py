"""Numerical suite for the infinity-Laplacian Gelfand problem: minimal
branches of min{ |grad u| - lam e^u, -L_inf u } = 0, extinction thresholds,
explicit cone solutions, and the finite-exponent companion solvers."""

from .errors import (
    BracketInvalidError,
    EmptyInteriorError,
    GelfandError,
    InvalidLambdaError,
    MaxIterError,
    NonPositiveRHSError,
    NoRootError,
    OverflowGuardError,
    UsageError,
)
from .geometry import (
    Annulus,
    Ball,
    GridDomain,
    Interval,
    Mask,
    Rectangle,
    ScalarField,
    Stadium,
    StencilSet,
    build_domain,
    distance_field,
    lambda1_infinity,
    load_domain_json,
    max_distance_set,
    shape_from_json,
)
from .limit_solver import (
    BranchPoint,
    LambdaMaxEstimate,
    LimitConfig,
    SolveReport,
    SolveStatus,
    compute_branch,
    estimate_lambda_max,
    gelfand_residual,
    solve_frozen_rhs,
    solve_limit_gelfand,
    uniqueness_probe,
)

__version__ = "0.1.0"

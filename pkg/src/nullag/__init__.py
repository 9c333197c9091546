"""Null Lagrangians at the boundary: exact decisions and numerical experiments."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    GrowthViolation,
    InvalidArgument,
    NotBoundaryNL,
    NotQuasiaffine,
    NullagError,
    OptimizationFailure,
    UnsupportedDimension,
)
from .nullag_core import (  # noqa: E402
    boundary_nl_basis,
    boundary_trace_q,
    decompose_boundary,
    decompose_minors,
    is_boundary_nl,
    special_form,
)
from .polyform import PolyMatrixFn, parse_poly  # noqa: E402

__all__ = [
    "GrowthViolation",
    "InvalidArgument",
    "NotBoundaryNL",
    "NotQuasiaffine",
    "NullagError",
    "OptimizationFailure",
    "PolyMatrixFn",
    "UnsupportedDimension",
    "boundary_nl_basis",
    "boundary_trace_q",
    "decompose_boundary",
    "decompose_minors",
    "is_boundary_nl",
    "parse_poly",
    "special_form",
]

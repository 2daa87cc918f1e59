"""Cohesive and brittle debonding of an adhesive membrane, and the limit between them."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigurationError,
    DebondError,
    DomainError,
    InternalConsistencyError,
    NonConvergenceError,
    RefusalError,
    SolverFailure,
)

__all__ = [
    "__version__",
    "ConfigurationError",
    "DebondError",
    "DomainError",
    "InternalConsistencyError",
    "NonConvergenceError",
    "RefusalError",
    "SolverFailure",
]

"""Exception hierarchy shared by all modules."""


class DebondError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(DebondError, ValueError):
    """Inconsistent geometry, density, loading or run configuration.

    ``problems`` lists every violated rule, not just the first one.
    """

    def __init__(self, message, problems=None, lineno=None):
        super().__init__(message)
        self.problems = list(problems) if problems else [message]
        self.lineno = lineno


class DomainError(DebondError, ValueError):
    """Argument outside the domain of a density or loading function."""


class SolverFailure(DebondError, RuntimeError):
    """Linear solver exceeded its iteration cap."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NonConvergenceError(DebondError, RuntimeError):
    """No restart candidate of a step minimization converged."""

    def __init__(self, message, best=None, objective=None):
        super().__init__(message)
        self.best = best
        self.objective = objective


class InternalConsistencyError(DebondError, RuntimeError):
    """A state invariant was violated during an evolution; ``state`` holds a dump."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state or {}


class RefusalError(DebondError, ValueError):
    """Request outside what an operation agrees to handle (e.g. oracle too large)."""

"""Exception types shared across the package."""


class BregmanSkmError(Exception):
    """Base class for all package errors."""


class DomainError(BregmanSkmError):
    """Input lies outside the domain a geometry operation requires."""


class DimensionMismatch(BregmanSkmError):
    """Operand dimensions disagree."""


class ConfigError(BregmanSkmError):
    """Invalid configuration value or schema violation."""


class NoConvergence(BregmanSkmError):
    """Fixed-point search exhausted its iteration budget.

    Carries the best iterate found so far in ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class Diverged(BregmanSkmError):
    """An iterate left the finite range; carries the last valid trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class InsufficientTrace(BregmanSkmError):
    """A trace does not cover the requested iteration range."""


class DegenerateFit(BregmanSkmError):
    """Rate fitting impossible (nonpositive residuals in the window)."""

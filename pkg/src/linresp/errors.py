"""Exception types shared across the package."""


class LinrespError(Exception):
    """Base class for all package errors."""


class DomainError(LinrespError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ParameterError(LinrespError, ValueError):
    """A parameter violates an operation's contract (range, shape, size)."""


class NumericsError(LinrespError, RuntimeError):
    """A numerical procedure failed (blow-up, non-convergence, degenerate fit)."""


class RejectedPointError(LinrespError):
    """A conjugate field was evaluated at a point below its positivity threshold.

    Raised by the scalar entry point instead of returning NaN; batch callers
    receive an explicit validity mask instead.
    """


class ConfigError(LinrespError, ValueError):
    """An experiment configuration is malformed (unknown keys, missing values)."""

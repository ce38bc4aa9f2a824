"""Exception types shared across the package."""


class DfigError(Exception):
    """Base class for all package errors."""


class SingularMatrix(DfigError):
    """A linear solve hit a pivot below the singularity threshold."""


class NoConvergence(DfigError):
    """An iterative routine exhausted its iteration budget."""


class NotPositiveDefinite(DfigError):
    """A matrix that must be positive definite is not."""


class DomainError(DfigError):
    """An argument lies outside the physical domain of the operation."""


class NonFinite(DfigError):
    """A computation produced NaN or Inf."""


class ConfigError(DfigError):
    """A simulation configuration violates a structural constraint."""


class ParseError(DfigError):
    """A scenario or CSV file is syntactically malformed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DfigError):
    """A parsed value violates an invariant."""

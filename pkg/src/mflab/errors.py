"""Exception types shared across the package."""


class MfLabError(Exception):
    """Base class for all package errors."""


class ValidationError(MfLabError, ValueError):
    """Bad arguments or malformed inputs (CLI exit code 1)."""


class DomainError(ValidationError):
    """Scalar argument outside the mathematical domain of an operation."""


class NumericError(MfLabError, ArithmeticError):
    """Numerical failure, e.g. a degenerate regression (CLI exit code 2)."""


class ResourceLimitError(MfLabError, RuntimeError):
    """A configured resource cap would be exceeded (CLI exit code 2)."""

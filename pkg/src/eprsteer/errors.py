"""Exception hierarchy.

Every error carries a ``category`` string that the command-line front end
reports verbatim, so scripts can branch on it without parsing messages.
"""


class EprSteerError(Exception):
    category = "error"


class DomainError(EprSteerError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    category = "domain"


class AccuracyError(EprSteerError, ArithmeticError):
    """A quadrature or iterative scheme failed its own accuracy check."""

    category = "accuracy"


class FitError(EprSteerError, RuntimeError):
    """An optimizer did not converge."""

    category = "fit"

    def __init__(self, message, gradient_norm=None):
        super().__init__(message)
        self.gradient_norm = gradient_norm


class ConfigError(EprSteerError, ValueError):
    category = "config"


class InputError(EprSteerError, ValueError):
    category = "input"


class FormatError(EprSteerError, ValueError):
    """A file does not follow its declared format."""

    category = "format"

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset

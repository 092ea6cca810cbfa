"""Exception hierarchy shared by every module of the toolkit."""


class BilevelError(Exception):
    """Base class for all toolkit errors."""


class InputError(BilevelError, ValueError):
    """Malformed arguments: wrong shapes, out-of-range indices, mismatched tapes."""


class ParameterError(BilevelError, ValueError):
    """Numerical parameters outside the region where a formula is valid."""


class ConfigurationError(BilevelError):
    """A required oracle, reference or config key is missing or unknown."""


class EvaluationError(BilevelError, ArithmeticError):
    """An oracle produced non-finite values."""

    def __init__(self, message, t=None):
        if t is not None:
            message = f"{message} (outer iteration t={t})"
        super().__init__(message)
        self.t = t


class FormatError(BilevelError, ValueError):
    """A data file does not follow the expected binary layout."""

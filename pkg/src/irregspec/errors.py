"""Exception hierarchy with the CLI exit code attached to each family."""


class IrregSpecError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(IrregSpecError, ValueError):
    """Invalid configuration or arguments (exit code 2)."""

    exit_code = 2


class DataError(IrregSpecError, ValueError):
    """Malformed or insufficient input data (exit code 3)."""

    exit_code = 3


class NumericalError(IrregSpecError, ArithmeticError):
    """A numerical procedure failed (exit code 4)."""

    exit_code = 4


class CheckFailure(IrregSpecError):
    """A validation check did not pass (exit code 5)."""

    exit_code = 5


class GridMismatchError(ConfigError):
    pass


class UnsupportedModelError(ConfigError):
    pass


class InvalidDensityError(ConfigError):
    pass


class InvalidShiftError(ConfigError):
    pass


class UndersmoothingError(ConfigError):
    pass


class InsufficientDataError(DataError):
    pass


class CsvParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NotPositiveDefiniteError(NumericalError):
    pass


class EnvelopeFailureError(NumericalError):
    pass


class DensityFloorError(NumericalError):
    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


class QuadratureError(NumericalError):
    """Quadrature did not reach the requested tolerance.

    Attributes
    ----------
    partial : float
        Best available estimate when the budget ran out.
    error_estimate : float
        Last error estimate.
    """

    def __init__(self, message, partial=None, error_estimate=None):
        super().__init__(message)
        self.partial = partial
        self.error_estimate = error_estimate

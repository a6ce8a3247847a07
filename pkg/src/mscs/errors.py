"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation problems exit with 2,
numerical failures with 3.
"""


class MscsError(Exception):
    """Base class for all package errors."""


class ValidationError(MscsError, ValueError):
    """Invalid parameters, configuration, or preconditions."""


class DataFormatError(ValidationError):
    """An input data file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(MscsError, RuntimeError):
    """A numerical procedure failed in a detectable way."""


class SingularMatrixError(NumericalError):
    """A matrix that must be inverted is numerically singular."""

    def __init__(self, message: str, order: int | None = None):
        if order is not None:
            message = f"order {order}: {message}"
        super().__init__(message)
        self.order = order


class NonRealSpectrumError(NumericalError):
    """Eigenvalues carry imaginary parts beyond tolerance, signalling a degenerate fit."""

    def __init__(self, message: str, max_imag_ratio: float | None = None):
        super().__init__(message)
        self.max_imag_ratio = max_imag_ratio

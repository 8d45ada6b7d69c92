"""Exception types shared across the package."""


class RnormError(Exception):
    """Base class for all package errors."""


class ParameterError(RnormError, ValueError):
    """A width, budget, or configuration value is out of range."""


class DimensionError(RnormError, ValueError):
    """Operand shapes or indices are incompatible with the operator."""


class InputError(RnormError, ValueError):
    """Input data violates a precondition (e.g. non-finite entries)."""


class DataFormatError(RnormError, ValueError):
    """A file does not conform to its declared format."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class SingularFactorError(RnormError, ValueError):
    """A triangular factor is numerically singular; solves are refused."""

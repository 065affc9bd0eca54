"""
Exception hierarchy shared by every MatIR module.
The CLI maps MatIrError subclasses to exit code 2.
"""
from typing import Optional


class MatIrError(Exception):
    """Base class for library errors."""
    pass


class DimensionError(MatIrError):
    """Raised when tensor shapes or dimensions do not agree."""
    pass


class ContractError(MatIrError):
    """Raised when an operation precondition is violated."""
    pass


class ConfigError(MatIrError):
    """Raised when a configuration is invalid; the message names the field."""
    pass


class FormatError(MatIrError):
    """Raised when a checkpoint, image or config file is corrupt or mismatched."""

    def __init__(
        self,
        message: str,
        expected: Optional[int] = None,
        found: Optional[int] = None,
    ):
        super().__init__(message)
        self.expected = expected
        self.found = found


class NumericalError(MatIrError):
    """Raised in debug-check mode when an op produces NaN or Inf."""
    pass


class TrainingError(MatIrError):
    """Raised when training cannot start or must abort."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step

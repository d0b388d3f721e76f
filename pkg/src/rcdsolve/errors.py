"""Exception hierarchy shared by all rcdsolve modules."""


class RCDError(Exception):
    """Base class for all rcdsolve errors."""


class DimensionError(RCDError, ValueError):
    """Tensor extents are inconsistent with an operation."""


class ConfigurationError(RCDError, ValueError):
    """Invalid parameter, option or configuration value."""


class ConstraintError(RCDError, ValueError):
    """A hard constraint of the model (e.g. unit-norm coefficients) is violated."""


class NumericError(RCDError, ArithmeticError):
    """A non-finite value appeared during a computation."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class FormatError(RCDError, OSError):
    """A file exists but is not in the expected format."""

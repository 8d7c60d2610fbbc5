"""Exception types shared across the package."""


class SmoothSwitchError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SmoothSwitchError, ValueError):
    """Invalid configuration, dimension mismatch or bad argument."""


class DataError(SmoothSwitchError, ValueError):
    """Dataset contents violate an invariant (label range, emptiness)."""


class FormatError(DataError):
    """Malformed binary input; ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(SmoothSwitchError, ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""

"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """A configuration invariant is violated."""


class NumericError(ArithmeticError):
    """Non-finite values or other numeric failure states."""


class DeterminismError(NumericError):
    """Two evaluations of a supposedly deterministic function disagreed."""


class DataError(ValueError):
    """Dataset contents violate a contract (label range, size mismatch...)."""


class FormatError(ValueError):
    """On-disk file does not parse; carries a byte offset when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UsageError(ValueError):
    """API misuse (e.g. backward on a non-scalar)."""

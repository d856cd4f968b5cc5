"""Exception types shared across the package."""


class PrecisionLossError(ArithmeticError):
    """Raised when a cancellation-prone sum cannot be certified to the
    requested accuracy even at the maximum working precision."""


class SnapshotFormatError(ValueError):
    """Raised when a binary field snapshot fails header or size validation."""


class IdxFormatError(ValueError):
    """Raised when an IDX image or label file is malformed or truncated."""


class QuadratureWarning(UserWarning):
    """Emitted when adaptive quadrature reports a larger error estimate
    than the requested tolerance; carries the achieved estimate."""

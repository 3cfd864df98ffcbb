"""Exceptions raised by the numerical services."""


class ResolutionExhaustedError(ValueError):
    """Raised when a cube at the finest level is asked for its children."""


class DimensionMismatchError(ValueError):
    """Raised when functions, bodies or weights disagree on their dimensions."""


class InvalidWeightError(ValueError):
    """Raised when a weight cell matrix is not symmetric positive definite."""


class ZeroBodyError(ValueError):
    """Raised when a rank-0 body is asked for its rounding map."""

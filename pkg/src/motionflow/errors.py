"""Exception types shared across the package."""


class MotionFlowError(Exception):
    """Base class for all package-specific errors."""


class DimError(MotionFlowError):
    """Vector/basis dimension mismatch."""


class RankError(MotionFlowError):
    """Input rows are not linearly independent."""


class ShapeError(MotionFlowError):
    """Array shapes incompatible with the requested operation."""


class ConfigError(MotionFlowError):
    """Invalid or incompatible configuration."""


class StateError(MotionFlowError):
    """Operation invoked in an invalid state (e.g. backward without a tape)."""


class NumericalError(MotionFlowError):
    """Non-finite values encountered during computation."""


class DegenerateError(MotionFlowError):
    """Degenerate distribution parameters (zero variance)."""


class DataError(MotionFlowError):
    """Corrupt, missing, or inconsistent data files."""


class UsageError(MotionFlowError):
    """Invalid command-line usage."""

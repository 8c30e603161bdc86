"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An input violates a documented precondition (shape, range, emptiness)."""


class DetectionFailedError(RuntimeError):
    """The detector could not produce an estimate (e.g. no usable orientation segments)."""


class FilteringFailedError(RuntimeError):
    """The convergence filter removed every segment; caller may fall back to the unfiltered set."""

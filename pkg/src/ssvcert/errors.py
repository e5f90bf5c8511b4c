class SizeError(ValueError):
    """Raised when a requested computation exceeds the configured size caps."""


class InvalidShapeError(ValueError):
    pass


class UnsupportedOrderError(ValueError):
    pass


class InfeasibleError(RuntimeError):
    pass

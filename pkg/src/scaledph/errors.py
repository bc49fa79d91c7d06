"""Exception types raised across the package."""


class ScaledPHError(Exception):
    """Base class for all package errors."""


class DimensionError(ScaledPHError, ValueError):
    pass


class SingularityError(ScaledPHError, ValueError):
    """A matrix function was requested at an eigenvalue on its branch cut."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class DomainError(ScaledPHError, ValueError):
    pass


class ValidationError(ScaledPHError, ValueError):
    pass


class UnsupportedError(ScaledPHError, NotImplementedError):
    pass


class CapacityError(ScaledPHError, ValueError):
    pass


class EstimationError(ScaledPHError, RuntimeError):
    pass

"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    pass


class OutOfDomain(ValueError):
    pass


class UnsupportedDimension(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    """A linear solve broke down; ``t`` holds the offending parameter."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class FitFailure(RuntimeError):
    pass

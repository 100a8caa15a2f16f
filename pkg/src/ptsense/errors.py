"""Exception types raised across the package."""


class ParameterError(ValueError):
    """An argument is out of range or dimensions do not agree."""


class DegenerateInputError(ValueError):
    """The input is numerically degenerate (zero rank, zero column, ...)."""

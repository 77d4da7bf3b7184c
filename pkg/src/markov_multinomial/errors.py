"""Exception hierarchy.

Everything raised for bad model input derives from :class:`ModelError`
(itself a ``ValueError``), so callers can catch one type.
"""

__all__ = [
    "ModelError",
    "BadDimensionError",
    "NotStochasticError",
    "NegativeResidualError",
    "HorizonExceedsScheduleError",
    "BadIndicatorError",
    "CountMismatchError",
    "InsufficientReplicationsError",
    "DimensionMismatchError",
    "TimeVaryingUnsupportedError",
]


class ModelError(ValueError):
    """Invalid model input."""


class BadDimensionError(ModelError):
    pass


class NotStochasticError(ModelError):
    pass


class NegativeResidualError(NotStochasticError):
    """Off-diagonal mass of a row exceeds one, so no diagonal can complete it."""


class HorizonExceedsScheduleError(ModelError):
    pass


class BadIndicatorError(ModelError):
    pass


class CountMismatchError(ModelError):
    pass


class InsufficientReplicationsError(ModelError):
    pass


class DimensionMismatchError(ModelError):
    pass


class TimeVaryingUnsupportedError(ModelError):
    pass

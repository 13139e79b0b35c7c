"""Exception types shared across the package."""


class KrflowError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(KrflowError):
    """Invalid configuration text or constraint violation."""


class HorizonExceededError(KrflowError):
    """A time outside the validity horizon of the background family."""


class GeometryDegenerateError(KrflowError):
    """A background metric lost positive definiteness somewhere."""


class IllConditionedMetricError(KrflowError):
    """Pointwise metric inversion refused: condition number too large."""


class PositivityLostError(KrflowError):
    """The discrete potential left the Kahler cone.

    Carries the flat index of the worst grid point and the offending
    determinant value so drivers can report or retry.
    """

    def __init__(self, message, point=None, value=None):
        super().__init__(message)
        self.point = point
        self.value = value


class ConeViolationError(KrflowError):
    """Requested initial data cannot sit inside the closed Kahler cone."""


class HypothesisViolationError(KrflowError):
    """Parameters violate an integrability hypothesis (e.g. gamma*p >= 1)."""


class UnsupportedConfigurationError(KrflowError):
    """A monitor was asked to run in a configuration it does not cover."""


class FlowAbortError(KrflowError):
    """Time stepping could not continue; partial results are attached."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial

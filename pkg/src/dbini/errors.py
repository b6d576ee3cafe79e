"""Exception and warning types raised across the package."""


class DbiniError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatch(DbiniError, ValueError):
    pass


class EmptyDomain(DbiniError, ValueError):
    pass


class DegenerateNormal(DbiniError, ValueError):
    """A normal in the domain is not unit length or is too grazing to integrate."""

    def __init__(self, message, pixel=None):
        super().__init__(message)
        self.pixel = pixel


class GaugeDeficient(DbiniError, ValueError):
    """The joint system has an unpinned constant offset."""


class GaugeDeficientWarning(UserWarning):
    pass


class NotSpd(DbiniError, ValueError):
    pass


class NumericalBreakdown(DbiniError, ArithmeticError):
    pass


class SceneOutOfBounds(DbiniError, ValueError):
    pass


class OracleTooLarge(DbiniError, ValueError):
    pass

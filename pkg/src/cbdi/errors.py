"""Exception hierarchy shared by every module."""


class CbdiError(Exception):
    """Base class for all package errors."""


class InvalidLevyMeasure(CbdiError):
    """The jump measure violates an integrability or sign requirement."""


class NegativeParameter(CbdiError):
    """A coefficient that must be nonnegative was negative."""


class DegenerateMechanism(CbdiError):
    """The requested quantity is ill-posed because a part vanishes identically."""


class NotSubcritical(CbdiError):
    """A (sub)critical mechanism was required."""


class FiniteVariation(CbdiError):
    """An infinite-variation mechanism was required."""


class NoDensityKnown(CbdiError):
    """The potential measure has no density, or inversion did not converge."""


class CompetitionTooWeak(CbdiError):
    """The competition part fails the integrability needed for an extension at infinity."""


class CooperationTooWeak(CbdiError):
    """The cooperation part fails the integrability needed for an extension at zero."""


class NotRegularlyVarying(CbdiError):
    """Regular-variation exponents are missing or do not match."""


class UnstableStep(CbdiError):
    """The time step is too coarse for a monotone update."""


class ParseError(CbdiError):
    """A configuration document could not be parsed."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = "" if line is None else f" (line {line}, column {column})"
        super().__init__(f"{message}{where}")


class ValidationError(CbdiError):
    """A configuration document parsed but holds an invalid or unknown key."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)

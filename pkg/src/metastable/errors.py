"""Exception hierarchy shared by all modules."""


class MetastabilityError(Exception):
    """Base class for every error raised by this package."""


class ModelError(MetastabilityError):
    """The rate specification violates a modelling assumption."""


class SpecParseError(ModelError):
    """A spec or measure file could not be parsed."""


class DomainError(MetastabilityError, ValueError):
    """An argument lies outside the domain of an operation."""


class UnsupportedOperationError(MetastabilityError):
    """The operation is not available for this kind of input."""


class CapacityError(MetastabilityError):
    """The input is too large for an exhaustive algorithm."""


class PrecisionError(MetastabilityError):
    """The requested computation does not fit the precision budget."""


class ConditioningError(MetastabilityError):
    """A linear solve failed or left a large residual."""


class ConvergenceError(MetastabilityError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AmbiguityError(MetastabilityError):
    """Two probe evaluations disagree on a discrete decision."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class MisidentifiedScaleError(AmbiguityError):
    """A well escaping at the level time scale shows no positive limit rate."""

"""Exception and warning types shared across the toolkit."""


class LosslabError(Exception):
    """Base class for all toolkit errors."""


class UsageError(LosslabError):
    """Bad command-line arguments or malformed run configuration."""


class DataError(LosslabError):
    """Invalid or inconsistent input data."""


class MissingColumn(DataError):
    pass


class TypeMismatch(DataError):
    """A cell could not be parsed as the declared feature kind."""


class NegativeResponse(DataError):
    pass


class NonPositiveExposure(DataError):
    pass


class KTooLarge(DataError):
    """Requested more folds than rows."""


class InvalidConfig(DataError):
    pass


class IdMismatch(DataError):
    """Row ids of two prediction sets do not line up."""


class OverlappingBlocks(DataError):
    """Feature blocks passed to the variance decomposition are not disjoint."""


class ColumnMismatch(DataError):
    """Matrix columns do not match the model's training column map."""


class DegenerateResponse(DataError):
    """Metric undefined because the observed responses sum to zero."""


class NonPositiveDenominator(DataError):
    """Lift-chart ratio denominator contains non-positive predictions."""


class ConstantFeature(DataError):
    """No bins can be constructed for a feature with a single value."""


class PowerOutOfRange(LosslabError):
    """Tweedie variance power outside the supported open interval (1, 2)."""


class ConvergenceError(LosslabError):
    """Base class for optimizer failures."""


class NotConverged(ConvergenceError):
    """Optimizer hit its iteration cap.

    Carries the last iterate (``model``) and the worst violated optimality
    gap (``gap``) so callers can inspect or accept the partial solution.
    """

    def __init__(self, message, model=None, gap=None):
        super().__init__(message)
        self.model = model
        self.gap = gap


class EmptySelectionWarning(UserWarning):
    """Coefficient threshold removed every feature."""


class DegenerateDataWarning(UserWarning):
    """All responses zero; model collapses to an intercept floor."""


class SingularHessianWarning(UserWarning):
    """Newton step unavailable; solver fell back to gradient steps."""

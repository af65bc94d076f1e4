"""Exception types raised across the package."""


class DualDistError(Exception):
    """Base class for all package errors."""


class UnsupportedDimensionError(DualDistError, ValueError):
    pass


class DimensionError(DualDistError, ValueError):
    pass


class UndefinedDirectionError(DualDistError, ValueError):
    pass


class DegenerateCovarianceError(DualDistError):
    pass


class RankDeficiencyError(DualDistError):
    """Raised when an input set is linearly dependent.

    ``index`` is the 1-based position of the first offending vector.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class PivotDegeneracyError(DualDistError):
    pass


class InfeasibleConstraintsError(DualDistError):
    pass


class DegenerateHyperplaneError(DualDistError):
    pass


class InfinityLimitError(DualDistError, ZeroDivisionError):
    pass


class EvaluationError(DualDistError):
    pass


class InvalidStartError(DualDistError, ValueError):
    pass


class InsufficientDataError(DualDistError, ValueError):
    pass


class DegeneracyError(DualDistError):
    pass


class UnsupportedRelationError(DualDistError, ValueError):
    pass


class TransferDegenerateError(DegeneracyError):
    pass


class InputParseError(DualDistError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class UnexpectedRankWarning(UserWarning):
    """Constraint rank differs from the generic value the chart assumes."""


class EmptyGridError(DualDistError, ValueError):
    """A density grid holds no positive mass."""

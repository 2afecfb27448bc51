"""Exception types shared across the package.

Every failure mode raised by the library derives from :class:`SfdnnError`,
so callers (including the CLI) can map errors onto exit codes without
string matching.
"""


class SfdnnError(Exception):
    """Base class for all library errors."""


class DimensionError(SfdnnError, ValueError):
    """Array shapes are inconsistent with the operation's contract."""


class InvalidArchitectureError(SfdnnError, ValueError):
    """Network or basis architecture parameters are not realizable."""


class InsufficientDataError(SfdnnError, ValueError):
    """Too few observations for the requested estimator."""


class InvalidSizeError(SfdnnError, ValueError):
    """A size argument is outside its admissible range."""


class DegenerateBandwidthError(SfdnnError, ValueError):
    """An adaptive kernel bandwidth collapsed to zero (duplicate sites)."""


class DegenerateVarianceError(SfdnnError, ValueError):
    """A variance required by the statistic is zero."""


class AdmissibilityError(SfdnnError, ValueError):
    """Spatial dependence parameter lies outside the admissible region."""


class DesignRankError(SfdnnError, ValueError):
    """Design matrix is rank deficient."""


class NumericOverflowError(SfdnnError, FloatingPointError):
    """A computation produced non-finite values."""


class TrainingDivergedError(SfdnnError, RuntimeError):
    """Optimization produced a non-finite loss; carries the loss trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class MissingWeightsError(SfdnnError, ValueError):
    """A spatial estimator was invoked without a weight matrix."""


class FoldSizeError(SfdnnError, ValueError):
    """Cross-validation folds would be smaller than two rows."""


class ConfigError(SfdnnError, ValueError):
    """Configuration file is invalid; carries every detected problem."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DataError(SfdnnError, ValueError):
    """Input data file is malformed or inconsistent."""

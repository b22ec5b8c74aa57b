"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`IncompatibleError` exits with 3,
every other :class:`RctError` exits with 4.
"""


class RctError(Exception):
    """Base class for all library errors."""


class ValidationError(RctError, ValueError):
    """Input data violate a structural invariant."""


class DataError(ValidationError):
    """A data file could not be parsed; carries the offending row/column."""


class DesignError(RctError, ValueError):
    """A randomization scheme cannot be carried out on the given input."""


class EstimationError(RctError, ValueError):
    """An estimator's preconditions fail on the given sample."""


class RankDeficientError(EstimationError):
    """A least-squares design matrix is not of full column rank."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"rank-deficient design; collinear column(s): {', '.join(self.columns)}")


class IncompatibleError(RctError, ValueError):
    """An estimator, variance estimator and design were combined invalidly."""


class EnumerationLimitError(RctError, ValueError):
    """Exhaustive enumeration would exceed the assignment cap."""

    def __init__(self, count, cap):
        self.count = count
        self.cap = cap
        super().__init__(f"{count} assignments exceed the enumeration cap of {cap}")

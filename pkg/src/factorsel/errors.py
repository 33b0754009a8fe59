"""Exception types raised by factorsel.

Each exception also derives from the builtin that would otherwise be raised,
so callers can catch either the specific factorsel type or the builtin.
"""


class FactorSelError(Exception):
    """Base class for all factorsel errors."""


class ConfigError(FactorSelError, ValueError):
    """A run configuration is invalid."""


class SchemaError(FactorSelError, ValueError):
    """A column is unknown, missing, or has an unusable type."""


class TableParseError(FactorSelError, ValueError):
    """A delimited input file could not be parsed.

    Attributes:
        row: line of the offending data row counted from the header line,
            which is row 0; blank lines count

    """

    def __init__(self, message: str, row: int) -> None:
        """Initialize with a message and the offending data row."""
        super().__init__(f"row {row}: {message}")
        self.row = row


class IncompleteDataError(FactorSelError, ValueError):
    """Missing values were found where complete data is required."""


class DegenerateTaskError(FactorSelError, ValueError):
    """A binary task has a class with no rows."""


class DomainError(FactorSelError, ValueError):
    """A special function was called outside its domain."""


class EstimatorError(FactorSelError, ValueError):
    """A mutual information estimator's preconditions do not hold."""


class DegenerateTableError(FactorSelError, ValueError):
    """A contingency table has an empty row or column."""


class UndefinedAUROCError(FactorSelError, ValueError):
    """AUROC is undefined because only one class is present."""


class SplitError(FactorSelError, RuntimeError):
    """No usable stratified split was found within the retry budget."""


class DegenerateFitError(FactorSelError, ValueError):
    """A learner cannot be fit because the labels have a single class."""


class SingularCovarianceError(FactorSelError, ArithmeticError):
    """The pooled covariance is singular even after ridge regularization."""


class ShapeError(FactorSelError, ValueError):
    """An input matrix has the wrong number of columns."""


class SeparationError(FactorSelError, ArithmeticError):
    """Logistic regression coefficients diverge (perfect separation)."""


class CollinearityError(FactorSelError, ArithmeticError):
    """The logistic regression information matrix is singular."""


class OracleScopeError(FactorSelError, ValueError):
    """An exhaustive oracle was asked to handle a problem that is too large."""

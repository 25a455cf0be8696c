"""
Exception hierarchy for the space-time g-methods package.

Validation and schema problems derive from ValueError so callers (and the
CLI) can treat them uniformly; numerical failures that batch callers are
expected to tolerate derive from GMethodsError only.
"""


class GMethodsError(Exception):
    """Base class for all package errors."""


# --- panel -----------------------------------------------------------------

class PanelError(GMethodsError, ValueError):
    """Raised when panel data cannot be built or used as requested."""


class PanelParseError(PanelError):
    """Raised when a CSV row cannot be parsed.

    Attributes:
        row: 1-based data row number (header excluded), or None when the
            problem is not tied to one row.
    """

    def __init__(self, message: str, row: "int | None" = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DuplicateKeyError(PanelError):
    """Raised when a (year, location, month) key appears twice."""


class SchemaError(PanelError):
    """Raised when required columns are missing or the location order is ambiguous."""


class PanelValueError(PanelError):
    """Raised when a value is outside its admissible range (e.g. chlorophyll <= 0)."""


class EmptyWindowError(PanelError):
    """Raised when a cutpoint probe window holds no observed exposure values."""


# --- models ----------------------------------------------------------------

class ModelError(GMethodsError):
    """Base class for regression model errors."""


class SpecError(ModelError, ValueError):
    """Raised when a model or estimand specification is invalid."""


class EmptyDataError(ModelError, ValueError):
    """Raised when a model has no rows to be fit on."""


class SingularDesignError(ModelError, ValueError):
    """Raised when the design matrix is rank deficient.

    Attributes:
        terms: Names of the columns found to be collinear.
    """

    def __init__(self, terms):
        self.terms = tuple(terms)
        super().__init__(f"design matrix is rank deficient; collinear terms: {', '.join(self.terms)}")


class MissingDataError(ModelError, ValueError):
    """Raised when a requested prediction row has a missing predictor value."""

    def __init__(self, year, location, month, variable):
        self.year = year
        self.location = location
        self.month = month
        self.variable = variable
        super().__init__(
            f"missing value for '{variable}' at year={year}, location={location}, month={month}"
        )


class ConvergenceError(ModelError):
    """Raised when IRLS does not converge or the data are separated."""


# --- inference -------------------------------------------------------------

class InferenceError(GMethodsError):
    """Base class for variance estimation errors."""


class SingularBreadError(InferenceError):
    """Raised when the bread matrix is numerically singular."""

    def __init__(self, condition_number: float):
        self.condition_number = condition_number
        super().__init__(f"bread matrix is singular (condition number {condition_number:.3e})")


class NegativeVarianceError(InferenceError, ValueError):
    """Raised when a Wald interval is requested for a negative variance."""


# --- estimators ------------------------------------------------------------

class DegenerateDenominatorError(GMethodsError):
    """Raised when the closed-form nested-model estimator has no unique solution."""

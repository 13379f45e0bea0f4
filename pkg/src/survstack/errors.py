"""Exception hierarchy.

Two broad families matter for the CLI exit-code contract: ``ValidationError``
(bad inputs or unusable data, exit code 1) and ``NumericalError`` (a fit or
estimator failed internally, exit code 2).
"""


class SurvStackError(Exception):
    """Base class for all survstack errors."""


class ValidationError(SurvStackError):
    """User or data error: bad schema, bad values, unmet preconditions."""


class SchemaError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class EmptyDatasetError(ValidationError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class UndefinedMetricError(ValidationError):
    """A metric has no defined value on this data (e.g. no cases at the horizon)."""


class NumericalError(SurvStackError):
    """An internal numerical procedure failed."""


class ConvergenceError(NumericalError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class MonotoneLikelihoodError(NumericalError):
    """Diverging coefficients, typically from perfect separation."""


class DivergenceError(NumericalError):
    """Non-finite loss during iterative optimization."""


class MonotoneHazardError(NumericalError):
    """A spline hazard fit kept producing a non-monotone cumulative hazard."""


class DegenerateDesignError(NumericalError):
    """Regression design has no usable variation (e.g. constant risks)."""


class DegenerateWeightError(NumericalError):
    def __init__(self, message, subjects=None):
        super().__init__(message)
        self.subjects = list(subjects) if subjects is not None else []


class BootstrapFailureError(NumericalError):
    def __init__(self, message, n_failed=0, n_total=0):
        super().__init__(message)
        self.n_failed = n_failed
        self.n_total = n_total

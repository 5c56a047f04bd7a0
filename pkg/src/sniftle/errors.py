"""Exception hierarchy shared by all sniftle modules."""


class SniftleError(Exception):
    """Base class for all errors raised by sniftle."""


class InvalidInputError(SniftleError, ValueError):
    pass


class ConfigError(SniftleError, ValueError):
    """Bad configuration. ``field`` names the offending key when known."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class NumericError(SniftleError, ArithmeticError):
    pass


class DecompositionError(NumericError):
    """Cholesky failed; ``pivot`` is the zero-based index of the bad pivot."""

    def __init__(self, message, pivot):
        self.pivot = pivot
        super().__init__(message)


class SingularMatrixError(NumericError):
    def __init__(self, message, condition):
        self.condition = condition
        super().__init__(message)


class ConditioningError(NumericError):
    """The J * J^-1 consistency defect exceeded its threshold."""

    def __init__(self, message, defect):
        self.defect = defect
        super().__init__(message)


class UndefinedMeasureError(NumericError):
    pass


class DomainError(SniftleError):
    """A query or trajectory left the domain of the velocity data.

    ``coordinate`` is the offending point (or time) and ``time`` the model
    time at which the exit was detected, if known.
    """

    def __init__(self, message, coordinate=None, time=None):
        self.coordinate = coordinate
        self.time = time
        super().__init__(message)


class EstimationError(SniftleError):
    pass


class ResumeError(SniftleError):
    pass

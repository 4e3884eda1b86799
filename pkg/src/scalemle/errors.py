"""Exception types raised across the package."""


class ScaleMLEError(Exception):
    """Base class for all package errors."""


class DomainError(ScaleMLEError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class EfficiencyUndefinedError(DomainError):
    """The efficiency or Fisher-information integrals diverge for this shape."""


class SingularityError(DomainError):
    """Log-density requested at a point where the density vanishes."""


class QuadratureError(ScaleMLEError, ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance.

    The best available estimate and its error bound are kept on the
    exception so callers can decide whether it is good enough.
    """

    def __init__(self, message, estimate, error):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class SingularDesignError(ScaleMLEError, ValueError):
    """The design matrix is rank deficient."""


class DegenerateDataError(ScaleMLEError, ValueError):
    """The response is an exact linear function of the covariates."""


class DataError(ScaleMLEError, ValueError):
    """Problems reading or validating tabular input."""


class BatchError(ScaleMLEError, RuntimeError):
    """Too many replications of a Monte-Carlo batch failed."""

"""Exception types shared across the package."""


class ImcellError(Exception):
    """Base class for all package errors."""


class DomainError(ImcellError):
    """An argument is outside the mathematical domain of an operation."""


class PoleError(DomainError):
    """A special function was evaluated at (or too close to) a pole."""


class NonConvergenceError(ImcellError):
    """An iterative evaluation did not reach the requested tolerance."""


class ToleranceNotMetError(ImcellError):
    """A quadrature finished without meeting its tolerance.

    Carries the best available estimate and the achieved error bound so
    callers can decide whether to accept the result anyway.
    """

    def __init__(self, message, estimate, error):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class NoClosedFormError(ImcellError):
    """The requested closed-form expression does not exist for this model."""


class OptimizerFailedError(ImcellError):
    """A fit could not find any descent direction."""


class ScopeError(ImcellError):
    """Inputs fall outside the restricted scope of a specialized routine."""


class CoverageOutOfRangeError(ImcellError):
    """A coverage probability landed outside [0, 1], signalling quadrature
    failure rather than a model property."""


class ConfigError(ImcellError):
    """A run configuration file is malformed or inconsistent."""

"""Exception types shared across the package."""


class HomspaceError(Exception):
    """Base class for all package errors."""


class ParameterError(HomspaceError):
    """Invalid parameter (nonpositive size, exponent out of range, ...)."""


class FormatError(HomspaceError):
    """Malformed document (asymmetric distance table, bad weights, ...)."""


class CertificationError(HomspaceError):
    """A declared geometric constant fails verification.

    Carries the violating triple when the quasi-triangle inequality is the
    failed certificate.
    """

    def __init__(self, message, triple=None):
        super().__init__(message)
        self.triple = triple


class ConvergenceError(HomspaceError):
    """An iterative construction failed to reach its tolerance."""


class RangeError(HomspaceError):
    """Requested level/scale outside the built range."""


class FlavorMismatchError(HomspaceError):
    """Homogeneous/inhomogeneous flavor of spec and stack disagree."""


class IllConditionedFrameError(HomspaceError):
    """Frame solve did not converge; carries the measured lower frame bound."""

    def __init__(self, message, lower_bound=None):
        super().__init__(message)
        self.lower_bound = lower_bound


class ExperimentError(HomspaceError):
    """An experiment's hypotheses are violated or all probes degenerate."""

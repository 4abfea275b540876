"""Exception types shared across the toolkit."""


class MertonHJBError(Exception):
    """Base class for all toolkit errors."""


class DomainError(MertonHJBError):
    """A state, wealth, or time argument lies outside its admissible range."""


class ConfigError(MertonHJBError):
    """A configuration file or parameter set is malformed or inconsistent."""


class SingularModelError(MertonHJBError):
    """The return covariance is numerically singular at the requested state."""


class DivisionHazardError(MertonHJBError):
    """The value surface is too close to zero for the 1/u term to be trusted.

    ``fraction`` reports the share of batch points below the threshold when
    the hazard was detected over a batch rather than a single point.
    """

    def __init__(self, message, fraction=None):
        super().__init__(message)
        self.fraction = fraction


class NonFiniteError(MertonHJBError):
    """A computed quantity (loss, gradient, residual) is NaN or infinite."""


class TrainingAbortError(MertonHJBError):
    """Training was aborted; the message carries the diagnostic."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NewtonError(MertonHJBError):
    """Newton iteration failed at one time level of the backward march.

    ``level`` is the failing time level; ``partial`` holds whatever part of
    the solution cube was completed before the failure (may be None).
    """

    def __init__(self, message, level=None, partial=None):
        super().__init__(message)
        self.level = level
        self.partial = partial


class DomainMismatchError(MertonHJBError):
    """Two runs being compared do not share a state domain or exponent."""

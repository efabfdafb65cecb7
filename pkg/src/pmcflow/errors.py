"""Exception hierarchy shared by every pmcflow module."""


class PmcfError(Exception):
    """Base class for all library errors."""

    reason = "error"


class SignatureError(PmcfError):
    reason = "signature_error"


class DomainError(PmcfError):
    reason = "domain_error"


class OrientationError(PmcfError):
    reason = "orientation_error"


class SpacelikeViolation(PmcfError):
    """Raised when the spacelike margin q = 1 - |grad w|^2 drops below the floor.

    ``state`` carries the last valid state when the violation happened mid-run.
    """

    reason = "spacelike_violation"

    def __init__(self, message, q_min=None, state=None):
        super().__init__(message)
        self.q_min = q_min
        self.state = state


class NotSpacelike(SpacelikeViolation):
    reason = "not_spacelike"


class StepTooSmall(PmcfError):
    reason = "step_too_small"


class NoConvergence(PmcfError):
    reason = "no_convergence"

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class DegenerateMetric(PmcfError):
    reason = "degenerate_metric"


class BarrierViolation(PmcfError):
    reason = "barrier_violation"


class HeightEscape(PmcfError):
    reason = "height_escape"


class WindowError(PmcfError):
    reason = "window_error"


class InsufficientData(PmcfError):
    reason = "insufficient_data"


class NonPositiveValue(PmcfError):
    reason = "non_positive_value"


class ParseError(PmcfError):
    reason = "parse_error"


class ValidationError(PmcfError):
    reason = "validation_error"

"""Exception hierarchy shared by all modules."""


class BalancedMetricsError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(BalancedMetricsError, ValueError):
    """An input violates a documented invariant.

    ``invariant`` names the violated condition so callers (and the CLI)
    can report it in machine-readable form.
    """

    def __init__(self, message, invariant=None, path=None):
        super().__init__(message)
        self.invariant = invariant
        self.path = path


class ConvexityViolation(BalancedMetricsError):
    """Difference quotients of a supposedly convex function are not monotone."""

    def __init__(self, message, triple=None):
        super().__init__(message)
        self.triple = triple


class ContractError(BalancedMetricsError):
    """A caller-supplied function breaks its contract (e.g. wrong gradient)."""


class PreconditionError(BalancedMetricsError):
    """Hypotheses of an analysis routine are not met."""


class InvariantViolation(BalancedMetricsError):
    """Internal consistency check failed; indicates a bug or invalid input."""


class ConvergenceError(BalancedMetricsError):
    """An iterative routine stopped without reaching a decision."""


class NotProperError(BalancedMetricsError):
    """Some probed direction has nonpositive slope, so no properness bound exists.

    ``direction`` is the offending unit direction and ``slope`` its estimate.
    """

    def __init__(self, message, direction=None, slope=None):
        super().__init__(message)
        self.direction = direction
        self.slope = slope

"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class InfeasibleSpec(ValueError):
    """A distribution spec describes an empty support region."""


class SamplerExhausted(RuntimeError):
    """Rejection sampling ran out of attempts before collecting enough points."""


class NotApplicable(ValueError):
    """An operation was asked to act on an input outside its domain (e.g. a non-vertex)."""

"""Exception hierarchy shared by every module."""


class TtlCumError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInstanceError(TtlCumError, ValueError):
    """A model, catalog or configuration violates its invariants."""


class DomainError(TtlCumError, ValueError):
    """An argument lies outside the domain of a function."""


class SaturatedError(TtlCumError, ValueError):
    """Evaluation at a point where the distribution has no mass left (F = 1)."""


class SingularError(TtlCumError, ValueError):
    """Evaluation at a singular point of a function."""


class NonConvexError(TtlCumError, ValueError):
    """The instance has a non-DHR model, so the utility problem is not convex."""


class NumericalFailure(TtlCumError, RuntimeError):
    """A root search or fixed point failed to find a sign change or converge."""

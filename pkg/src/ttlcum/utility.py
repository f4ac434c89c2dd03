"""β-fair utilities, the logarithmic integral and the utility implied by LRU."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import DomainError, InvalidInstanceError, SingularError


@dataclass(frozen=True)
class UtilitySpec:
    """Isoelastic utility with fairness ``beta`` and weight ``w``.

    ``U(x) = w x^(1-β) / (1-β)`` for β ≠ 1 and ``w log x`` for β = 1.
    ``w`` may be an array, giving one utility per content.
    """

    beta: float
    w: float = 1.0

    def __post_init__(self):
        if not self.beta >= 0:
            raise InvalidInstanceError("beta must be non-negative")
        if np.any(np.asarray(self.w) <= 0):
            raise InvalidInstanceError("weights must be positive")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("utility is defined for positive arguments only")
        if self.beta == 1:
            out = self.w * np.log(x)
        else:
            out = self.w * x ** (1.0 - self.beta) / (1.0 - self.beta)
        return float(out) if np.ndim(out) == 0 else out

    def marginal(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("marginal utility is defined for positive arguments only")
        out = self.w * x ** (-self.beta)
        return float(out) if np.ndim(out) == 0 else out

    def marginal_inverse(self, y):
        """Solve U'(x) = y, i.e. ``x = (w / y)^(1/β)``."""
        if self.beta == 0:
            raise InvalidInstanceError("linear utility has a constant marginal and no inverse")
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise DomainError("marginal values must be positive")
        out = (self.w / y) ** (1.0 / self.beta)
        return float(out) if np.ndim(out) == 0 else out


class BetaUtility(NamedTuple):
    U: float
    U_prime: float
    U_prime_inv_at: object


def beta_utility(spec: UtilitySpec, x) -> BetaUtility:
    """Evaluate U and U' at ``x`` and expose U'⁻¹ as a callable."""
    return BetaUtility(spec.value(x), spec.marginal(x), spec.marginal_inverse)


def li(x):
    """Logarithmic integral ∫₀ˣ dt / log t (principal value for x > 1).

    Computed as Ei(log x); li(0) = 0.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("li is defined for non-negative arguments")
    if np.any(x == 1):
        raise SingularError("li has a logarithmic singularity at 1")
    with np.errstate(divide="ignore"):
        out = np.where(x == 0, 0.0, special.expi(np.log(np.where(x == 0, 1.0, x))))
    return float(out) if out.ndim == 0 else out


def lru_utility(mu, x):
    """Utility under which LRU's hit rates are optimal for Poisson requests: μ li(μ(1-x))."""
    mu = np.asarray(mu, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > mu):
        raise DomainError("hit rate must lie in [0, mu]")
    out = mu * li(mu * (1.0 - x))
    return float(out) if np.ndim(out) == 0 else out

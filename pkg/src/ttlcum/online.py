"""Online controllers: Poisson-approximate dual with estimated rates, and the LRU-like dual."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decentralized import ControllerState, _poisson_timer
from .errors import DomainError, InvalidInstanceError
from .solver import _check_mode
from .workload import INFINITE_TIMER


def estimate_rate(timer: float, remaining: float) -> float | None:
    """Inter-request time estimate from a content's timer and its remaining TTL.

    The elapsed time since the last request, ``timer - remaining``. A
    negative ``remaining`` (timer already expired) is accepted so that the
    estimate stays the elapsed time. Returns ``None`` when no time has elapsed.
    """
    if remaining > timer:
        raise DomainError("remaining TTL cannot exceed the timer")
    if remaining == timer:
        return None
    return timer - remaining


@dataclass
class RateEstimate:
    """Running estimate of every content's mean inter-request time.

    ``smoothing`` is the weight of a new observation in an exponentially
    weighted mean; ``None`` keeps only the latest observation.
    """

    mean_irt: np.ndarray
    last_request: np.ndarray
    smoothing: float | None = 0.1

    @classmethod
    def empty(cls, n: int, smoothing: float | None = 0.1) -> "RateEstimate":
        if smoothing is not None and not 0 < smoothing <= 1:
            raise InvalidInstanceError("smoothing weight must lie in (0, 1]")
        return cls(np.full(n, np.nan), np.full(n, -np.inf), smoothing)

    def observe(self, i: int, now: float) -> None:
        last = self.last_request[i]
        self.last_request[i] = now
        if not math.isfinite(last):
            return
        x = now - last
        if x <= 0:
            return
        prev = self.mean_irt[i]
        if self.smoothing is None or math.isnan(prev):
            self.mean_irt[i] = x
        else:
            self.mean_irt[i] = prev + self.smoothing * (x - prev)

    @property
    def rates(self) -> np.ndarray:
        return 1.0 / self.mean_irt


class OnlinePoissonController:
    """Dual controller that always uses the Poisson timer formula.

    With ``rates`` given, the true mean rates are used (the "known rates"
    variant); otherwise each content's rate is estimated from its own
    inter-request times, with ``estimator="ewma"`` (weight ``smoothing``) or
    ``"raw"`` (latest observation only). A content is not cached until its
    second request provides a first estimate.
    """

    def __init__(self, weights, beta: float, cache_size: float, gamma: float = 1e-5, eta0: float = 1.0,
                 rates=None, estimator: str = "ewma", smoothing: float = 0.1, mode: str = "hrb"):
        if estimator not in ("ewma", "raw"):
            raise InvalidInstanceError(f"unknown estimator {estimator!r}")
        if not gamma > 0:
            raise DomainError("step size must be positive")
        if not beta > 0:
            raise InvalidInstanceError("the Poisson timer needs beta > 0")
        self.weights = np.asarray(weights, dtype=float)
        n = len(self.weights)
        self.beta = beta
        self.B = cache_size
        self.gamma = gamma
        self.mode = _check_mode(mode)
        self.known_rates = None if rates is None else np.asarray(rates, dtype=float).tolist()
        self.estimate = RateEstimate.empty(n, smoothing if estimator == "ewma" else None)
        self.state = ControllerState(eta=float(eta0), timers=np.zeros(n), gamma=gamma)
        self._w = self.weights.tolist()

    @property
    def eta(self) -> float:
        return self.state.eta

    def on_request(self, i: int, now: float, occupancy: int, hit: bool) -> float:
        st = self.state
        eta = st.eta + self.gamma * (occupancy - self.B)
        st.eta = eta = eta if eta > 0 else 0.0
        st.iteration += 1
        if self.known_rates is not None:
            mu = self.known_rates[i]
        else:
            self.estimate.observe(i, now)
            x = self.estimate.mean_irt[i]
            if math.isnan(x):
                return 0.0
            mu = 1.0 / x
        t = INFINITE_TIMER if eta == 0.0 else _poisson_timer(mu, self._w[i], self.beta, eta, self.mode)
        st.timers[i] = t
        return t


def online_poisson_timer(rate_estimate: float, weight: float, beta: float, eta: float) -> float:
    """t = -(1/μ̂) log(1 - U'⁻¹(η/μ̂)/μ̂), or the infinite sentinel when the log argument is not positive."""
    if not rate_estimate > 0:
        raise DomainError("rate estimate must be positive")
    if eta <= 0:
        return INFINITE_TIMER
    return _poisson_timer(rate_estimate, weight, beta, eta, "hrb")


def online_poisson_step(state: ControllerState, rate_estimate: float, weight: float, beta: float,
                        occupancy: float, cache_size: float, gamma: float) -> tuple[float, float]:
    """One request of the online controller: multiplier update, then the Poisson timer."""
    eta = max(0.0, state.eta + gamma * (occupancy - cache_size))
    state.eta = eta
    return online_poisson_timer(rate_estimate, weight, beta, eta), eta


class LruDualController:
    """Every content gets the same timer 1/η, with η following the occupancy."""

    def __init__(self, n: int, cache_size: float, gamma: float = 1e-7, eta0: float = 1.0):
        if not gamma > 0:
            raise DomainError("step size must be positive")
        self.B = cache_size
        self.gamma = gamma
        self.state = ControllerState(eta=float(eta0), timers=None, gamma=gamma)

    @property
    def eta(self) -> float:
        return self.state.eta

    @property
    def timer(self) -> float:
        eta = self.state.eta
        return INFINITE_TIMER if eta == 0 else 1.0 / eta

    def on_request(self, i: int, now: float, occupancy: int, hit: bool) -> float:
        st = self.state
        eta = st.eta + self.gamma * (occupancy - self.B)
        st.eta = eta if eta > 0 else 0.0
        st.iteration += 1
        return self.timer

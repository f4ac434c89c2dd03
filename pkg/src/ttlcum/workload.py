"""Popularity laws, inter-request time models and request-stream sampling.

Every inter-request time (irt) model exposes the same set of functions:

* ``cdf`` F, ``sf`` 1 - F, ``pdf`` f and ``hazard`` f / (1 - F);
* ``age`` F̂, the distribution of the time elapsed since the last request,
  F̂(t) = μ ∫₀ᵗ (1 - F(s)) ds;
* ``quantile`` F⁻¹ and ``occupancy`` g(x) = F̂(F⁻¹(x)) together with its slope
  ``occupancy_slope`` g'(x) = dg/dx = μ (1 - x) / f(F⁻¹(x)).

Model parameters may be numpy arrays, in which case a single model object
describes a batch of contents of the same family and all functions broadcast.
:func:`stack_models` builds such batches; the solver relies on them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, special

from ._roots import bisect_increasing, brent
from .errors import DomainError, InvalidInstanceError, SaturatedError

INFINITE_TIMER = math.inf
"""Sentinel timer meaning "never expire" (hit probability one)."""


def _as_time(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise DomainError("time must be non-negative")
    return t


def _as_prob(x, *, allow_one: bool = False) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("probability must be non-negative")
    if not allow_one and np.any(x >= 1):
        raise SaturatedError("probability one has no finite preimage")
    return x


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _scalar(value):
    arr = np.asarray(value)
    return float(arr) if arr.ndim == 0 else arr


class IrtModel:
    """Base class for inter-request time distributions.

    Subclasses provide ``log_sf``, ``log_hazard``, ``rate`` and ``hazard_limit``;
    everything else has a generic (possibly numerical) default that subclasses
    override with closed forms where available.
    """

    #: right end of the support (``inf`` unless bounded)
    support_end = math.inf

    # -- primitives -------------------------------------------------------
    @property
    def rate(self):
        """Mean request rate μ = 1 / E[irt]."""
        raise NotImplementedError

    @property
    def hazard_limit(self):
        """Limit of the hazard rate at the right end of the support."""
        raise NotImplementedError

    def log_sf(self, t):
        raise NotImplementedError

    def log_hazard(self, t):
        raise NotImplementedError

    def is_dhr(self) -> bool:
        """Whether the hazard rate is non-increasing."""
        raise NotImplementedError

    @property
    def batch_shape(self) -> tuple:
        return np.shape(self.rate)

    # -- derived ------------------------------------------------------------
    def sf(self, t):
        return _scalar(np.exp(self.log_sf(_as_time(t))))

    def cdf(self, t):
        return _scalar(-np.expm1(self.log_sf(_as_time(t))))

    def pdf(self, t):
        t = _as_time(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.exp(self.log_sf(t) + self.log_hazard(t))
        return _scalar(np.where(np.isnan(out), 0.0, out))

    def hazard(self, t):
        t = _as_time(t)
        if np.any(t >= self.support_end):
            raise SaturatedError("hazard is undefined where F = 1")
        return _scalar(np.exp(self.log_hazard(t)))

    def age(self, t):
        """Age distribution by numerical quadrature of the survival function."""
        t = _as_time(t)
        mu = np.broadcast_to(self.rate, t.shape)

        def one(ti, mui, idx):
            model = self if not self.batch_shape else self._select(idx)
            val, _ = integrate.quad(lambda s: float(model.sf(s)), 0.0, ti,
                                    epsabs=1e-12, epsrel=1e-12, limit=200)
            return min(1.0, mui * val)

        out = np.empty(t.shape)
        for idx in np.ndindex(t.shape):
            out[idx] = one(float(t[idx]), float(mu[idx]), idx)
        return _scalar(out)

    def _select(self, idx):
        raise NotImplementedError

    def _quantile_bracket(self, u):
        hi = np.full(np.broadcast(u, self.rate).shape, 1.0) / np.asarray(self.rate)
        for _ in range(2000):
            short = self.cdf(hi) < u
            if not np.any(short):
                break
            hi = np.where(short, hi * 2.0, hi)
        return np.zeros_like(hi), hi

    def quantile(self, u):
        """Inverse cdf; returns :data:`INFINITE_TIMER` for ``u >= 1``."""
        u = _as_prob(u, allow_one=True)
        finite = np.where(u < 1, u, 0.5)
        lo, hi = self._quantile_bracket(finite)
        t = bisect_increasing(lambda s: self.cdf(s) - finite, lo, hi, iterations=200)
        return _scalar(np.where(u < 1, t, INFINITE_TIMER))

    def age_quantile(self, u):
        """Inverse of the age distribution (used to start streams in equilibrium)."""
        u = _as_prob(u)
        lo, hi = np.zeros(np.broadcast(u, self.rate).shape), 1.0 / np.asarray(self.rate, dtype=float) * np.ones_like(u)
        for _ in range(2000):
            short = self.age(hi) < u
            if not np.any(short):
                break
            hi = np.where(short, hi * 2.0, hi)
        return _scalar(bisect_increasing(lambda s: self.age(s) - u, lo, hi, iterations=200))

    def occupancy(self, x):
        """Occupancy map g(x) = F̂(F⁻¹(x))."""
        x = _as_prob(x)
        return self.age(self.quantile(x))

    def occupancy_slope(self, x):
        """Slope g'(x) = μ / ζ(F⁻¹(x)) of the occupancy map."""
        x = _as_prob(x)
        t = self.quantile(x)
        return _scalar(np.asarray(self.rate) * np.exp(-self.log_hazard(np.asarray(t))))

    # -- sampling -------------------------------------------------------------
    def sample(self, rng, size):
        """Draw i.i.d. inter-request times (scalar models only)."""
        rng = _rng(rng)
        u = rng.random(size)
        return np.asarray(self.quantile(u), dtype=float)

    def sample_first(self, rng) -> float:
        """Forward recurrence time of the stationary renewal process."""
        rng = _rng(rng)
        return float(self.age_quantile(rng.random()))

    # -- batching ----------------------------------------------------------
    @classmethod
    def stack(cls, models: Sequence["IrtModel"]) -> "IrtModel":
        """Batch models of this family into one model with array parameters."""
        names = [f.name for f in fields(cls)]
        return cls(**{name: np.array([getattr(m, name) for m in models], dtype=float) for name in names})

    def __getitem__(self, idx):
        return self._select(idx)


def _check_positive(**params):
    for name, value in params.items():
        arr = np.asarray(value, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
            raise InvalidInstanceError(f"{name} must be finite and strictly positive")


@dataclass(frozen=True, eq=False)
class Exponential(IrtModel):
    """Exponential irts (Poisson requests) with rate ``mu``."""

    mu: float

    def __post_init__(self):
        _check_positive(mu=self.mu)

    @property
    def rate(self):
        return self.mu

    @property
    def hazard_limit(self):
        return self.mu

    def is_dhr(self) -> bool:
        return True

    def log_sf(self, t):
        return -np.asarray(self.mu) * t

    def log_hazard(self, t):
        return np.log(self.mu) + np.zeros(np.shape(t))

    def age(self, t):
        return self.cdf(t)

    def quantile(self, u):
        u = _as_prob(u, allow_one=True)
        with np.errstate(divide="ignore"):
            return _scalar(-np.log1p(-u) / np.asarray(self.mu))

    def age_quantile(self, u):
        return self.quantile(_as_prob(u))

    def occupancy(self, x):
        return _scalar(_as_prob(x) + 0.0 * np.asarray(self.mu))

    def occupancy_slope(self, x):
        return _scalar(np.ones(np.broadcast(_as_prob(x), self.mu).shape))

    def sample(self, rng, size):
        return _rng(rng).exponential(1.0 / self.mu, size)

    def sample_first(self, rng) -> float:
        return float(_rng(rng).exponential(1.0 / self.mu))

    def _select(self, idx):
        return Exponential(float(np.asarray(self.mu)[idx]))


@dataclass(frozen=True, eq=False)
class GeneralizedPareto(IrtModel):
    """Generalized Pareto irts with shape ``k`` in [0, 1) and scale ``sigma``.

    The location parameter is fixed at zero; ``k = 0`` is the exponential law
    with rate 1/σ.
    """

    k: float
    sigma: float
    location: float = 0.0

    def __post_init__(self):
        _check_positive(sigma=self.sigma)
        k = np.asarray(self.k, dtype=float)
        if np.any(~np.isfinite(k)) or np.any(k < 0) or np.any(k >= 1):
            raise InvalidInstanceError("generalized Pareto shape must satisfy 0 <= k < 1")
        if np.any(np.asarray(self.location) != 0):
            raise InvalidInstanceError("only zero location is supported")

    @property
    def rate(self):
        return _scalar((1.0 - np.asarray(self.k)) / np.asarray(self.sigma))

    @property
    def hazard_limit(self):
        k = np.asarray(self.k)
        return _scalar(np.where(k > 0, 0.0, 1.0 / np.asarray(self.sigma)))

    def is_dhr(self) -> bool:
        return True

    def _z(self, t):
        return t / np.asarray(self.sigma)

    def log_sf(self, t):
        k = np.asarray(self.k, dtype=float)
        z = self._z(t)
        safe = np.where(k == 0, 1.0, k)
        return np.where(k == 0, -z, -np.log1p(safe * z) / safe)

    def log_hazard(self, t):
        return -np.log(np.asarray(self.sigma) + np.asarray(self.k) * t)

    def age(self, t):
        t = _as_time(t)
        k = np.asarray(self.k, dtype=float)
        return _scalar(-np.expm1(np.log1p(k * self._z(t)) + self.log_sf(t)))

    def quantile(self, u):
        u = _as_prob(u, allow_one=True)
        k = np.asarray(self.k, dtype=float)
        safe = np.where(k == 0, 1.0, k)
        with np.errstate(divide="ignore", over="ignore"):
            log_s = np.log1p(-u)
            z = np.where(k == 0, -log_s, np.expm1(-safe * log_s) / safe)
        return _scalar(np.where(u >= 1, INFINITE_TIMER, z * np.asarray(self.sigma)))

    def age_quantile(self, u):
        # F̂ = 1 - (1 + k t/σ)^((k-1)/k)  =>  invert the power
        u = _as_prob(u)
        k = np.asarray(self.k, dtype=float)
        safe = np.where(k == 0, 1.0, k)
        log_s = np.log1p(-u)
        z = np.where(k == 0, -log_s, np.expm1(safe * log_s / (safe - 1.0)) / safe)
        return _scalar(z * np.asarray(self.sigma))

    def occupancy(self, x):
        x = _as_prob(x)
        return _scalar(-np.expm1((1.0 - np.asarray(self.k)) * np.log1p(-x)))

    def occupancy_slope(self, x):
        x = _as_prob(x)
        k = np.asarray(self.k)
        return _scalar((1.0 - k) * np.exp(-k * np.log1p(-x)))

    def _select(self, idx):
        return GeneralizedPareto(float(np.asarray(self.k)[idx]), float(np.asarray(self.sigma)[idx]))

    @classmethod
    def stack(cls, models):
        return cls(np.array([m.k for m in models], dtype=float), np.array([m.sigma for m in models], dtype=float))


@dataclass(frozen=True, eq=False)
class Hyperexponential(IrtModel):
    """Mixture of exponentials with phase probabilities ``probs`` and rates ``rates``.

    Phases live on the last axis, so a batch of ``m`` order-``l`` models has
    parameter arrays of shape ``(m, l)``.
    """

    probs: Sequence[float]
    rates: Sequence[float]

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.probs, dtype=float))
        r = np.atleast_1d(np.asarray(self.rates, dtype=float))
        if p.shape != r.shape:
            raise InvalidInstanceError("phase probabilities and rates must have the same shape")
        _check_positive(rates=r)
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-12):
            raise InvalidInstanceError("phase probabilities must be non-negative and sum to one")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "rates", r)

    @property
    def rate(self):
        return _scalar(1.0 / np.sum(self.probs / self.rates, axis=-1))

    @property
    def hazard_limit(self):
        return _scalar(np.min(np.where(self.probs > 0, self.rates, np.inf), axis=-1))

    def is_dhr(self) -> bool:
        return True

    def _terms(self, t):
        return -self.rates * np.asarray(t)[..., None]

    def log_sf(self, t):
        return special.logsumexp(self._terms(t), b=self.probs, axis=-1)

    def cdf(self, t):
        # per-phase expm1 avoids the cancellation in 1 - sf for small t
        return _scalar(np.sum(self.probs * -np.expm1(self._terms(_as_time(t))), axis=-1))

    def log_hazard(self, t):
        a = self._terms(t)
        return special.logsumexp(a, b=self.probs * self.rates, axis=-1) - special.logsumexp(a, b=self.probs, axis=-1)

    def age(self, t):
        t = _as_time(t)
        mu = np.asarray(self.rate)[..., None]
        return _scalar(np.sum(mu * self.probs / self.rates * -np.expm1(self._terms(t)), axis=-1))

    def _quantile_bracket(self, u):
        # e^{-θmax t} <= 1 - F(t) <= e^{-θmin t}
        pos = self.probs > 0
        lo_rate = np.min(np.where(pos, self.rates, np.inf), axis=-1)
        hi_rate = np.max(np.where(pos, self.rates, 0.0), axis=-1)
        s = -np.log1p(-u)
        return s / hi_rate, s / lo_rate

    def age_quantile(self, u):
        u = _as_prob(u)
        weights = np.asarray(self.rate)[..., None] * self.probs / self.rates
        pos = weights > 0
        s = -np.log1p(-u)
        lo = s / np.max(np.where(pos, self.rates, 0.0), axis=-1)
        hi = s / np.min(np.where(pos, self.rates, np.inf), axis=-1)
        return _scalar(bisect_increasing(lambda x: self.age(x) - u, lo, hi, iterations=200))

    def sample(self, rng, size):
        rng = _rng(rng)
        phase = rng.choice(self.probs.shape[-1], size=size, p=self.probs)
        return rng.exponential(1.0, size) / self.rates[phase]

    def sample_first(self, rng) -> float:
        rng = _rng(rng)
        weights = self.rate * self.probs / self.rates
        phase = rng.choice(len(weights), p=weights / weights.sum())
        return float(rng.exponential(1.0 / self.rates[phase]))

    def _select(self, idx):
        p = self.probs[idx]
        return Hyperexponential(p / p.sum(), self.rates[idx])

    @classmethod
    def stack(cls, models):
        order = max(m.probs.shape[-1] for m in models)
        p = np.zeros((len(models), order))
        r = np.ones((len(models), order))
        for i, m in enumerate(models):
            p[i, : m.probs.shape[-1]] = m.probs
            r[i, : m.rates.shape[-1]] = m.rates
        return cls(p, r)


@dataclass(frozen=True, eq=False)
class Weibull(IrtModel):
    """Weibull irts with shape ``k`` and scale ``theta``; DHR for ``k <= 1``."""

    k: float
    theta: float

    def __post_init__(self):
        _check_positive(k=self.k, theta=self.theta)

    @property
    def rate(self):
        return _scalar(1.0 / (np.asarray(self.theta) * special.gamma(1.0 + 1.0 / np.asarray(self.k))))

    @property
    def hazard_limit(self):
        k = np.asarray(self.k)
        return _scalar(np.where(k < 1, 0.0, np.where(k == 1, 1.0 / np.asarray(self.theta), np.inf)))

    def is_dhr(self) -> bool:
        return bool(np.all(np.asarray(self.k) <= 1))

    def log_sf(self, t):
        return -np.power(t / np.asarray(self.theta), self.k)

    def log_hazard(self, t):
        k, theta = np.asarray(self.k), np.asarray(self.theta)
        with np.errstate(divide="ignore"):
            return np.log(k / theta) + (k - 1.0) * np.log(t / theta)

    def age(self, t):
        t = _as_time(t)
        k = np.asarray(self.k)
        return _scalar(special.gammainc(1.0 / k, np.power(t / np.asarray(self.theta), k)))

    def quantile(self, u):
        u = _as_prob(u, allow_one=True)
        with np.errstate(divide="ignore"):
            return _scalar(np.asarray(self.theta) * np.power(-np.log1p(-u), 1.0 / np.asarray(self.k)))

    def age_quantile(self, u):
        u = _as_prob(u)
        k = np.asarray(self.k)
        return _scalar(np.asarray(self.theta) * np.power(special.gammaincinv(1.0 / k, u), 1.0 / k))

    def occupancy(self, x):
        x = _as_prob(x)
        k = np.asarray(self.k)
        return _scalar(special.gammainc(1.0 / k, -np.log1p(-x)))

    def _select(self, idx):
        return Weibull(float(np.asarray(self.k)[idx]), float(np.asarray(self.theta)[idx]))


@dataclass(frozen=True, eq=False)
class Uniform(IrtModel):
    """Uniform irts on [0, b]; increasing hazard, hence never DHR."""

    b: float

    def __post_init__(self):
        _check_positive(b=self.b)

    @property
    def support_end(self):
        return self.b

    @property
    def rate(self):
        return _scalar(2.0 / np.asarray(self.b))

    @property
    def hazard_limit(self):
        return _scalar(np.full(np.shape(self.b), np.inf))

    def is_dhr(self) -> bool:
        return False

    def log_sf(self, t):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log1p(-np.minimum(t / np.asarray(self.b), 1.0))

    def log_hazard(self, t):
        with np.errstate(divide="ignore", invalid="ignore"):
            return -np.log(np.asarray(self.b) - t)

    def pdf(self, t):
        t = _as_time(t)
        return _scalar(np.where(t <= np.asarray(self.b), 1.0 / np.asarray(self.b), 0.0))

    def hazard(self, t):
        t = _as_time(t)
        if np.any(t >= np.asarray(self.b)):
            raise SaturatedError("hazard is undefined where F = 1")
        return _scalar(1.0 / (np.asarray(self.b) - t))

    def age(self, t):
        s = np.minimum(_as_time(t) / np.asarray(self.b), 1.0)
        return _scalar(2.0 * s - s * s)

    def quantile(self, u):
        u = _as_prob(u, allow_one=True)
        return _scalar(np.where(u >= 1, INFINITE_TIMER, u * np.asarray(self.b)))

    def age_quantile(self, u):
        u = _as_prob(u)
        return _scalar(np.asarray(self.b) * (1.0 - np.sqrt(1.0 - u)))

    def occupancy(self, x):
        x = _as_prob(x)
        return _scalar(2.0 * x - x * x + 0.0 * np.asarray(self.b))

    def occupancy_slope(self, x):
        x = _as_prob(x)
        return _scalar(2.0 * (1.0 - x) + 0.0 * np.asarray(self.b))

    def _select(self, idx):
        return Uniform(float(np.asarray(self.b)[idx]))


class H2Params(NamedTuple):
    """Second-order hyperexponential equivalent of a two-state MMPP."""

    q1: float
    q2: float
    u1: float
    u2: float
    delta: float

    @property
    def mean(self):
        return self.q1 / self.u1 + self.q2 / self.u2


def mmpp2_to_h2(theta1, theta2, r12, r21) -> H2Params:
    """Hyperexponential irt law of a two-state MMPP started at an arrival.

    The arrival-epoch state distribution is proportional to
    ``[θ₁ r₂₁, θ₂ r₁₂]``. The slow phase rate ``u1`` is computed from the
    product of the eigenvalues and the mixing probabilities from their
    difference form, which stays accurate when the switching rates are many
    orders of magnitude smaller or larger than the arrival rates.
    """
    _check_positive(theta1=theta1, theta2=theta2, r12=r12, r21=r21)
    th1, th2, a, b = (np.asarray(v, dtype=float) for v in (theta1, theta2, r12, r21))
    s = th1 + th2 + a + b
    delta = np.hypot(th1 - th2 + a - b, 2.0 * np.sqrt(a * b))
    u2 = 0.5 * (s + delta)
    u1 = (th1 * th2 + th1 * b + th2 * a) / u2
    c = (th2 * th2 * a + th1 * th1 * b) / (th1 * b + th2 * a)
    q1 = np.clip((u2 - c) / delta, 0.0, 1.0)
    q2 = np.clip((c - u1) / delta, 0.0, 1.0)
    total = q1 + q2
    return H2Params(*(_scalar(v) for v in (q1 / total, q2 / total, u1, u2, delta)))


def mmpp2_slow_limit(theta1: float, theta2: float, a12: float, a21: float) -> H2Params:
    """Limit of :func:`mmpp2_to_h2` as the switching rates ``x a12``, ``x a21`` go to zero.

    Each phase keeps its own arrival rate and is entered with the arrival-epoch
    state probability; phases are ordered so that ``u1 <= u2``.
    """
    _check_positive(theta1=theta1, theta2=theta2, a12=a12, a21=a21)
    z = theta1 * a21 + theta2 * a12
    phases = sorted([(theta1, theta1 * a21 / z), (theta2, theta2 * a12 / z)])
    (u1, q1), (u2, q2) = phases
    return H2Params(q1, q2, u1, u2, abs(theta1 - theta2))


def mmpp2_fast_limit_rate(theta1: float, theta2: float, a12: float, a21: float) -> float:
    """Poisson rate that a two-state MMPP approaches as its switching rates grow."""
    return (theta1 * a21 + theta2 * a12) / (a12 + a21)


@dataclass(frozen=True, eq=False)
class Mmpp2(IrtModel):
    """Two-state Markov-modulated Poisson requests.

    Arrival rate ``theta1`` in state 1 and ``theta2`` in state 2; the modulating
    chain jumps 1→2 at rate ``r12`` and 2→1 at rate ``r21``. Distribution
    functions delegate to the hyperexponential equivalent.
    """

    theta1: float
    theta2: float
    r12: float
    r21: float

    def __post_init__(self):
        params = mmpp2_to_h2(self.theta1, self.theta2, self.r12, self.r21)
        probs = np.stack([np.asarray(params.q1), np.asarray(params.q2)], axis=-1)
        rates = np.stack([np.asarray(params.u1), np.asarray(params.u2)], axis=-1)
        object.__setattr__(self, "h2", Hyperexponential(probs, rates))

    @property
    def rate(self):
        th1, th2, a, b = (np.asarray(v, dtype=float) for v in (self.theta1, self.theta2, self.r12, self.r21))
        return _scalar((th1 * b + th2 * a) / (a + b))

    @property
    def stationary(self):
        """Time-stationary distribution π of the modulating chain."""
        a, b = np.asarray(self.r12, dtype=float), np.asarray(self.r21, dtype=float)
        return np.stack([b / (a + b), a / (a + b)], axis=-1)

    @property
    def arrival_state_probs(self):
        """State distribution seen at an arrival epoch."""
        th1, th2, a, b = (np.asarray(v, dtype=float) for v in (self.theta1, self.theta2, self.r12, self.r21))
        z = th1 * b + th2 * a
        return np.stack([th1 * b / z, th2 * a / z], axis=-1)

    @property
    def hazard_limit(self):
        return self.h2.hazard_limit

    def is_dhr(self) -> bool:
        return True

    def log_sf(self, t):
        return self.h2.log_sf(t)

    def cdf(self, t):
        return self.h2.cdf(t)

    def log_hazard(self, t):
        return self.h2.log_hazard(t)

    def age(self, t):
        return self.h2.age(t)

    def quantile(self, u):
        return self.h2.quantile(u)

    def age_quantile(self, u):
        return self.h2.age_quantile(u)

    def _select(self, idx):
        return Mmpp2(*(float(np.asarray(getattr(self, n))[idx]) for n in ("theta1", "theta2", "r12", "r21")))


MODEL_TYPES = {
    "exponential": Exponential,
    "pareto": GeneralizedPareto,
    "hyperexponential": Hyperexponential,
    "weibull": Weibull,
    "uniform": Uniform,
    "mmpp2": Mmpp2,
}


def stack_models(models: Sequence[IrtModel]) -> list[tuple[np.ndarray, IrtModel]]:
    """Group models by family and batch each group.

    Returns
    -------
    list of (indices, batched model)
        ``indices`` are positions in ``models``.
    """
    groups: dict[type, list[int]] = {}
    for i, m in enumerate(models):
        groups.setdefault(type(m), []).append(i)
    out = []
    for cls, idx in groups.items():
        out.append((np.array(idx), cls.stack([models[i] for i in idx])))
    return out


# ---------------------------------------------------------------------------
# operations on single models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PopularityModel:
    """Zipf popularity: ``probabilities[i-1]`` is the share of the i-th most popular content."""

    n: int
    alpha: float
    probabilities: np.ndarray


def zipf_popularity(n: int, alpha: float) -> PopularityModel:
    """Zipf law p_i = A / i^alpha over ``n`` contents."""
    if n < 1:
        raise InvalidInstanceError("a catalog needs at least one content")
    if alpha < 0:
        raise InvalidInstanceError("Zipf exponent must be non-negative")
    raw = np.arange(1, n + 1, dtype=float) ** -alpha
    return PopularityModel(n, float(alpha), raw / math.fsum(raw))


class IrtEval(NamedTuple):
    F: float
    f: float
    age: float
    hazard: float


def irt_eval(model: IrtModel, t: float) -> IrtEval:
    """Evaluate F, f, F̂ and the hazard rate at ``t``."""
    t = float(_as_time(t))
    return IrtEval(float(model.cdf(t)), float(model.pdf(t)), float(model.age(t)), float(model.hazard(t)))


def irt_quantile(model: IrtModel, u: float) -> float:
    """F⁻¹(u), or :data:`INFINITE_TIMER` when ``u >= 1``."""
    return float(model.quantile(u))


def mean_rate(model: IrtModel) -> float:
    return float(model.rate)


def occupancy_map(model: IrtModel, x: float) -> tuple[float, float]:
    """Return ``(g(x), g'(x))``."""
    return float(model.occupancy(x)), float(model.occupancy_slope(x))


def is_dhr(model: IrtModel) -> bool:
    return bool(model.is_dhr())


# ---------------------------------------------------------------------------
# request streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RequestStream:
    """Request times of one content on ``[0, horizon]``."""

    content_id: int
    times: np.ndarray
    seed: object = None

    def to_csv_lines(self) -> list[str]:
        return [f"{t!r},{self.content_id}" for t in self.times]


def _strictly_increasing(times: np.ndarray) -> np.ndarray:
    # float rounding can merge two very close arrivals; nudge them apart
    for i in np.flatnonzero(np.diff(times) <= 0):
        times[i + 1] = np.nextafter(times[i], np.inf)
    return times


def _renewal_times(model: IrtModel, rng: np.random.Generator, horizon: float) -> np.ndarray:
    first = model.sample_first(rng)
    if first > horizon:
        return np.empty(0)
    chunks = [np.array([first])]
    last = first
    expected = float(model.rate) * (horizon - first)
    while last <= horizon:
        size = int(expected + 5.0 * math.sqrt(expected) + 16)
        draws = last + np.cumsum(model.sample(rng, size))
        chunks.append(draws)
        last = draws[-1]
        expected = max(float(model.rate) * (horizon - last), 0.0)
    times = np.concatenate(chunks)
    return times[times <= horizon]


def _mmpp_initial_state(model: Mmpp2, rng, initial: str) -> int:
    probs = model.arrival_state_probs if initial == "arrival" else model.stationary
    return int(rng.random() >= probs[0])


def _mmpp_sojourn_times(model: Mmpp2, rng: np.random.Generator, horizon: float, initial: str) -> np.ndarray:
    state = _mmpp_initial_state(model, rng, initial)
    leave = np.array([model.r12, model.r21], dtype=float)
    arrive = np.array([model.theta1, model.theta2], dtype=float)
    switch_rate = 2.0 / (1.0 / leave[0] + 1.0 / leave[1])
    starts, states = [], []
    clock = 0.0
    while clock < horizon:
        size = int(switch_rate * (horizon - clock) + 5.0 * math.sqrt(switch_rate * (horizon - clock)) + 16)
        seq = (state + np.arange(size)) % 2
        durations = rng.exponential(1.0, size) / leave[seq]
        begin = clock + np.concatenate([[0.0], np.cumsum(durations[:-1])])
        keep = begin < horizon
        starts.append(begin[keep])
        states.append(seq[keep])
        clock = begin[-1] + durations[-1]
        state = (seq[-1] + 1) % 2
    starts = np.concatenate(starts)
    states = np.concatenate(states)
    ends = np.minimum(np.append(starts[1:], horizon), horizon)
    lengths = ends - starts
    counts = rng.poisson(arrive[states] * lengths)
    times = np.repeat(starts, counts) + rng.random(counts.sum()) * np.repeat(lengths, counts)
    return np.sort(times)


def _mmpp_map_times(model: Mmpp2, rng: np.random.Generator, horizon: float, initial: str) -> np.ndarray:
    """Arrival-to-arrival sampling of the MMPP as a Markovian arrival process.

    Used when the modulating chain switches far more often than requests
    arrive, where simulating every sojourn would be wasteful.
    """
    th = np.array([model.theta1, model.theta2], dtype=float)
    d0 = np.array([[-(th[0] + model.r12), model.r12], [model.r21, -(th[1] + model.r21)]])
    h2 = mmpp2_to_h2(model.theta1, model.theta2, model.r12, model.r21)
    u1, u2 = h2.u1, h2.u2
    eye = np.eye(2)
    p1 = (d0 + u2 * eye) / (u2 - u1)
    p2 = eye - p1
    a, b = p1.sum(axis=1), p2.sum(axis=1)
    state = _mmpp_initial_state(model, rng, initial)
    times = []
    clock = 0.0
    while True:
        target = rng.random()
        aj, bj = a[state], b[state]
        surv = lambda t: aj * math.exp(-u1 * t) + bj * math.exp(-u2 * t) - target
        hi = math.log((abs(aj) + abs(bj)) / target) / u1 + 1.0 / u1
        gap = brent(surv, 0.0, hi, xtol=1e-15 / u2)
        clock += gap
        if clock > horizon:
            break
        times.append(clock)
        row = math.exp(-u1 * gap) * p1[state] + math.exp(-u2 * gap) * p2[state]
        weights = np.maximum(row, 0.0) * th
        state = int(rng.random() * weights.sum() >= weights[0])
    return np.array(times)


def sample_stream(model: IrtModel, seed, horizon: float, content_id: int = 1,
                  mmpp_initial: str = "arrival") -> RequestStream:
    """Sample request times of one content on ``[0, horizon]``.

    Renewal models start in equilibrium: the first arrival is drawn from the
    age distribution, later gaps are i.i.d. irts drawn from ``model``. A
    two-state MMPP simulates its modulating chain explicitly, with the initial
    state drawn from the arrival-epoch distribution (``mmpp_initial="arrival"``)
    or the time-stationary one (``"stationary"``).
    """
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    if mmpp_initial not in ("arrival", "stationary"):
        raise InvalidInstanceError(f"unknown MMPP initial distribution {mmpp_initial!r}")
    rng = _rng(seed)
    if isinstance(model, Mmpp2):
        switches = horizon * 2.0 / (1.0 / model.r12 + 1.0 / model.r21)
        if switches <= 2e6:
            times = _mmpp_sojourn_times(model, rng, horizon, mmpp_initial)
        else:
            times = _mmpp_map_times(model, rng, horizon, mmpp_initial)
    else:
        times = _renewal_times(model, rng, horizon)
    return RequestStream(content_id, _strictly_increasing(times), seed)

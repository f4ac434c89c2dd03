"""Request-driven controllers: dual, primal and primal-dual timer updates.

Each controller is stepped once per request by the simulator through
``on_request(i, now, occupancy, hit)``, which returns the timer to (re)set for
content ``i``. ``occupancy`` is the number of unexpired contents after the
request has been served, counting content ``i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._roots import brent
from .catalog import Catalog
from .errors import DomainError, InvalidInstanceError, NonConvexError, NumericalFailure
from .solver import _check_mode, solve_cum, timers_for_eta
from .workload import (
    INFINITE_TIMER,
    Exponential,
    GeneralizedPareto,
    Hyperexponential,
    IrtModel,
    Mmpp2,
    Weibull,
)

# ---------------------------------------------------------------------------
# timers from the multiplier
# ---------------------------------------------------------------------------


def _poisson_timer(mu: float, weight: float, beta: float, eta: float, mode: str) -> float:
    # hit rate solving U'(λ) = η/μ (hit rates) or hit probability solving U'(h) = η
    if mode == "hrb":
        h = (weight * mu / eta) ** (1.0 / beta) / mu
    else:
        h = (weight / eta) ** (1.0 / beta)
    if h >= 1.0:
        return INFINITE_TIMER
    return -math.log1p(-h) / mu


def _log_target(weight: float, mu: float, beta: float, eta: float, mode: str) -> float:
    # log of the constant multiplying the hazard in η = c · h^-β · ζ
    if mode == "hrb":
        return math.log(weight) - beta * math.log(mu) - math.log(eta)
    return math.log(weight) - math.log(mu) - math.log(eta)


def _solve_in_v(resid, v_start: float) -> float:
    """Root of a decreasing function on (0, ∞), bracketed geometrically."""
    lo, hi = v_start, v_start
    while resid(lo) <= 0:
        lo *= 0.25
        if lo < 1e-300:
            raise NumericalFailure("no sign change near zero")
    while resid(hi) >= 0:
        hi *= 4.0
        if hi > 1e300:
            raise NumericalFailure("no sign change at large arguments")
    return brent(resid, lo, hi, xtol=1e-300, rtol=1e-15)


def _pareto_timer(model: GeneralizedPareto, weight: float, beta: float, eta: float, mode: str) -> float:
    k, sigma, mu = float(model.k), float(model.sigma), float(model.rate)
    if k == 0.0:
        return _poisson_timer(mu, weight, beta, eta, mode)
    # e(h) = c (1-h)^k / (1-k) - h^β with v = -log(1-h); log form is decreasing in v
    c = _log_target(weight, mu, beta, eta, mode) + math.log(mu) - math.log1p(-k)

    def resid(v):
        return c - k * v - beta * math.log(-math.expm1(-v))

    v = _solve_in_v(resid, 1.0)
    return sigma * math.expm1(k * v) / k


def _weibull_timer(model: Weibull, weight: float, beta: float, eta: float, mode: str) -> float:
    k, theta, mu = float(model.k), float(model.theta), float(model.rate)
    if k > 1:
        raise NonConvexError("Weibull with k > 1 has increasing hazard")
    # ζ = (k/θ) L^(1 - 1/k) with L = -log(1-h) = (t/θ)^k
    c = _log_target(weight, mu, beta, eta, mode) + math.log(k / theta)
    if k == 1.0:
        return _poisson_timer(mu, weight, beta, eta, mode)

    def resid(v):
        return c + (1.0 - 1.0 / k) * math.log(v) - beta * math.log(-math.expm1(-v))

    v = _solve_in_v(resid, 1.0)
    return theta * v ** (1.0 / k)


def _phases(model: IrtModel) -> tuple[list, list]:
    """Log-probabilities and rates of the positive-probability phases of a hyperexponential."""
    h2 = model.h2 if isinstance(model, Mmpp2) else model
    probs = np.asarray(h2.probs, dtype=float).ravel()
    rates = np.asarray(h2.rates, dtype=float).ravel()
    keep = probs > 0
    return np.log(probs[keep]).tolist(), rates[keep].tolist()


def _logsumexp(xs) -> float:
    m = max(xs)
    return m + math.log(math.fsum(math.exp(x - m) for x in xs))


def _phase_timer(log_p: list, u: list, mu: float, weight: float, beta: float, eta: float, mode: str) -> float:
    c = _log_target(weight, mu, beta, eta, mode)
    # fixed point h^β (1-h) = e^c f(t), i.e. β log h - log ζ(t) - c = 0, increasing in t
    if c + math.log(min(u)) >= 0:
        return INFINITE_TIMER
    log_pu = [lp + math.log(r) for lp, r in zip(log_p, u)]
    p = [math.exp(lp) for lp in log_p]

    def resid(t):
        log_sf = _logsumexp([lp - r * t for lp, r in zip(log_p, u)])
        log_pdf = _logsumexp([lp - r * t for lp, r in zip(log_pu, u)])
        # the cdf summed per phase keeps its relative accuracy for tiny t
        cdf = math.fsum(pi * -math.expm1(-r * t) for pi, r in zip(p, u))
        return -(beta * math.log(cdf) - (log_pdf - log_sf) - c)

    return _solve_in_v(resid, 1.0 / mu)


def _hyperexp_timer(model: IrtModel, weight: float, beta: float, eta: float, mode: str) -> float:
    log_p, u = _phases(model)
    return _phase_timer(log_p, u, float(model.rate), weight, beta, eta, mode)


def timer_from_eta(model: IrtModel, weight: float, beta: float, eta: float, mode: str = "hrb") -> float:
    """Timer of one content that is optimal for the multiplier ``eta``.

    Poisson contents use the closed form; generalized Pareto, Weibull and
    hyperexponential/MMPP contents solve their scalar stationarity equation;
    any other DHR model goes through the centralized solver's timer search.
    Returns :data:`INFINITE_TIMER` when the hit probability clamps at one,
    including ``eta = 0``.
    """
    mode = _check_mode(mode)
    if eta < 0:
        raise DomainError("eta must be non-negative")
    if eta == 0:
        return INFINITE_TIMER
    if not beta > 0:
        raise InvalidInstanceError("timers need beta > 0")
    if isinstance(model, Exponential):
        return _poisson_timer(float(model.mu), weight, beta, eta, mode)
    if isinstance(model, GeneralizedPareto):
        return _pareto_timer(model, weight, beta, eta, mode)
    if isinstance(model, Weibull):
        return _weibull_timer(model, weight, beta, eta, mode)
    if isinstance(model, (Hyperexponential, Mmpp2)):
        return _hyperexp_timer(model, weight, beta, eta, mode)
    if not model.is_dhr():
        raise NonConvexError("model has increasing hazard")
    catalog = Catalog.from_models([model], [weight], beta, 1.0)
    return float(timers_for_eta(catalog, eta, mode)[0])


def stationarity_gap(model: IrtModel, weight: float, beta: float, eta: float, t: float, mode: str = "hrb") -> float:
    """Relative residual y(t)/η - 1 of a timer."""
    mu = float(model.rate)
    h = float(model.cdf(t))
    zeta = float(model.hazard(t))
    y = weight * (mu * h) ** (-beta) * zeta if mode == "hrb" else weight * h ** (-beta) * zeta / mu
    return y / eta - 1.0


# ---------------------------------------------------------------------------
# elementary updates
# ---------------------------------------------------------------------------


def dual_step(eta: float, occupancy: float, cache_size: float, gamma: float) -> float:
    """Projected multiplier update η ← max{0, η + γ (B_curr - B)}."""
    if not gamma > 0:
        raise DomainError("step size must be positive")
    return max(0.0, eta + gamma * (occupancy - cache_size))


@dataclass(frozen=True)
class BLogPenalty:
    """C(x) = max{0, x - B log(B + x)} for an excess x = B_curr - B > -B."""

    cache_size: float

    def _inner(self, x: float) -> float:
        B = self.cache_size
        return x - B * math.log(B + x)

    def value(self, x: float) -> float:
        return max(0.0, self._inner(x))

    def derivative(self, x: float) -> float:
        if self._inner(x) <= 0:
            return 0.0
        return 1.0 - self.cache_size / (self.cache_size + x)


@dataclass(frozen=True)
class PowerPenalty:
    """C(x) = c max{0, x}^m with m >= 1 and scale c > 0."""

    m: float = 2.0
    scale: float = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise InvalidInstanceError("power penalty needs m >= 1")
        if not self.scale > 0:
            raise InvalidInstanceError("penalty scale must be positive")

    def value(self, x: float) -> float:
        return self.scale * max(0.0, x) ** self.m

    def derivative(self, x: float) -> float:
        if x <= 0:
            return 0.0
        return self.scale * self.m * x ** (self.m - 1.0)


_LOG_CAP = 600.0


def _ascent_direction(model: IrtModel, weight: float, beta: float, t: float, price: float, mode: str):
    """Step scale and gradient of the penalized/Lagrangian objective in the timer."""
    mu = float(model.rate)
    h = max(float(model.cdf(t)), 1e-300)
    f = float(model.pdf(t))
    zeta = float(model.hazard(t))
    # U' diverges as t -> 0; evaluate in logs and cap to stay finite
    if mode == "hrb":
        marginal = weight * math.exp(min(-beta * math.log(mu * h), _LOG_CAP))
        return mu * f, marginal - price / zeta
    marginal = weight * math.exp(min(-beta * math.log(h), _LOG_CAP))
    return f, marginal - mu * price / zeta


def primal_step(timer: float, model: IrtModel, weight: float, beta: float, occupancy: float,
                cache_size: float, penalty, rho: float, mode: str = "hrb") -> float:
    """Timer ascent t ← max{0, t + δ [U' - (g'/μ) C'(B_curr - B)]}.

    δ = ρ μ f(t) for hit-rate utilities and ρ f(t) for hit-probability ones;
    g'/μ = 1/ζ(t) in this parametrization.
    """
    if not rho > 0:
        raise DomainError("rho must be positive")
    if math.isinf(timer):
        return timer
    scale, grad = _ascent_direction(model, weight, beta, timer, penalty.derivative(occupancy - cache_size), mode)
    return max(0.0, timer + rho * scale * grad)


def primal_dual_step(timer: float, eta: float, model: IrtModel, weight: float, beta: float, occupancy: float,
                     cache_size: float, gamma: float, rho: float, mode: str = "hrb") -> tuple[float, float]:
    """Timer ascent against the current multiplier, then the multiplier update."""
    if not rho > 0:
        raise DomainError("rho must be positive")
    new_timer = timer
    if not math.isinf(timer):
        scale, grad = _ascent_direction(model, weight, beta, timer, eta, mode)
        new_timer = max(0.0, timer + rho * scale * grad)
    return new_timer, dual_step(eta, occupancy, cache_size, gamma)


# ---------------------------------------------------------------------------
# controllers
# ---------------------------------------------------------------------------


@dataclass
class ControllerState:
    eta: float
    timers: np.ndarray
    gamma: float | None = None
    rho: float | None = None
    iteration: int = 0


class FixedTimers:
    """Static timers, e.g. a centralized solution replayed in the simulator."""

    def __init__(self, timers):
        self.state = ControllerState(eta=math.nan, timers=np.asarray(timers, dtype=float).copy())
        self._t = self.state.timers.tolist()

    @property
    def eta(self):
        return None

    def on_request(self, i: int, now: float, occupancy: int, hit: bool) -> float:
        return self._t[i]


class DualController:
    """Multiplier-driven timers: η follows the occupancy, tᵢ = tᵢ(η).

    Exponential catalogs use an inlined closed form for speed.
    """

    def __init__(self, catalog: Catalog, mode: str = "hrb", gamma: float = 1e-5, eta0: float = 1.0):
        self.catalog = catalog
        self.mode = _check_mode(mode)
        if not gamma > 0:
            raise DomainError("step size must be positive")
        self.gamma = gamma
        self.B = catalog.cache_size
        self.state = ControllerState(eta=float(eta0), timers=np.zeros(catalog.n), gamma=gamma)
        self._models = catalog.models
        self._w = catalog.weights.tolist()
        self._mu = catalog.rates.tolist()
        self._beta = catalog.beta
        self._poisson = all(isinstance(m, Exponential) for m in self._models)
        # phase parameters of hyperexponential and MMPP contents, extracted once
        self._phases = [_phases(m) if isinstance(m, (Hyperexponential, Mmpp2)) else None for m in self._models]

    @property
    def eta(self) -> float:
        return self.state.eta

    def on_request(self, i: int, now: float, occupancy: int, hit: bool) -> float:
        st = self.state
        eta = st.eta + self.gamma * (occupancy - self.B)
        eta = eta if eta > 0 else 0.0
        st.eta = eta
        st.iteration += 1
        if eta == 0.0:
            return INFINITE_TIMER
        if self._poisson:
            t = _poisson_timer(self._mu[i], self._w[i], self._beta, eta, self.mode)
        elif self._phases[i] is not None:
            t = _phase_timer(*self._phases[i], self._mu[i], self._w[i], self._beta, eta, self.mode)
        else:
            t = timer_from_eta(self._models[i], self._w[i], self._beta, eta, self.mode)
        return t


class PrimalController:
    """Per-content timer ascent on utility minus an occupancy penalty."""

    def __init__(self, catalog: Catalog, penalty, mode: str = "hrb", rho: float = 1e-3, timers0=None):
        self.catalog = catalog
        self.mode = _check_mode(mode)
        self.penalty = penalty
        self.rho = rho
        t0 = (1.0 / catalog.rates) if timers0 is None else np.broadcast_to(timers0, (catalog.n,))
        self.state = ControllerState(eta=math.nan, timers=np.array(t0, dtype=float), rho=rho)

    @property
    def eta(self):
        return None

    def on_request(self, i: int, now: float, occupancy: int, hit: bool) -> float:
        st = self.state
        c = self.catalog.contents[i]
        st.timers[i] = primal_step(st.timers[i], c.model, c.weight, self.catalog.beta, occupancy,
                                   self.catalog.cache_size, self.penalty, self.rho, self.mode)
        st.iteration += 1
        return float(st.timers[i])


class PrimalDualController:
    """Timer ascent against η together with the projected multiplier update."""

    def __init__(self, catalog: Catalog, mode: str = "hrb", gamma: float = 1e-5, rho: float = 1e-3,
                 eta0: float = 1.0, timers0=None):
        self.catalog = catalog
        self.mode = _check_mode(mode)
        self.gamma, self.rho = gamma, rho
        t0 = (1.0 / catalog.rates) if timers0 is None else np.broadcast_to(timers0, (catalog.n,))
        self.state = ControllerState(eta=float(eta0), timers=np.array(t0, dtype=float), gamma=gamma, rho=rho)

    @property
    def eta(self) -> float:
        return self.state.eta

    def on_request(self, i: int, now: float, occupancy: int, hit: bool) -> float:
        st = self.state
        c = self.catalog.contents[i]
        st.timers[i], st.eta = primal_dual_step(st.timers[i], st.eta, c.model, c.weight, self.catalog.beta,
                                                occupancy, self.catalog.cache_size, self.gamma, self.rho,
                                                self.mode)
        st.iteration += 1
        return float(st.timers[i])


def penalized_optimum(catalog: Catalog, penalty, mode: str = "hrb"):
    """Optimum of Σ U - C(Σ F̂ - B) over timers, via the centralized solver.

    At the optimum the multiplier equals C'(B' - B) where B' is the occupancy
    actually used, so B' is found by a scalar root search over budgets.
    Returns ``(budget, solution)``.
    """
    B = catalog.cache_size

    def resid(budget: float) -> float:
        sol = solve_cum(catalog.with_cache_size(budget), mode)
        return sol.eta - penalty.derivative(budget - B)

    lo, hi = B, B + 1.0
    if resid(lo) <= 0:
        raise NumericalFailure("penalty is active below the budget")
    while resid(hi) > 0:
        hi = B + 2.0 * (hi - B)
        if hi >= catalog.n:
            raise NumericalFailure("penalty never balances the marginal utility")
    budget = brent(resid, lo, hi, rtol=1e-13)
    return budget, solve_cum(catalog.with_cache_size(budget), mode)

"""Centralized utility maximization for reset-TTL caches.

Two objectives are supported: utilities of hit rates (``"hrb"``) and
utilities of hit probabilities (``"hpb"``), both subject to an expected
occupancy budget Σ F̂ᵢ(tᵢ) ≤ B. For DHR irt laws both problems are convex and
the optimum is characterized by a single multiplier η:

* hit-rate utilities:  η = U'(μh) ζ(t) = w (μh)^(-β) ζ(t)
* hit-probability utilities:  η = U'(h) ζ(t) / μ = w h^(-β) ζ(t) / μ

with h = F(t). Both right-hand sides, written ``y(t)``, decrease in t, so
each content's timer is found by bisection in log t and η by a monotone root
search on the occupancy. Working with timers rather than hit probabilities
avoids inverting F.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import optimize

from ._roots import bisect_increasing
from .catalog import Catalog
from .errors import DomainError, InvalidInstanceError, NonConvexError, NumericalFailure
from .workload import Exponential, IrtModel

Mode = Literal["hrb", "hpb"]
MODES = ("hrb", "hpb")

_S_MIN, _S_MAX = -740.0, 700.0  # log-timer range explored by the bracket search


def _check_mode(mode: str) -> str:
    mode = mode.lower()
    if mode not in MODES:
        raise InvalidInstanceError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def _log_y(model: IrtModel, log_w, log_mu, beta: float, mode: str, t):
    """log y(t) for a batch of contents."""
    with np.errstate(divide="ignore"):
        log_f = np.log(-np.expm1(model.log_sf(t)))
    if mode == "hrb":
        return log_w - beta * (log_mu + log_f) + model.log_hazard(t)
    return log_w - beta * log_f + model.log_hazard(t) - log_mu


def _log_y_limit(model: IrtModel, log_w, log_mu, beta: float, mode: str):
    """log y at t = ∞ (hit probability one)."""
    with np.errstate(divide="ignore"):
        log_z = np.log(model.hazard_limit)
    if mode == "hrb":
        return log_w - beta * log_mu + log_z
    return log_w + log_z - log_mu


def _timers_for_group(model: IrtModel, log_w, log_mu, beta: float, mode: str, log_eta: float) -> np.ndarray:
    """Timers solving y(t) = η for every content of a batched model."""
    clamp = log_eta <= _log_y_limit(model, log_w, log_mu, beta, mode)
    phi = lambda s: log_eta - _log_y(model, log_w, log_mu, beta, mode, np.exp(s))  # increasing in s
    with np.errstate(over="ignore", invalid="ignore"):
        lo = -log_mu - 2.0
        hi = -log_mu + 2.0
        for _ in range(200):
            move = (phi(lo) > 0) & (lo > _S_MIN)
            if not np.any(move):
                break
            lo = np.where(move, np.maximum(lo - 8.0, _S_MIN), lo)
        for _ in range(200):
            move = (phi(hi) < 0) & (hi < _S_MAX) & ~clamp
            if not np.any(move):
                break
            hi = np.where(move, np.minimum(hi + 8.0, _S_MAX), hi)
        s = bisect_increasing(phi, lo, hi, iterations=64)
    return np.where(clamp, math.inf, np.exp(s))


@dataclass
class CumSolution:
    """Optimal timers and the quantities they induce.

    ``timer`` may contain ``inf`` for contents pinned in the cache.
    """

    mode: str
    eta: float
    cache_size: float
    ids: np.ndarray
    timer: np.ndarray
    hit_prob: np.ndarray
    hit_rate: np.ndarray
    occupancy: np.ndarray
    degenerate: bool = False
    method: str = "bisection"
    notes: list = field(default_factory=list)

    @property
    def total_occupancy(self) -> float:
        return math.fsum(self.occupancy)

    @property
    def clamped(self) -> np.ndarray:
        return (self.hit_prob >= 1.0) | (self.hit_prob <= 0.0)

    def objective(self, catalog: Catalog) -> float:
        """Aggregate utility of the solution under ``catalog``'s weights and β."""
        x = self.hit_rate if self.mode == "hrb" else self.hit_prob
        return aggregate_utility(x, catalog.weights, catalog.beta)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# eta={self.eta!r},B={self.cache_size!r},mode={self.mode}\n")
            writer = csv.writer(fh)
            writer.writerow(["id", "timer", "hit_prob", "hit_rate", "occupancy"])
            for row in zip(self.ids, self.timer, self.hit_prob, self.hit_rate, self.occupancy):
                writer.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])


def aggregate_utility(x, weights, beta: float) -> float:
    """Σ wᵢ U_β(xᵢ)."""
    x = np.asarray(x, dtype=float)
    weights = np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore"):
        if beta == 1:
            terms = weights * np.log(x)
        else:
            terms = weights * x ** (1.0 - beta) / (1.0 - beta)
    return math.fsum(terms)


def _prepare(catalog: Catalog, mode: str):
    mode = _check_mode(mode)
    if not catalog.beta > 0:
        raise InvalidInstanceError("the solver needs beta > 0 (strictly concave utilities)")
    if not catalog.is_dhr():
        raise NonConvexError("catalog contains a model with increasing hazard; the problem is not convex")
    return mode


def timers_for_eta(catalog: Catalog, eta: float, mode: Mode = "hrb") -> np.ndarray:
    """Per-content timers solving y(t) = η (``inf`` where h clamps to one)."""
    mode = _prepare(catalog, mode)
    if not eta > 0:
        raise DomainError("eta must be positive")
    timers = np.empty(catalog.n)
    log_eta = math.log(eta)
    log_w, log_mu = np.log(catalog.weights), np.log(catalog.rates)
    for idx, model in catalog.groups:
        timers[idx] = _timers_for_group(model, log_w[idx], log_mu[idx], catalog.beta, mode, log_eta)
    return timers


def y_inverse(model: IrtModel, weight: float, beta: float, eta: float, mode: Mode = "hrb") -> float:
    """Hit probability of one content at multiplier ``eta`` (clamped to [0, 1])."""
    catalog = Catalog.from_models([model], [weight], beta, 1.0)
    t = timers_for_eta(catalog, eta, mode)
    return float(catalog.cdf(t)[0])


def _solution(catalog: Catalog, mode: str, eta: float, timers, method: str, degenerate=False) -> CumSolution:
    h = catalog.cdf(timers)
    return CumSolution(mode=mode, eta=eta, cache_size=catalog.cache_size, ids=catalog.ids.copy(),
                       timer=np.asarray(timers, dtype=float), hit_prob=h, hit_rate=catalog.rates * h,
                       occupancy=catalog.age(timers), degenerate=degenerate, method=method)


def solve_cum(catalog: Catalog, mode: Mode = "hrb") -> CumSolution:
    """Optimal timers for the catalog's budget.

    The multiplier is located by Brent's method on log η applied to
    Σ F̂ᵢ(tᵢ(η)) - B, which is non-increasing in η.
    """
    mode = _prepare(catalog, mode)
    B = catalog.cache_size
    if B >= catalog.n:
        sol = _solution(catalog, mode, 0.0, np.full(catalog.n, math.inf), "degenerate", degenerate=True)
        sol.notes.append("budget covers the whole catalog; every content is pinned")
        return sol

    def gap(log_eta: float) -> float:
        return math.fsum(catalog.age(timers_for_eta(catalog, math.exp(log_eta), mode))) - B

    lo, hi = -1.0, 1.0
    while gap(lo) <= 0:
        lo -= 4.0
        if lo < -700:
            raise NumericalFailure("could not bracket the multiplier from below")
    while gap(hi) >= 0:
        hi += 4.0
        if hi > 700:
            raise NumericalFailure("could not bracket the multiplier from above")
    log_eta = optimize.brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    eta = math.exp(log_eta)
    return _solution(catalog, mode, eta, timers_for_eta(catalog, eta, mode), "bisection")


def stationarity_residual(catalog: Catalog, solution: CumSolution) -> np.ndarray:
    """Relative residual |y(tᵢ)/η - 1| for unclamped contents (nan for clamped)."""
    out = np.full(catalog.n, np.nan)
    log_w, log_mu = np.log(catalog.weights), np.log(catalog.rates)
    for idx, model in catalog.groups:
        t = solution.timer[idx]
        finite = np.isfinite(t) & (t > 0)
        ly = _log_y(model, log_w[idx], log_mu[idx], catalog.beta, solution.mode, np.where(finite, t, 1.0))
        out[idx] = np.where(finite, np.abs(np.expm1(ly - math.log(solution.eta))), np.nan)
    return out


# ---------------------------------------------------------------------------
# Poisson closed forms and the comparison of the two objectives
# ---------------------------------------------------------------------------


def poisson_closed_form(catalog: Catalog, mode: Mode = "hrb") -> CumSolution:
    """Closed-form optimum for an all-Poisson catalog.

    Hit-rate utilities give hᵢ ∝ wᵢ^(1/β) μᵢ^(1/β - 1) and hit-probability
    utilities hᵢ ∝ wᵢ^(1/β), both scaled so that Σ hᵢ = B. For β = 1, or
    when some hᵢ would exceed one, the numerical solver is used instead and
    the result's ``method`` says so.
    """
    mode = _check_mode(mode)
    if not all(isinstance(m, Exponential) for m in catalog.models):
        raise InvalidInstanceError("closed forms need an all-exponential catalog")
    beta = catalog.beta
    if not beta > 0:
        raise InvalidInstanceError("closed forms need beta > 0")
    if beta == 1:
        sol = solve_cum(catalog, mode)
        sol.method = "solver (beta = 1)"
        return sol
    w, mu, B = catalog.weights, catalog.rates, catalog.cache_size
    share = w ** (1.0 / beta) * (mu ** (1.0 / beta - 1.0) if mode == "hrb" else 1.0)
    h = share * B / math.fsum(share)
    if np.any(h > 1) or B >= catalog.n:
        sol = solve_cum(catalog, mode)
        sol.method = "solver (clamping active)"
        return sol
    # multiplier from any content's stationarity condition
    if mode == "hrb":
        eta = float(w[0] * (mu[0] * h[0]) ** (-beta) * mu[0])
    else:
        eta = float(w[0] * h[0] ** (-beta))
    timers = -np.log1p(-h) / mu
    return _solution(catalog, mode, eta, timers, "closed form")


def crossover_index(weights, alpha: float, beta: float) -> int:
    """Index (1-based) where hit rates of the two objectives swap order under Zipf popularity.

    i₀ = ⌊(Σⱼ wⱼ^(1/β) j^(α(1-1/β)) / Σⱼ wⱼ^(1/β))^(1/(α(1-1/β)))⌋.
    """
    if not beta > 0:
        raise InvalidInstanceError("beta must be positive")
    if beta == 1 or alpha == 0:
        raise InvalidInstanceError("crossover index is undefined when alpha (1 - 1/beta) = 0")
    w = np.asarray(weights, dtype=float) ** (1.0 / beta)
    e = alpha * (1.0 - 1.0 / beta)
    j = np.arange(1, len(w) + 1, dtype=float)
    ratio = math.fsum(w * j ** e) / math.fsum(w)
    return int(math.floor(ratio ** (1.0 / e) * (1 + 1e-14)))


@dataclass
class Comparison:
    """Hit probabilities and rates of both objectives on one catalog."""

    hrb: CumSolution
    hpb: CumSolution

    @property
    def rate_gap(self) -> np.ndarray:
        """λʳ - λᵖ per content."""
        return self.hrb.hit_rate - self.hpb.hit_rate

    def sign_change(self) -> int | None:
        """1-based index of the first content after which λʳ - λᵖ changes sign."""
        return first_sign_change(self.rate_gap)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "hit_prob_hrb", "hit_prob_hpb", "hit_rate_hrb", "hit_rate_hpb", "sign"])
            gap = self.rate_gap
            for i in range(len(gap)):
                writer.writerow([int(self.hrb.ids[i]), repr(float(self.hrb.hit_prob[i])),
                                 repr(float(self.hpb.hit_prob[i])), repr(float(self.hrb.hit_rate[i])),
                                 repr(float(self.hpb.hit_rate[i])), int(np.sign(gap[i]))])


def first_sign_change(values, tol: float = 0.0) -> int | None:
    """Number of leading entries sharing the sign of the first entry.

    Entries with magnitude at most ``tol`` are ignored. Returns ``None`` when
    no sign change occurs.
    """
    values = np.asarray(values, dtype=float)
    signs = np.sign(np.where(np.abs(values) > tol, values, 0.0))
    nz = np.flatnonzero(signs)
    if nz.size == 0:
        return None
    first = signs[nz[0]]
    flips = nz[signs[nz] != first]
    return None if flips.size == 0 else int(flips[0])


def compare_modes(catalog: Catalog) -> Comparison:
    return Comparison(solve_cum(catalog, "hrb"), solve_cum(catalog, "hpb"))

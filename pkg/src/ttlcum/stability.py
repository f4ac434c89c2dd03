"""Stability of the discrete-time multiplier recursion η ← max{0, η + γ(W/η - B)}.

For Poisson requests and log utilities the expected occupancy at multiplier η
is W/η with W = Σ wᵢ, so the recursion has the single equilibrium η* = W/B.
The dual objective (up to an additive constant) is D(η) = -W log η - W + ηB
and V(η) = D(η) - D(η*) is the candidate Lyapunov function.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from ._roots import brent
from .catalog import Catalog
from .errors import DomainError, InvalidInstanceError
from .workload import GeneralizedPareto

CONVERGED, OSCILLATING, DIVERGED = "converged", "oscillating", "diverged"


def dual_function(eta, W: float, B: float):
    """D(η) = -W log η - W + ηB."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0):
        raise DomainError("eta must be positive")
    out = -W * np.log(eta) - W + eta * B
    return float(out) if out.ndim == 0 else out


def delta_v(eta, W: float, B: float, gamma: float):
    """ΔV(η) = V(f(η)) - V(η) for the constant-step recursion."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0):
        raise DomainError("eta must be positive")
    excess = W / eta - B
    arg = 1.0 + gamma / eta * excess
    if np.any(arg <= 0):
        raise DomainError("the step would cross zero (non-positive log argument)")
    out = -W * np.log(arg) + B * gamma * excess
    return float(out) if out.ndim == 0 else out


def dual_fn_and_delta_v(eta, W: float, B: float, gamma: float):
    """Return ``(D(η), ΔV(η))``."""
    return dual_function(eta, W, B), delta_v(eta, W, B, gamma)


def poisson_threshold(W: float, B: float) -> float:
    """Largest constant step with a locally stable equilibrium: 2W/B²."""
    if not (W > 0 and B > 0):
        raise InvalidInstanceError("W and B must be positive")
    return 2.0 * W / B**2


def linear_multiplier(W: float, B: float, gamma: float) -> float:
    """f'(η*) = 1 - γB²/W."""
    return 1.0 - gamma * B**2 / W


# ---------------------------------------------------------------------------
# Pareto requests
# ---------------------------------------------------------------------------


def pareto_a_star(x, k: float, w: float):
    """A*(x) = (1-k)² x² (1-x)^(1-2k) / (w [1 - x(1-k)]), the occupancy sensitivity of one content."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (1 - k) ** 2 * x**2 * np.power(1.0 - x, 1.0 - 2.0 * k) / (w * (1.0 - x * (1.0 - k)))
    return float(out) if out.ndim == 0 else out


def pareto_a_star_max(k: float, w: float) -> tuple[float, float]:
    """Supremum of A* over (0, 1) and where it is reached.

    For k < 1/2 with k > 0 the maximum is interior. For k = 0 and k = 1/2 the
    supremum is the limit at x → 1 (1/w and 1/(2w)); for k > 1/2 it is
    unbounded.
    """
    if k > 0.5:
        return math.inf, 1.0
    grid = np.linspace(0.0, 1.0, 20001)[1:-1]
    vals = pareto_a_star(grid, k, w)
    j = int(np.argmax(vals))
    edge = (1 - k) ** 2 / (w * k) if k == 0.5 else (1.0 / w if k == 0 else 0.0)
    if j == len(grid) - 1 or edge >= vals[j]:
        return max(edge, float(vals[j])), 1.0
    res = optimize.minimize_scalar(lambda x: -pareto_a_star(x, k, w), bounds=(grid[j - 1], grid[j + 1]),
                                   method="bounded", options={"xatol": 1e-12})
    return float(-res.fun), float(res.x)


def _pareto_parts(catalog: Catalog):
    models = catalog.models
    if not all(isinstance(m, GeneralizedPareto) for m in models):
        raise InvalidInstanceError("Pareto threshold needs an all-Pareto catalog")
    return np.array([float(m.k) for m in models]), catalog.weights


def pareto_threshold(catalog: Catalog) -> float:
    """Conservative step bound 2 / (n maxᵢ supₓ A*ᵢ(x)) for Pareto requests with log utilities."""
    ks, ws = _pareto_parts(catalog)
    worst = max(pareto_a_star_max(float(k), float(w))[0] for k, w in zip(ks, ws))
    return 0.0 if math.isinf(worst) else 2.0 / (catalog.n * worst)


def pareto_equilibrium_threshold(catalog: Catalog) -> float:
    """Exact local bound 2 / Σᵢ A*ᵢ(xᵢ*) at the equilibrium hit probabilities."""
    from .solver import solve_cum

    ks, ws = _pareto_parts(catalog)
    sol = solve_cum(catalog.with_beta(1.0), "hpb")
    return 2.0 / math.fsum(pareto_a_star(x, k, w) for x, k, w in zip(sol.hit_prob, ks, ws))


def occupancy_slope_at_equilibrium(catalog: Catalog, mode: str = "hpb", rel_step: float = 1e-6) -> float:
    """d/dη Σ F̂ᵢ(tᵢ(η)) at η*, by central differences."""
    from .solver import solve_cum, timers_for_eta

    eta = solve_cum(catalog, mode).eta
    d = rel_step * eta
    up = math.fsum(catalog.age(timers_for_eta(catalog, eta + d, mode)))
    down = math.fsum(catalog.age(timers_for_eta(catalog, eta - d, mode)))
    return (up - down) / (2 * d)


def numeric_multiplier(catalog: Catalog, gamma: float, mode: str = "hpb") -> float:
    """f'(η*) = 1 + γ dΣF̂/dη for the dual recursion on an arbitrary catalog."""
    return 1.0 + gamma * occupancy_slope_at_equilibrium(catalog, mode)


def local_threshold(kind: str, *, W: float | None = None, B: float | None = None,
                    catalog: Catalog | None = None) -> float:
    """Step-size threshold for ``kind="poisson"`` (needs W, B) or ``"pareto"`` (needs a catalog)."""
    if kind == "poisson":
        return poisson_threshold(W, B)
    if kind == "pareto":
        return pareto_threshold(catalog)
    raise InvalidInstanceError(f"unknown threshold kind {kind!r}")


# ---------------------------------------------------------------------------
# state-dependent step sizes
# ---------------------------------------------------------------------------


def gamma_star_schedule(m: float) -> float:
    """Nonzero root of 1 + m(m-1)x = e^((m-1)x).

    The step γ = γ̂ W/B² with γ̂ below this root makes ΔV(η*/m) negative.
    """
    if not m > 0:
        raise DomainError("m must be positive")
    if m == 1:
        raise DomainError("m = 1 is degenerate: both sides coincide only at zero")
    a = m - 1.0
    h = lambda x: 1.0 + m * a * x - math.exp(a * x)
    lo = math.log(m) / a  # maximizer of h, where h > 0
    hi = 2.0 * lo
    while h(hi) > 0:
        hi *= 2.0
    return brent(h, lo, hi, rtol=1e-15)


def schedule_gamma(W: float, B: float, fraction: float = 0.9) -> Callable[[float], float]:
    """State-dependent step γ(η) = fraction · γ̂*_m W/B² with m = η*/η."""
    eta_star = W / B

    def gamma(eta: float) -> float:
        m = eta_star / eta
        if abs(m - 1.0) < 1e-12:
            return fraction * 2.0 * W / B**2
        return fraction * gamma_star_schedule(m) * W / B**2

    return gamma


# ---------------------------------------------------------------------------
# recursion
# ---------------------------------------------------------------------------


@dataclass
class StabilityReport:
    eta_star: float
    threshold: float
    trajectory: np.ndarray
    verdict: str
    projection_events: int = 0
    notes: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "eta"])
            for k, e in enumerate(self.trajectory):
                writer.writerow([k, repr(float(e))])

    @property
    def verdict_line(self) -> str:
        return (f"verdict={self.verdict} eta_star={self.eta_star!r} threshold={self.threshold!r} "
                f"final={float(self.trajectory[-1])!r} projections={self.projection_events}")


def classify(trajectory, eta_star: float, tol: float = 1e-8) -> str:
    """Converged if the last 100 iterates (all of a shorter run) are within
    ``tol`` of η*; diverged if the deviation grew monotonically over the last
    1000; oscillating otherwise."""
    traj = np.asarray(trajectory, dtype=float)
    if np.all(np.abs(traj[-100:] - eta_star) < tol):
        return CONVERGED
    dev = np.abs(traj[-1000:] - eta_star)
    if len(dev) >= 2 and np.all(np.diff(dev) > 0):
        return DIVERGED
    return OSCILLATING


def simulate_recursion(eta0: float, gamma, W: float, B: float, steps: int = 10_000) -> StabilityReport:
    """Iterate η ← max{0, η + γ(W/η - B)} from ``eta0``.

    ``gamma`` is a constant or a callable γ(η). If an iterate is projected to
    zero the recursion is undefined afterwards (W/0); the run stops there,
    the event is counted and the verdict is ``diverged``.
    """
    if not eta0 > 0:
        raise DomainError("eta0 must be positive")
    step = gamma if callable(gamma) else (lambda _eta, g=float(gamma): g)
    eta_star = W / B
    traj = np.empty(steps + 1)
    traj[0] = eta = float(eta0)
    projections = 0
    k = 0
    for k in range(1, steps + 1):
        eta = eta + step(eta) * (W / eta - B)
        if eta <= 0:
            eta = 0.0
            projections += 1
            traj[k] = eta
            break
        traj[k] = eta
    traj = traj[: k + 1]
    verdict = DIVERGED if projections else classify(traj, eta_star)
    report = StabilityReport(eta_star, poisson_threshold(W, B), traj, verdict, projections)
    if projections:
        report.notes.append(f"iterate projected to zero at step {k}")
    return report


def deviation_ratios(trajectory, eta_star: float) -> np.ndarray:
    """Successive ratios (η_{k+1} - η*) / (η_k - η*)."""
    dev = np.asarray(trajectory, dtype=float) - eta_star
    with np.errstate(divide="ignore", invalid="ignore"):
        return dev[1:] / dev[:-1]

"""Problem instances: contents with irt models and weights, a fairness level and a budget."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property
from importlib import resources
from typing import Any, Sequence

import numpy as np
from scipy import special

from .errors import InvalidInstanceError
from .workload import (
    Exponential,
    GeneralizedPareto,
    Hyperexponential,
    IrtModel,
    Mmpp2,
    Uniform,
    Weibull,
    stack_models,
    zipf_popularity,
)


@dataclass(frozen=True, eq=False)
class Content:
    model: IrtModel
    weight: float
    id: int


@dataclass(frozen=True, eq=False)
class Catalog:
    """A caching instance.

    Attributes
    ----------
    contents : tuple of Content
    beta : float
        Shared fairness parameter of the β-fair utilities.
    cache_size : float
        Budget B on the expected number of cached contents.
    """

    contents: tuple
    beta: float
    cache_size: float

    def __post_init__(self):
        object.__setattr__(self, "contents", tuple(self.contents))
        if not self.contents:
            raise InvalidInstanceError("catalog is empty")
        if not self.cache_size > 0:
            raise InvalidInstanceError("cache size must be positive")
        if not self.beta >= 0:
            raise InvalidInstanceError("beta must be non-negative")
        if any(not c.weight > 0 for c in self.contents):
            raise InvalidInstanceError("weights must be positive")

    @classmethod
    def from_models(cls, models: Sequence[IrtModel], weights, beta: float, cache_size: float,
                    ids: Sequence[int] | None = None) -> "Catalog":
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (len(models),))
        ids = range(1, len(models) + 1) if ids is None else ids
        return cls(tuple(Content(m, float(w), int(i)) for m, w, i in zip(models, weights, ids)), beta, cache_size)

    @property
    def n(self) -> int:
        return len(self.contents)

    @cached_property
    def models(self) -> tuple:
        return tuple(c.model for c in self.contents)

    @cached_property
    def rates(self) -> np.ndarray:
        return np.array([float(m.rate) for m in self.models])

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.contents])

    @cached_property
    def ids(self) -> np.ndarray:
        return np.array([c.id for c in self.contents])

    @cached_property
    def groups(self) -> list:
        """Models batched by family, as ``(indices, batched_model)`` pairs."""
        return stack_models(self.models)

    def is_dhr(self) -> bool:
        return all(m.is_dhr() for m in self.models)

    def with_beta(self, beta: float) -> "Catalog":
        return replace(self, beta=beta)

    def with_cache_size(self, cache_size: float) -> "Catalog":
        return replace(self, cache_size=cache_size)

    def with_weights(self, weights) -> "Catalog":
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (self.n,))
        return replace(self, contents=tuple(Content(c.model, float(w), c.id) for c, w in zip(self.contents, weights)))

    def age(self, t) -> np.ndarray:
        """Occupancy probabilities F̂ᵢ(tᵢ) for a vector of timers."""
        t = np.broadcast_to(np.asarray(t, dtype=float), (self.n,))
        out = np.empty(self.n)
        for idx, model in self.groups:
            ti = t[idx]
            finite = np.isfinite(ti)
            out[idx] = np.where(finite, model.age(np.where(finite, ti, 0.0)), 1.0)
        return out

    def cdf(self, t) -> np.ndarray:
        """Hit probabilities Fᵢ(tᵢ) for a vector of timers."""
        t = np.broadcast_to(np.asarray(t, dtype=float), (self.n,))
        out = np.empty(self.n)
        for idx, model in self.groups:
            ti = t[idx]
            finite = np.isfinite(ti)
            out[idx] = np.where(finite, model.cdf(np.where(finite, ti, 0.0)), 1.0)
        return out


# ---------------------------------------------------------------------------
# construction from configuration
# ---------------------------------------------------------------------------

WEIGHT_SCHEMES = ("rate", "inverse_rate", "unit", "random")


def scheme_weights(scheme: str, rates, seed: int | None = None) -> np.ndarray:
    """Weights derived from mean request rates.

    ``rate`` gives wᵢ = μᵢ, ``inverse_rate`` wᵢ = 1/μᵢ, ``unit`` wᵢ = 1 and
    ``random`` draws wᵢ uniformly from (0, 1] with ``seed``.
    """
    rates = np.asarray(rates, dtype=float)
    if scheme == "rate":
        return rates.copy()
    if scheme == "inverse_rate":
        return 1.0 / rates
    if scheme == "unit":
        return np.ones_like(rates)
    if scheme == "random":
        return 1.0 - np.random.default_rng(seed).random(rates.shape)
    raise InvalidInstanceError(f"unknown weight scheme {scheme!r}")


def zipf_models(n: int, alpha: float, family: str = "exponential", total_rate: float = 1.0,
                **params: Any) -> list[IrtModel]:
    """Models whose mean rates follow a Zipf law with the given total rate.

    ``family`` selects the irt law; shape parameters come from ``params``:
    ``k`` for ``pareto`` and ``weibull``. For ``hyperexponential`` and
    ``mmpp2`` the two phase rates follow their own Zipf laws with exponents
    ``alpha1`` and ``alpha2`` (``alpha`` is then unused); hyperexponentials take
    phase probabilities ``probs`` and MMPPs switching rates ``a12 * x`` and
    ``a21 * x``.
    """
    if family in ("hyperexponential", "mmpp2"):
        th1 = total_rate * zipf_popularity(n, params.get("alpha1", 0.4)).probabilities
        th2 = total_rate * zipf_popularity(n, params.get("alpha2", 0.8)).probabilities
        if family == "hyperexponential":
            probs = params.get("probs", [0.5, 0.5])
            return [Hyperexponential(probs, [a, b]) for a, b in zip(th1, th2)]
        x = params.get("x", 1e-3)
        a12, a21 = params.get("a12", 5.0), params.get("a21", 2.0)
        return [Mmpp2(a, b, a12 * x, a21 * x) for a, b in zip(th1, th2)]
    mu = total_rate * zipf_popularity(n, alpha).probabilities
    if family == "exponential":
        return [Exponential(m) for m in mu]
    if family == "pareto":
        k = params.get("k", 0.48)
        return [GeneralizedPareto(k, (1.0 - k) / m) for m in mu]
    if family == "weibull":
        k = params.get("k", 0.5)
        return [Weibull(k, 1.0 / (m * special.gamma(1.0 + 1.0 / k))) for m in mu]
    if family == "uniform":
        return [Uniform(2.0 / m) for m in mu]
    raise InvalidInstanceError(f"unknown model family {family!r}")


def zipf_catalog(n: int = 1000, alpha: float = 0.8, cache_size: float = 100.0, beta: float = 2.0,
                 family: str = "exponential", total_rate: float = 1.0, weights: str = "rate",
                 weight_seed: int | None = None, **params: Any) -> Catalog:
    models = zipf_models(n, alpha, family, total_rate, **params)
    rates = np.array([float(m.rate) for m in models])
    return Catalog.from_models(models, scheme_weights(weights, rates, weight_seed), beta, cache_size)


def _model_from_spec(spec: dict) -> IrtModel:
    kind = spec.get("model")
    params = spec.get("params", {})
    builders = {
        "exponential": lambda p: Exponential(p["mu"]),
        "pareto": lambda p: GeneralizedPareto(p["k"], p["sigma"], p.get("location", 0.0)),
        "hyperexponential": lambda p: Hyperexponential(p["probs"], p["rates"]),
        "weibull": lambda p: Weibull(p["k"], p["theta"]),
        "uniform": lambda p: Uniform(p["b"]),
        "mmpp2": lambda p: Mmpp2(p["theta1"], p["theta2"], p["r12"], p["r21"]),
    }
    if kind not in builders:
        raise InvalidInstanceError(f"unknown model {kind!r}")
    try:
        return builders[kind](params)
    except KeyError as exc:
        raise InvalidInstanceError(f"model {kind!r} is missing parameter {exc.args[0]!r}") from None


def catalog_from_config(config: dict) -> Catalog:
    """Build a catalog from a parsed configuration mapping.

    Either ``contents`` lists every content explicitly
    (``{"id", "model", "params", "weight"}``) or ``generate`` holds the
    keyword arguments of :func:`zipf_catalog` (minus ``beta`` and
    ``cache_size``, which sit at the top level).
    """
    try:
        beta = float(config["beta"])
        cache_size = float(config["cache_size"])
    except KeyError as exc:
        raise InvalidInstanceError(f"configuration is missing {exc.args[0]!r}") from None
    if "contents" in config:
        items = config["contents"]
        models = [_model_from_spec(c) for c in items]
        weights = [float(c.get("weight", 1.0)) for c in items]
        ids = [int(c.get("id", i + 1)) for i, c in enumerate(items)]
        return Catalog.from_models(models, weights, beta, cache_size, ids)
    if "generate" in config:
        return zipf_catalog(beta=beta, cache_size=cache_size, **config["generate"])
    raise InvalidInstanceError("configuration needs either 'contents' or 'generate'")


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_catalog(path) -> Catalog:
    return catalog_from_config(load_config(path))


def benchmark_config() -> dict:
    """The shipped benchmark: 1000 Poisson contents, Zipf 0.8, unit total rate, B = 100."""
    text = resources.files("ttlcum").joinpath("data/benchmark.json").read_text(encoding="utf-8")
    return json.loads(text)


def benchmark_catalog(beta: float | None = None) -> Catalog:
    catalog = catalog_from_config(benchmark_config())
    return catalog if beta is None else catalog.with_beta(beta)

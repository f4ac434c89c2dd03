"""Utility-driven reset-TTL caching.

Request models and their occupancy maps (:mod:`ttlcum.workload`), β-fair
utilities (:mod:`ttlcum.utility`), the centralized optimum
(:mod:`ttlcum.solver`), request-driven controllers
(:mod:`ttlcum.decentralized`, :mod:`ttlcum.online`), a discrete-event cache
simulator (:mod:`ttlcum.sim`), step-size stability analysis
(:mod:`ttlcum.stability`) and trace tooling (:mod:`ttlcum.trace`).
"""
from .catalog import Catalog, Content, benchmark_catalog, load_catalog, zipf_catalog
from .decentralized import DualController, PrimalController, PrimalDualController, timer_from_eta
from .errors import (
    DomainError,
    InvalidInstanceError,
    NonConvexError,
    NumericalFailure,
    SaturatedError,
    SingularError,
    TtlCumError,
)
from .online import LruDualController, OnlinePoissonController
from .sim import catalog_events, characteristic_time, simulate_replacement, simulate_ttl
from .solver import CumSolution, compare_modes, crossover_index, solve_cum
from .utility import UtilitySpec, beta_utility
from .workload import (
    INFINITE_TIMER,
    Exponential,
    GeneralizedPareto,
    Hyperexponential,
    Mmpp2,
    Uniform,
    Weibull,
)

__all__ = [
    "Catalog", "Content", "benchmark_catalog", "load_catalog", "zipf_catalog",
    "DualController", "PrimalController", "PrimalDualController", "timer_from_eta",
    "DomainError", "InvalidInstanceError", "NonConvexError", "NumericalFailure",
    "SaturatedError", "SingularError", "TtlCumError",
    "LruDualController", "OnlinePoissonController",
    "catalog_events", "characteristic_time", "simulate_replacement", "simulate_ttl",
    "CumSolution", "compare_modes", "crossover_index", "solve_cum",
    "UtilitySpec", "beta_utility",
    "INFINITE_TIMER", "Exponential", "GeneralizedPareto", "Hyperexponential", "Mmpp2", "Uniform", "Weibull",
]

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttlcum.catalog import Catalog, zipf_catalog
from ttlcum.decentralized import (
    BLogPenalty,
    DualController,
    FixedTimers,
    PowerPenalty,
    PrimalController,
    PrimalDualController,
    dual_step,
    penalized_optimum,
    primal_dual_step,
    primal_step,
    stationarity_gap,
    timer_from_eta,
)
from ttlcum.errors import DomainError, InvalidInstanceError, NonConvexError, NumericalFailure
from ttlcum.solver import solve_cum
from ttlcum.workload import (
    INFINITE_TIMER,
    Exponential,
    GeneralizedPareto,
    Hyperexponential,
    Mmpp2,
    Uniform,
    Weibull,
)

MODELS = {
    "exp": Exponential(0.7),
    "pareto": GeneralizedPareto(0.48, 0.52 / 0.3),
    "pareto0": GeneralizedPareto(0.0, 2.0),
    "weibull": Weibull(0.5, 3.0),
    "hyperexp": Hyperexponential([0.2, 0.8], [0.05, 2.0]),
    "mmpp": Mmpp2(0.05, 0.01, 5e-3, 2e-3),
}


def family_catalog(kind, n=40, cache_size=8, beta=2.0, **params):
    return zipf_catalog(n, 0.8, cache_size, beta, kind, weights="unit", **params)


class TestTimerFromEta:
    @pytest.mark.parametrize("name", MODELS)
    @pytest.mark.parametrize("mode", ["hrb", "hpb"])
    @pytest.mark.parametrize("beta", [0.8, 2.0])
    def test_matches_centralized_timer(self, name, mode, beta):
        model = MODELS[name]
        cat = Catalog.from_models([model, Exponential(1.0)], [1.3, 1.0], beta, 0.6)
        sol = solve_cum(cat, mode)
        t = timer_from_eta(model, 1.3, beta, sol.eta, mode)
        assert t == pytest.approx(sol.timer[0], rel=1e-8)
        assert abs(stationarity_gap(model, 1.3, beta, sol.eta, t, mode)) < 1e-10

    @pytest.mark.parametrize("name", MODELS)
    def test_zero_multiplier(self, name):
        assert timer_from_eta(MODELS[name], 1.0, 2.0, 0.0) == INFINITE_TIMER

    def test_clamps_at_small_multiplier(self):
        # h would exceed one: (w μ / η)^(1/β) / μ > 1
        assert timer_from_eta(Exponential(1.0), 4.0, 2.0, 1.0) == INFINITE_TIMER

    def test_poisson_closed_form(self):
        mu, w, beta, eta = 0.3, 2.0, 1.5, 40.0
        h = (w * mu / eta) ** (1 / beta) / mu
        assert timer_from_eta(Exponential(mu), w, beta, eta) == pytest.approx(-math.log1p(-h) / mu, rel=1e-14)

    def test_generic_dhr_model(self):
        model = Hyperexponential([0.5, 0.5], [1.0, 3.0])
        t = timer_from_eta(model, 1.0, 2.0, 5.0)
        assert abs(stationarity_gap(model, 1.0, 2.0, 5.0, t)) < 1e-10

    @given(eta=st.floats(1e-2, 1e4), w=st.floats(0.1, 10), beta=st.floats(0.3, 4))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_eta(self, eta, w, beta):
        for model in (MODELS["pareto"], MODELS["weibull"], MODELS["hyperexp"]):
            a = timer_from_eta(model, w, beta, eta)
            b = timer_from_eta(model, w, beta, eta * 1.5)
            assert b <= a
            if math.isfinite(a):
                assert abs(stationarity_gap(model, w, beta, eta, a)) < 1e-8

    def test_rejects(self):
        with pytest.raises(DomainError):
            timer_from_eta(Exponential(1.0), 1.0, 2.0, -1.0)
        with pytest.raises(NonConvexError):
            timer_from_eta(Uniform(1.0), 1.0, 2.0, 1.0)
        with pytest.raises(InvalidInstanceError):
            timer_from_eta(Exponential(1.0), 1.0, 0.0, 1.0)


class TestDualStep:
    def test_projection(self):
        assert dual_step(1.0, 3, 10, 0.5) == 0.0
        assert dual_step(1.0, 12, 10, 0.5) == 2.0
        with pytest.raises(DomainError):
            dual_step(1.0, 1, 1, 0.0)

    @pytest.mark.parametrize("kind", ["exponential", "pareto", "weibull", "hyperexponential"])
    def test_fixed_point(self, kind):
        # one request at the optimum leaves every timer in place
        cat = family_catalog(kind)
        sol = solve_cum(cat)
        ctl = DualController(cat, gamma=1e-3, eta0=sol.eta)
        for i in range(cat.n):
            t = ctl.on_request(i, 0.0, cat.cache_size, False)
            assert t == pytest.approx(sol.timer[i], rel=1e-10)
        assert ctl.eta == sol.eta

    def test_multiplier_counts_occupancy(self):
        cat = family_catalog("exponential")
        ctl = DualController(cat, gamma=0.1, eta0=1.0)
        ctl.on_request(0, 0.0, cat.cache_size + 5, False)
        assert ctl.eta == pytest.approx(1.5)
        ctl.on_request(0, 0.0, 0, False)
        assert ctl.eta == pytest.approx(1.5 - 0.1 * cat.cache_size)
        ctl.gamma = 1.0
        assert ctl.on_request(0, 0.0, 0, False) == INFINITE_TIMER
        assert ctl.eta == 0.0


class TestPenalties:
    def test_blog(self):
        pen = BLogPenalty(10.0)
        assert pen.value(0.0) == 0.0 and pen.derivative(0.0) == 0.0
        x = 60.0
        assert pen.value(x) == pytest.approx(x - 10 * math.log(70))
        assert pen.derivative(x) == pytest.approx(1 - 10 / 70)
        assert pen.derivative(1e9) < 1.0

    def test_power(self):
        pen = PowerPenalty(3.0, 2.0)
        assert pen.value(-1.0) == 0.0 and pen.derivative(-1.0) == 0.0
        assert pen.value(2.0) == 16.0 and pen.derivative(2.0) == 24.0
        with pytest.raises(InvalidInstanceError):
            PowerPenalty(0.5)
        with pytest.raises(InvalidInstanceError):
            PowerPenalty(2.0, 0.0)

    @given(x=st.floats(-5, 50), h=st.floats(1e-6, 1e-3))
    def test_power_derivative(self, x, h):
        pen = PowerPenalty(2.5, 3.0)
        fd = (pen.value(x + h) - pen.value(x - h)) / (2 * h)
        assert fd == pytest.approx(pen.derivative(x), rel=1e-4, abs=1e-4)

    def test_penalized_optimum(self):
        cat = family_catalog("pareto", n=20, cache_size=5, k=0.3)
        pen = PowerPenalty(2.0, 100.0)
        budget, sol = penalized_optimum(cat, pen)
        assert budget > 5
        assert sol.eta == pytest.approx(pen.derivative(budget - 5), rel=1e-10)

    def test_blog_cannot_balance(self):
        # C' < 1 while the multiplier at the budget is far larger
        cat = family_catalog("pareto", n=20, cache_size=5, k=0.3)
        with pytest.raises(NumericalFailure):
            penalized_optimum(cat, BLogPenalty(5.0))


def _fluid(cat, t0, eta0, iterations, rho, price):
    """Deterministic gradient flow with occupancy equal to its expectation."""
    m = GeneralizedPareto.stack(cat.models)
    mu, w, beta = cat.rates, cat.weights, cat.beta
    t, eta = t0.copy(), eta0
    for _ in range(iterations):
        occ = float(np.sum(m.age(t)))
        p = price(occ, eta)
        h, f, z = m.cdf(t), m.pdf(t), m.hazard(t)
        t = np.maximum(0.0, t + rho * mu * f * (w * (mu * h) ** -beta - p / z))
        eta = max(0.0, eta + (occ - cat.cache_size))
    return t, eta


@pytest.fixture(scope="module")
def setup():
    cat = family_catalog("pareto", n=20, cache_size=5, k=0.3)
    return cat, solve_cum(cat)


class TestFluidDynamics:
    def test_primal_converges_to_penalized_optimum(self, setup):
        cat, _ = setup
        pen = PowerPenalty(2.0, 100.0)
        _, target = penalized_optimum(cat, pen)
        t, _ = _fluid(cat, target.timer * 2, 0.0, 40_000, 3e-3,
                      lambda occ, eta: pen.derivative(occ - cat.cache_size))
        assert np.max(np.abs(t / target.timer - 1)) < 1e-3

    def test_primal_dual_converges_to_optimum(self, setup):
        cat, sol = setup
        t, eta = _fluid(cat, sol.timer * 2, sol.eta * 0.5, 40_000, 3e-3, lambda occ, eta: eta)
        assert np.max(np.abs(t / sol.timer - 1)) < 1e-8
        assert eta == pytest.approx(sol.eta, rel=1e-8)

    def test_fluid_matches_step_functions(self, setup):
        cat, sol = setup
        rng = np.random.default_rng(0)
        t = sol.timer * rng.uniform(0.5, 2.0, cat.n)
        m = GeneralizedPareto.stack(cat.models)
        occ = float(np.sum(m.age(t)))
        pen = PowerPenalty(2.0, 100.0)
        t_fluid, _ = _fluid(cat, t, 0.0, 1, 3e-3, lambda o, e: pen.derivative(o - cat.cache_size))
        t_step = [primal_step(ti, c.model, c.weight, cat.beta, occ, cat.cache_size, pen, 3e-3)
                  for ti, c in zip(t, cat.contents)]
        np.testing.assert_allclose(t_step, t_fluid, rtol=1e-12)

    def test_optimum_is_fixed_point(self, setup):
        cat, sol = setup
        for ti, c in zip(sol.timer, cat.contents):
            t, eta = primal_dual_step(ti, sol.eta, c.model, c.weight, cat.beta, cat.cache_size,
                                      cat.cache_size, 1.0, 3e-3)
            assert t == pytest.approx(ti, rel=1e-12) and eta == sol.eta

    def test_hpb_step_direction(self, setup):
        cat, sol = setup
        sol = solve_cum(cat, "hpb")
        c = cat.contents[3]
        up = primal_dual_step(sol.timer[3] * 0.5, sol.eta, c.model, c.weight, cat.beta, 5, 5, 1.0, 1e-3, "hpb")[0]
        down = primal_dual_step(sol.timer[3] * 2, sol.eta, c.model, c.weight, cat.beta, 5, 5, 1.0, 1e-3, "hpb")[0]
        assert up > sol.timer[3] * 0.5 and down < sol.timer[3] * 2

    def test_step_at_zero_timer_is_finite(self):
        t = primal_step(0.0, Exponential(1.0), 1.0, 2.0, 0, 5, PowerPenalty(), 1e-3)
        assert math.isfinite(t) and t >= 0


class TestControllers:
    def test_fixed_timers(self):
        ctl = FixedTimers([1.0, 2.0])
        assert ctl.on_request(1, 0.0, 0, False) == 2.0 and ctl.eta is None

    def test_primal_controller_updates_one_timer(self):
        cat = family_catalog("pareto", n=5, cache_size=2)
        ctl = PrimalController(cat, PowerPenalty(2.0, 10.0), rho=1e-2)
        before = ctl.state.timers.copy()
        ctl.on_request(2, 0.0, 1, True)
        changed = np.flatnonzero(ctl.state.timers != before)
        assert changed.tolist() == [2] and ctl.state.iteration == 1

    def test_primal_dual_controller(self):
        cat = family_catalog("pareto", n=5, cache_size=2)
        ctl = PrimalDualController(cat, gamma=0.1, rho=1e-2, eta0=1.0)
        ctl.on_request(0, 0.0, 4, False)
        assert ctl.eta == pytest.approx(1.2)


class TestWorkedExamples:
    def test_dual_step_arithmetic(self):
        assert dual_step(1.0, 110, 100, 0.1) == pytest.approx(2.0)
        assert dual_step(0.1, 0, 100, 1.0) == 0.0
        assert dual_step(3.0, 100, 100, 0.5) == 3.0

    def test_exponential_timer(self):
        assert timer_from_eta(Exponential(1.0), 1.0, 2.0, 4.0) == pytest.approx(math.log(2), rel=1e-14)

    @pytest.mark.parametrize("mode", ["hrb", "hpb"])
    def test_degenerate_families_match_exponential(self, mode):
        exp = timer_from_eta(Exponential(0.5), 1.2, 1.5, 3.0, mode)
        assert timer_from_eta(GeneralizedPareto(0.0, 2.0), 1.2, 1.5, 3.0, mode) == exp
        single = timer_from_eta(Hyperexponential([1.0], [0.5]), 1.2, 1.5, 3.0, mode)
        assert single == pytest.approx(exp, rel=1e-10)

    def test_blog_inactive_at_budget(self):
        assert BLogPenalty(100.0).value(0.0) == 0.0

    def test_timer_grows_under_budget(self):
        pen = BLogPenalty(100.0)
        t = primal_step(1.0, Exponential(1.0), 1.0, 2.0, 10, 100, pen, 1e-3)
        assert t > 1.0

    def test_zero_multiplier_start(self):
        cat = family_catalog("exponential", n=10, cache_size=3)
        ctl = PrimalDualController(cat, gamma=0.01, rho=1e-2, eta0=0.0)
        before = ctl.state.timers.copy()
        for i in range(10):
            ctl.on_request(i, 0.0, 1, False)
        assert np.all(ctl.state.timers > before)
        ctl.on_request(0, 0.0, 10, False)
        assert ctl.eta > 0

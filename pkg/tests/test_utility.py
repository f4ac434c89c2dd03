import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from ttlcum.errors import DomainError, InvalidInstanceError, SingularError
from ttlcum.utility import UtilitySpec, beta_utility, li, lru_utility


def _li_by_quad(x):
    # principal value: integrate on one side of the pole at 1 only
    if x < 1:
        val, _ = integrate.quad(lambda t: 1 / math.log(t) if t > 0 else 0.0, 0, x, limit=200)
        return val
    # li(x) = li(2) + ∫₂ˣ dt/log t with li(2) from the series form below
    val, _ = integrate.quad(lambda t: 1 / math.log(t), 2, x, limit=200)
    return 1.045163780117492784844588889194613136522615578151 + val


class TestBetaUtility:
    @pytest.mark.parametrize("beta", [0.0, 0.5, 0.8, 2.0, 3.5])
    def test_value_and_marginal(self, beta):
        spec = UtilitySpec(beta, w=2.0)
        x = 0.3
        assert spec.value(x) == pytest.approx(2.0 * x ** (1 - beta) / (1 - beta))
        d = 1e-7
        fd = (spec.value(x + d) - spec.value(x - d)) / (2 * d)
        assert spec.marginal(x) == pytest.approx(fd, rel=1e-6)

    def test_log_case(self):
        spec = UtilitySpec(1.0, w=3.0)
        assert spec.value(math.e) == pytest.approx(3.0)
        assert spec.marginal(0.5) == pytest.approx(6.0)

    @given(beta=st.floats(0.05, 8), w=st.floats(1e-3, 1e3), x=st.floats(1e-6, 1e3))
    def test_marginal_inverse_roundtrip(self, beta, w, x):
        spec = UtilitySpec(beta, w)
        assert spec.marginal_inverse(spec.marginal(x)) == pytest.approx(x, rel=1e-9)

    @given(beta=st.floats(0.05, 8), x=st.floats(1e-4, 10), y=st.floats(1e-4, 10))
    def test_concave(self, beta, x, y):
        spec = UtilitySpec(beta)
        mid = spec.value((x + y) / 2)
        assert mid >= (spec.value(x) + spec.value(y)) / 2 - 1e-9 * (1 + abs(mid))

    def test_linear_has_no_inverse(self):
        with pytest.raises(InvalidInstanceError):
            UtilitySpec(0.0).marginal_inverse(1.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            UtilitySpec(2.0).value(0.0)
        with pytest.raises(InvalidInstanceError):
            UtilitySpec(-1.0)
        with pytest.raises(InvalidInstanceError):
            UtilitySpec(1.0, w=0.0)

    def test_vector_weights(self):
        spec = UtilitySpec(2.0, w=np.array([1.0, 2.0]))
        np.testing.assert_allclose(spec.marginal(np.array([0.5, 0.5])), [4.0, 8.0])

    def test_bundle(self):
        out = beta_utility(UtilitySpec(2.0), 0.5)
        assert out.U == pytest.approx(-2.0)
        assert out.U_prime == pytest.approx(4.0)
        assert out.U_prime_inv_at(4.0) == pytest.approx(0.5)


class TestLogIntegral:
    # reference values computed with mpmath.li at 30 digits
    @pytest.mark.parametrize("x, expected", [
        (2.0, 1.0451637801174927848),
        (0.5, -0.37867104306108797672),
        (10.0, 6.1655995047872979375),
        (1e-3, -0.00012815499334587104963),
    ])
    def test_frozen_values(self, x, expected):
        assert li(x) == pytest.approx(expected, rel=1e-13)

    @pytest.mark.parametrize("x", [0.1, 0.9, 1.5, 3.0, 50.0])
    def test_against_quadrature(self, x):
        assert li(x) == pytest.approx(_li_by_quad(x), rel=1e-9)

    def test_zero_and_singularity(self):
        assert li(0.0) == 0.0
        with pytest.raises(SingularError):
            li(1.0)
        with pytest.raises(DomainError):
            li(-1.0)

    def test_lru_utility(self):
        # μ li(μ(1 - x)) at μ = 2, x = 0.75 is 2 li(0.5)
        assert lru_utility(2.0, 0.75) == pytest.approx(2 * -0.37867104306108797672, rel=1e-13)
        with pytest.raises(DomainError):
            lru_utility(1.0, 1.5)

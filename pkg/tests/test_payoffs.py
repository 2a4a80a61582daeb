import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmm_pricing.market_model import DomainError, discount_factor, table1_market_data
from fmm_pricing.payoffs import SwaptionSpec, deflated_swap_value, irs_value, relative_payoff_u0

MD = table1_market_data()
TENOR = MD.tenor
rates5 = st.lists(st.floats(0.0, 0.08), min_size=5, max_size=5).map(np.array)


class TestSpec:
    def test_defaults(self):
        s = SwaptionSpec(1, 2, 0.013)
        assert s.exercise_dates == (1,)
        assert s.is_european

    @pytest.mark.parametrize(
        "a,b,ex",
        [(2, 2, ()), (0, 2, ()), (3, 4, (2, 1, 3)), (3, 4, (1, 2)), (3, 4, (0, 3)), (3, 4, (1, 1, 3))],
    )
    def test_invalid(self, a, b, ex):
        with pytest.raises(DomainError):
            SwaptionSpec(a, b, 0.01, ex)

    def test_canary(self):
        s = SwaptionSpec(3, 4, 0.015, (1, 2, 3))
        assert not s.is_european
        assert s.with_strike(0.02).exercise_dates == (1, 2, 3)


class TestIrs:
    def test_at_par(self):
        x = np.full(5, 0.02)
        assert irs_value(x, SwaptionSpec(1, 4, 0.02), TENOR) == pytest.approx(0.0, abs=1e-18)

    def test_single_period_par(self):
        assert irs_value(MD.initial_forwards, SwaptionSpec(1, 2, 0.013), TENOR) == pytest.approx(0.0, abs=1e-18)

    def test_single_period_itm(self):
        k = 0.8 * 0.013
        expected = 0.25 * (0.013 - k) / (1 + 0.25 * 0.013)
        assert irs_value(MD.initial_forwards, SwaptionSpec(1, 2, k), TENOR) == pytest.approx(expected, rel=1e-14)
        assert expected > 0


class TestRelativePayoff:
    def test_at_strike(self):
        assert relative_payoff_u0(np.full(3, 0.013), SwaptionSpec(1, 3, 0.013), TENOR) == 0.0

    def test_far_below(self):
        assert relative_payoff_u0(np.full(3, 0.001), SwaptionSpec(1, 3, 0.013), TENOR) == 0.0

    def test_n2_deep_itm(self):
        x = np.array([0.01, 0.3])
        k = 0.013
        expected = 0.25 * (0.3 - k) / ((1 + 0.25 * 0.01) * (1 + 0.25 * 0.3))
        u = relative_payoff_u0(x, SwaptionSpec(1, 2, k), TENOR)
        assert u == pytest.approx(expected, rel=1e-14)
        assert u == pytest.approx(irs_value(x, SwaptionSpec(1, 2, k), TENOR) / discount_factor(x, 1, 0, TENOR))

    @settings(max_examples=80)
    @given(rates5, st.integers(1, 3), st.floats(0.001, 0.05))
    def test_consistency_with_irs(self, x, a, k):
        spec = SwaptionSpec(a, 5, k)
        bank = discount_factor(x, a, 0, TENOR)
        lhs = bank * relative_payoff_u0(x, spec, TENOR)
        assert lhs == pytest.approx(max(irs_value(x, spec, TENOR), 0.0), rel=1e-12, abs=1e-18)

    @settings(max_examples=80)
    @given(rates5, st.floats(0.001, 0.05), st.floats(0.001, 0.05))
    def test_nonnegative_and_monotone_in_strike(self, x, k1, k2):
        lo, hi = min(k1, k2), max(k1, k2)
        u_lo = relative_payoff_u0(x, SwaptionSpec(1, 5, lo), TENOR)
        u_hi = relative_payoff_u0(x, SwaptionSpec(1, 5, hi), TENOR)
        assert u_hi >= 0.0
        assert u_lo >= u_hi

    @settings(max_examples=80)
    @given(rates5, st.floats(0.001, 0.05))
    def test_zero_exactly_where_reduced_swap_nonpositive(self, x, k):
        tau = MD.tau
        reduced = 0.0
        disc = 1.0
        for j in range(1, 5):
            disc /= 1.0 + tau[j] * x[j]
            reduced += disc * tau[j] * (x[j] - k)
        u = relative_payoff_u0(x, SwaptionSpec(1, 5, k), TENOR)
        if reduced <= 0.0:
            assert u == 0.0
        else:
            assert u > 0.0

    def test_per_axis_input(self):
        xs = [np.array([0.01]).reshape(-1, 1), np.array([0.01, 0.02, 0.03]).reshape(1, -1)]
        out = deflated_swap_value(xs, 1, 2, 0.013, MD.tau)
        assert out.shape == (1, 3)
        dense = deflated_swap_value(np.array([[0.01, 0.02]]), 1, 2, 0.013, MD.tau)
        assert out[0, 1] == pytest.approx(dense[0])

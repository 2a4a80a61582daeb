import math

import numpy as np
import pytest

from fmm_pricing.analytics import intrinsic_value
from fmm_pricing.market_model import DomainError, atm_strike, discount_factor, gamma_all, initial_discount_curve, table1_market_data
from fmm_pricing.monte_carlo import (
    Z_95,
    CorrelationFactorError,
    MCConfig,
    correlation_factor,
    mc_expectation,
    price_swaption_mc,
    price_swaptions_mc,
    simulate_terminal_rates,
    simulation_times,
    step_log,
)
from fmm_pricing.payoffs import SwaptionSpec

MD = table1_market_data()


class TestCorrelationFactor:
    def test_identity(self):
        assert np.array_equal(correlation_factor(np.eye(3)), np.eye(3))

    def test_two_by_two(self):
        L = correlation_factor(np.array([[1.0, 0.5], [0.5, 1.0]]))
        assert np.allclose(L, [[1.0, 0.0], [0.5, math.sqrt(0.75)]], atol=1e-15)

    def test_reconstructs(self):
        L = correlation_factor(MD.correlation)
        assert np.allclose(L @ L.T, MD.correlation, atol=1e-14)
        assert np.allclose(L, np.tril(L))

    def test_semidefinite(self):
        rho = np.ones((3, 3))
        L = correlation_factor(rho)
        assert np.allclose(L @ L.T, rho, atol=1e-14)

    @pytest.mark.parametrize(
        "rho",
        [
            [[1.0, 1.5], [1.5, 1.0]],
            [[1.0, 0.2], [0.3, 1.0]],
            [[2.0, 0.0], [0.0, 1.0]],
        ],
    )
    def test_errors(self, rho):
        with pytest.raises(CorrelationFactorError):
            correlation_factor(np.array(rho))


class TestStep:
    def test_zero_vol(self):
        md = MD.with_vols(np.zeros(5))
        r = np.tile(MD.initial_forwards, (4, 1))
        out = step_log(r, 0.1, 0.01, np.random.default_rng(0).normal(size=(4, 5)), md)
        assert np.array_equal(out, r)

    def test_expired_rate_frozen(self):
        r = np.tile(MD.initial_forwards, (4, 1))
        out = step_log(r, 0.3, 0.05, np.random.default_rng(1).normal(size=(4, 5)), MD)
        assert np.array_equal(out[:, 0], r[:, 0])
        assert not np.array_equal(out[:, 1], r[:, 1])

    def test_zero_increment_hand_evaluation(self):
        t, dt = 0.1, 0.01
        x = MD.initial_forwards
        out = step_log(x[None, :], t, dt, np.zeros((1, 5)), MD)[0]
        g = gamma_all(t, MD.tenor)
        for k in range(1, 6):
            # mu_k / R_k from the drift definition, summed from index eta(t) = 1
            s = sum(
                MD.correlation[i, k - 1] * 0.25 * MD.vols[i] * g[i] * x[i] / (1 + 0.25 * x[i])
                for i in range(k)
            )
            drift = MD.vols[k - 1] * g[k - 1] * s
            expected = x[k - 1] * math.exp(drift * dt - 0.5 * (g[k - 1] * MD.vols[k - 1]) ** 2 * dt)
            assert out[k - 1] == pytest.approx(expected, rel=1e-14)

    def test_nonpositive_rate(self):
        with pytest.raises(DomainError):
            step_log(np.array([[0.01, 0.0, 0.01, 0.01, 0.01]]), 0.0, 0.01, np.zeros((1, 5)), MD)


class TestTimeGrid:
    def test_contains_tenor_dates(self):
        times = simulation_times(MD, 0.75, 7)
        for d in (0.0, 0.25, 0.5, 0.75):
            assert np.any(times == d)
        assert np.all(np.diff(times) > 0)

    def test_snapping(self):
        times = simulation_times(MD, 0.75, 3)
        assert np.array_equal(times, [0.0, 0.25, 0.5, 0.75])


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(num_paths=1), dict(num_steps=0), dict(num_paths=11, antithetic=True)])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            MCConfig(**kw)


class TestPricing:
    def test_zero_vol_is_intrinsic(self):
        md = MD.with_vols(np.zeros(5))
        spec = SwaptionSpec(1, 3, 0.9 * atm_strike(MD, 1, 3))
        est = price_swaption_mc(spec, md, MCConfig(num_paths=64, num_steps=5))
        assert est.mean == pytest.approx(intrinsic_value(spec, md), rel=1e-13)
        assert est.half_width == pytest.approx(0.0, abs=1e-18)

    def test_far_otm(self):
        spec = SwaptionSpec(1, 2, 100 * 0.013)
        assert price_swaption_mc(spec, MD, MCConfig(num_paths=5000, num_steps=10)).mean == 0.0

    def test_bermudan_rejected(self):
        with pytest.raises(DomainError):
            price_swaption_mc(SwaptionSpec(3, 4, 0.015, (1, 2, 3)), MD, MCConfig(num_paths=10))

    def test_mixed_expiries_rejected(self):
        with pytest.raises(DomainError):
            price_swaptions_mc([SwaptionSpec(1, 2, 0.01), SwaptionSpec(2, 3, 0.01)], MD, MCConfig(num_paths=10))

    def test_ci_invariant(self):
        est = price_swaption_mc(SwaptionSpec(1, 2, 0.013), MD.truncated(2), MCConfig(num_paths=4000, num_steps=10))
        assert est.half_width == pytest.approx(Z_95 * est.std_error, rel=1e-15)
        assert est.half_width >= 0.0
        assert est.contains(est.mean)

    def test_ladder_matches_single(self):
        md = MD.truncated(2)
        cfg = MCConfig(num_paths=3000, num_steps=8, block_size=1024)
        specs = [SwaptionSpec(1, 2, k) for k in (0.012, 0.013, 0.014)]
        ladder = price_swaptions_mc(specs, md, cfg)
        # column sums differ from a single-column sum only by summation order
        assert ladder[1].mean == pytest.approx(price_swaption_mc(specs[1], md, cfg).mean, rel=1e-13)
        assert ladder[0].mean > ladder[1].mean > ladder[2].mean

    def test_ci_shrinkage(self):
        md = MD.truncated(2)
        spec = SwaptionSpec(1, 2, 0.013)
        small = price_swaption_mc(spec, md, MCConfig(num_paths=20000, num_steps=10, seed=3))
        large = price_swaption_mc(spec, md, MCConfig(num_paths=80000, num_steps=10, seed=3))
        assert small.half_width / large.half_width == pytest.approx(2.0, rel=0.1)

    def test_antithetic(self):
        md = MD.truncated(2)
        spec = SwaptionSpec(1, 2, 0.013)
        est = price_swaption_mc(spec, md, MCConfig(num_paths=20000, num_steps=10, antithetic=True, block_size=4096))
        ref = 0.25 / (1.0025 * 1.00325)  # P(0,T_2) tau_2 times the Black value
        from fmm_pricing.analytics import black_call

        exact = ref * black_call(0.013, 0.013, 0.15 * 0.5)
        assert abs(est.mean - exact) < 4 * est.std_error


class TestDeterminism:
    def test_workers_and_blocks(self):
        spec = SwaptionSpec(1, 3, 0.0135)
        base = dict(num_paths=5000, num_steps=6, seed=11, block_size=1000)
        one = price_swaption_mc(spec, MD, MCConfig(**base))
        again = price_swaption_mc(spec, MD, MCConfig(**base))
        many = price_swaption_mc(spec, MD, MCConfig(**base, workers=3))
        assert one == again == many

    def test_block_paths_fixed(self):
        cfg = MCConfig(num_paths=3000, num_steps=4, seed=5, block_size=1000)
        r1 = simulate_terminal_rates(MD, 0.5, cfg, block=1)
        r2 = simulate_terminal_rates(MD, 0.5, MCConfig(num_paths=5000, num_steps=4, seed=5, block_size=1000), block=1)
        assert np.array_equal(r1, r2)

    def test_seed_changes_paths(self):
        cfg = MCConfig(num_paths=100, num_steps=4, seed=5, block_size=100)
        other = MCConfig(num_paths=100, num_steps=4, seed=6, block_size=100)
        assert not np.array_equal(simulate_terminal_rates(MD, 0.5, cfg), simulate_terminal_rates(MD, 0.5, other))


class TestMartingale:
    @pytest.mark.parametrize("a", [1, 3])
    def test_deflated_bonds(self, a):
        p0 = initial_discount_curve(MD)
        tenor = MD.tenor

        def payoff(r):
            bank = discount_factor(r, a, 0, tenor)
            return np.stack([discount_factor(r, a, k, tenor) / bank for k in range(1, 6)], axis=1)

        est = mc_expectation(MD, tenor.dates[a], payoff, MCConfig(num_paths=100_000, num_steps=20, seed=7))
        for k, e in enumerate(est, 1):
            assert abs(e.mean - p0[k]) <= 3 * e.std_error, (k, e)

    def test_fixings_freeze(self):
        cfg = MCConfig(num_paths=200, num_steps=10, seed=2, block_size=200)
        # paths are identical up to T_1, and R_1 cannot move after it fixes
        at_t1 = simulate_terminal_rates(MD, 0.25, MCConfig(num_paths=200, num_steps=5, seed=2, block_size=200))
        later = simulate_terminal_rates(MD, 0.5, cfg)
        assert np.allclose(at_t1[:, 0], later[:, 0], rtol=1e-13, atol=0.0)

"""Martingale kernel, conditional closed forms, benchmark, full pipeline."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from swarchpricer import (ContractSpec, InferenceConfig, MixtureDensity,
                          ModelParams, NumericError, PricingConfig,
                          bs_implied_vol, bs_price, conditional_call_price,
                          conditional_delta, effective_volatility,
                          martingale_kernel, price_option)
from swarchpricer.model import simulate_return_paths
from swarchpricer.pricing import (NoImpliedVolError, bs_delta,
                                  expected_conditional_price, prepare_pricing,
                                  price_bounds, price_with_components)

from oracles import quadrature_call_1step, quadrature_call_2step


def base_params(**kw):
    defaults = dict(d=0.25, nu=0.02, alpha=5.0, beta=0.008, m=8, mu=0.0002,
                    r=0.0003)
    defaults.update(kw)
    return ModelParams(**defaults)


class TestMartingaleKernel:
    def test_normalizes(self):
        params = base_params()
        val, _ = quad(lambda x: martingale_kernel(x, 0.02, 3, params),
                      -1.5, 1.5, limit=400)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_discounted_growth_is_riskless(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            params = base_params(mu=float(rng.uniform(-0.01, 0.01)),
                                 r=float(rng.uniform(0.0, 0.01)))
            sigma = float(rng.uniform(0.003, 0.3))
            i_state = int(rng.integers(1, 60))
            sd = sigma * 3  # generous integration range around the mean
            mean = params.gamma - 0.5 * sd * sd
            val, _ = quad(lambda x: math.exp(params.mu + x)
                          * martingale_kernel(x, sigma, i_state, params),
                          mean - 14 * sd, mean + 14 * sd, limit=400)
            assert val == pytest.approx(1.0 + params.r, rel=1e-10)

    def test_zero_drift_offset(self):
        # mu = ln(1+r) makes the kernel mean exactly -(sigma a)^2/2
        r = 0.004
        params = base_params(mu=math.log(1 + r), r=r, d=0.5)
        sd = 0.05
        mean, _ = quad(lambda x: x * martingale_kernel(x, sd, 1, params),
                       -2, 2, limit=400)
        assert mean == pytest.approx(-0.5 * sd * sd, abs=1e-12)

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(ValueError):
            martingale_kernel(0.0, 0.0, 1, base_params())


class TestEffectiveVolatility:
    def test_flat_coefficients(self):
        assert effective_volatility(0.02, [1, 2, 3, 4], 0.5) == \
            pytest.approx(0.02 * 2.0, rel=1e-12)

    def test_single_step(self):
        from swarchpricer import a_coefficient
        assert effective_volatility(0.02, [7], 0.3) == \
            pytest.approx(0.02 * a_coefficient(7, 0.3), rel=1e-12)

    def test_two_step_value(self):
        # 0.01 * sqrt(1 + (2^0.5 - 1)) frozen from direct arithmetic
        got = effective_volatility(0.01, [1, 2], 0.25)
        assert got == pytest.approx(0.011892071150027211, rel=1e-10)


class TestConditionalClosedForm:
    def test_atm_single_step_against_quadrature(self):
        params = base_params(d=0.5, r=0.0, mu=0.0)
        contract = ContractSpec(strike=100.0, t0=5, maturity=5, s_prev=100.0)
        closed = conditional_call_price(contract, 0.2, [1], params)
        oracle = quadrature_call_1step(contract, 0.2, 1, params)
        assert closed == pytest.approx(oracle, rel=1e-9)
        # 100*(N(0.1) - N(-0.1)), frozen from the quadrature oracle
        assert closed == pytest.approx(7.9655674554058965, rel=1e-9)

    def test_two_step_against_quadrature(self):
        rng = np.random.default_rng(12)
        for _ in range(3):
            params = base_params(mu=float(rng.uniform(-0.001, 0.001)),
                                 r=float(rng.uniform(0.0, 0.001)))
            sigma = float(rng.uniform(0.005, 0.05))
            i1 = int(rng.integers(1, 20))
            states = (i1, i1 + 1)
            contract = ContractSpec(strike=float(rng.uniform(95, 105)),
                                    t0=3, maturity=4, s_prev=100.0)
            closed = conditional_call_price(contract, sigma, states, params)
            oracle = quadrature_call_2step(contract, sigma, states, params)
            assert closed == pytest.approx(oracle, rel=1e-6)

    def test_vanishing_strike_forwards_the_stock(self):
        params = base_params()
        contract = ContractSpec(strike=1e-9, t0=2, maturity=6, s_prev=100.0)
        price = conditional_call_price(contract, 0.01, [1, 2, 3, 4, 5], params)
        assert price == pytest.approx((1 + params.r) * 100.0, rel=1e-9)

    def test_zero_volatility_limit(self):
        params = base_params(r=0.001)
        contract = ContractSpec(strike=90.0, t0=2, maturity=4, s_prev=100.0)
        got = conditional_call_price(contract, 0.0, [1, 2, 3], params)
        expected = (1 + params.r) * (100.0 - 90.0 * (1 + params.r) ** -3)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_strike_and_bounds(self):
        params = base_params()
        states = [1, 2, 3, 4, 5]
        prices = []
        for k in np.linspace(60, 140, 17):
            contract = ContractSpec(strike=float(k), t0=2, maturity=6,
                                    s_prev=100.0)
            p = conditional_call_price(contract, 0.02, states, params)
            lo, hi = price_bounds(contract, params.r)
            assert lo <= p <= hi
            prices.append(p)
        assert np.all(np.diff(prices) < 0)

    def test_wrong_state_count_rejected(self):
        params = base_params()
        contract = ContractSpec(strike=100.0, t0=2, maturity=6, s_prev=100.0)
        with pytest.raises(ValueError):
            conditional_call_price(contract, 0.02, [1, 2], params)


class TestConditionalDelta:
    def test_vanishing_strike(self):
        params = base_params()
        contract = ContractSpec(strike=1e-9, t0=2, maturity=4, s_prev=100.0)
        assert conditional_delta(contract, 0.01, [1, 2, 3], params) == \
            pytest.approx(1 + params.r, rel=1e-12)

    def test_deep_out_of_the_money(self):
        params = base_params()
        contract = ContractSpec(strike=500.0, t0=2, maturity=4, s_prev=100.0)
        assert conditional_delta(contract, 0.005, [1, 2, 3], params) < 1e-12

    def test_matches_finite_difference_of_price(self):
        params = base_params()
        states = [2, 3, 4]
        k, sig = 101.0, 0.025
        h = 1e-4
        up = ContractSpec(strike=k, t0=2, maturity=4, s_prev=100.0 + h)
        dn = ContractSpec(strike=k, t0=2, maturity=4, s_prev=100.0 - h)
        mid = ContractSpec(strike=k, t0=2, maturity=4, s_prev=100.0)
        fd = (conditional_call_price(up, sig, states, params)
              - conditional_call_price(dn, sig, states, params)) / (2 * h)
        delta = conditional_delta(mid, sig, states, params)
        assert fd == pytest.approx(delta, rel=1e-6)

    def test_range(self):
        params = base_params()
        for k in (70.0, 100.0, 130.0):
            contract = ContractSpec(strike=k, t0=2, maturity=6, s_prev=100.0)
            d = conditional_delta(contract, 0.02, [1, 2, 3, 4, 5], params)
            assert 0.0 <= d <= 1 + params.r


class TestBlackScholesBenchmark:
    def test_implied_vol_roundtrip(self):
        contract = ContractSpec(strike=105.0, t0=1, maturity=21, s_prev=100.0)
        for sigma in (0.005, 0.02, 0.08):
            price = bs_price(contract, sigma, 0.0002)
            back = bs_implied_vol(contract, price, 0.0002)
            assert back == pytest.approx(sigma, rel=1e-6)

    def test_intrinsic_price_has_no_vol(self):
        contract = ContractSpec(strike=90.0, t0=1, maturity=5, s_prev=100.0)
        r = 0.0005
        lo, _ = price_bounds(contract, r)
        with pytest.raises(NoImpliedVolError):
            bs_implied_vol(contract, lo, r)
        with pytest.raises(NoImpliedVolError):
            bs_implied_vol(contract, (1 + r) * 100.0, r)

    def test_atm_small_vol_expansion(self):
        # C ~ S * sigma_agg * phi(0) for small aggregate volatility
        contract = ContractSpec(strike=100.0, t0=3, maturity=3, s_prev=100.0)
        for st in (0.005, 0.02, 0.05):
            price = bs_price(contract, st, 0.0)
            approx = 100.0 * st / math.sqrt(2 * math.pi)
            assert price == pytest.approx(approx, rel=0.01)

    def test_delta_matches_conditional_form(self):
        contract = ContractSpec(strike=101.0, t0=1, maturity=4, s_prev=100.0)
        params = base_params(d=0.5, r=0.0004)
        assert bs_delta(contract, 0.01, 0.0004) == pytest.approx(
            conditional_delta(contract, 0.01, [1, 2, 3, 4], params), rel=1e-12)

    def test_price_is_conditional_form_with_flat_coefficients(self):
        contract = ContractSpec(strike=103.0, t0=1, maturity=5, s_prev=100.0)
        params = base_params(d=0.5, r=0.0004)
        assert bs_price(contract, 0.015, 0.0004) == pytest.approx(
            conditional_call_price(contract, 0.015, [1, 2, 3, 4, 5], params),
            rel=1e-14)


class TestMixtureIntegration:
    def test_two_point_mixture_is_exact_average(self):
        params = base_params(d=0.3)
        contract = ContractSpec(strike=100.0, t0=2, maturity=5, s_prev=100.0)
        states = [1, 2, 3, 4]
        mix = MixtureDensity(shape=None, scales=np.array([0.01, 0.03]),
                             weights=np.array([0.5, 0.5]))
        got = expected_conditional_price(contract, mix, states, params)
        avg = 0.5 * (conditional_call_price(contract, 0.01, states, params)
                     + conditional_call_price(contract, 0.03, states, params))
        assert got == avg  # exact, no sampling involved


class TestFullPipeline:
    def _history(self, params, n=80, seed=21):
        return simulate_return_paths(params, n, 1, seed)[0]

    def test_degenerate_configuration_equals_benchmark(self):
        params = base_params(d=0.5)
        hist = self._history(params)
        cfg = PricingConfig(inference=InferenceConfig(tau=3, n_mc=4),
                            fixed_sigma=0.012)
        for k in (80.0, 100.0, 120.0):
            for n in (1, 5, 21):
                contract = ContractSpec(strike=k, t0=80, maturity=79 + n,
                                        s_prev=100.0)
                res = price_option(contract, hist, params, cfg, 7)
                assert res.price == pytest.approx(
                    bs_price(contract, 0.012, params.r), abs=1e-10)

    def test_degenerate_full_machinery_agrees(self):
        # same check without the d = 1/2 shortcut: run the staged pricer
        params = base_params(d=0.5)
        hist = self._history(params)
        cfg = PricingConfig(inference=InferenceConfig(tau=3, n_mc=3),
                            n_real=5, n_sigma=8, fixed_sigma=0.012)
        comps = prepare_pricing(hist, 80, params, cfg, 3, max_horizon=4)
        contract = ContractSpec(strike=102.0, t0=80, maturity=84, s_prev=100.0)
        res = price_with_components(contract, comps)
        assert res.price == pytest.approx(bs_price(contract, 0.012, params.r),
                                          abs=1e-10)

    def test_price_within_bounds_across_strikes(self):
        params = base_params()
        hist = self._history(params)
        cfg = PricingConfig(inference=InferenceConfig(tau=3, n_mc=5),
                            n_real=20, n_sigma=64)
        comps = prepare_pricing(hist, 80, params, cfg, 11, max_horizon=4)
        prices = []
        for k in (80.0, 95.0, 100.0, 105.0, 125.0):
            contract = ContractSpec(strike=k, t0=80, maturity=84,
                                    s_prev=100.0)
            res = price_with_components(contract, comps)
            lo, hi = price_bounds(contract, params.r)
            assert lo <= res.price <= hi
            assert 0.0 <= res.delta <= 1 + params.r
            prices.append(res.price)
        assert np.all(np.diff(prices) < 0)

    def test_continuity_in_restart_probability(self):
        params = base_params(d=0.3)
        hist = self._history(params)
        contract = ContractSpec(strike=100.0, t0=80, maturity=84,
                                s_prev=100.0)
        cfg = PricingConfig(inference=InferenceConfig(tau=3, n_mc=3),
                            fixed_sigma=0.012)
        eps = 1e-7
        prices = []
        for nu in (0.4, 0.4 + eps):
            res = price_option(contract, hist, params.replace(nu=nu), cfg, 5)
            prices.append(res.price)
        assert abs(prices[1] - prices[0]) < 1e-5 * prices[0]

    def test_truncation_order_bound(self):
        # moving from 2 to 3 allowed restarts changes the price by less
        # than a relative nu
        hist_params = base_params(d=0.3, nu=0.01)
        hist = self._history(hist_params)
        contract = ContractSpec(strike=100.0, t0=80, maturity=84,
                                s_prev=100.0)
        for nu in (1e-3, 1e-2):
            params = hist_params.replace(nu=nu)
            res = {}
            for mr in (2, 3):
                cfg = PricingConfig(inference=InferenceConfig(tau=3, n_mc=4),
                                    n_real=20, n_sigma=64, max_restarts=mr)
                res[mr] = price_option(contract, hist, params, cfg, 13).price
            assert abs(res[2] - res[3]) / res[3] < nu

    def test_all_restart_mass_zero_raises(self):
        params = base_params(nu=1.0, d=0.3)
        hist = np.full(80, 0.004)
        contract = ContractSpec(strike=100.0, t0=80, maturity=84,
                                s_prev=100.0)
        cfg = PricingConfig(inference=InferenceConfig(tau=3, n_mc=2),
                            n_real=4, n_sigma=8)
        with pytest.raises(NumericError):
            price_option(contract, hist, params, cfg, 1)

    def test_deterministic_given_seed(self):
        params = base_params()
        hist = self._history(params)
        contract = ContractSpec(strike=100.0, t0=80, maturity=83,
                                s_prev=100.0)
        cfg = PricingConfig(inference=InferenceConfig(tau=3, n_mc=4),
                            n_real=10, n_sigma=32)
        a = price_option(contract, hist, params, cfg, 3)
        b = price_option(contract, hist, params, cfg, 3)
        assert a.price == b.price and a.delta == b.delta

    def test_result_diagnostics(self):
        params = base_params()
        hist = self._history(params)
        contract = ContractSpec(strike=100.0, t0=80, maturity=84,
                                s_prev=100.0)
        cfg = PricingConfig(inference=InferenceConfig(tau=3, n_mc=4),
                            n_real=10, n_sigma=32)
        res = price_option(contract, hist, params, cfg, 3)
        assert res.n_mc == 4
        assert res.n_scenarios == 1 + 5 + 10
        stats = res.sigma_tilde_stats
        assert stats["q05"] <= stats["q50"] <= stats["q95"]
        assert stats["mean"] > 0

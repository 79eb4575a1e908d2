"""Local-window posterior over past states and future scenario enumeration."""

import math
from collections import Counter

import numpy as np
import pytest
from scipy.integrate import dblquad

from swarchpricer import (InferenceConfig, ModelParams,
                          enumerate_future_scenarios,
                          joint_state_return_density,
                          marginal_return_density, sample_past_restarts)
from swarchpricer.model import (a_coefficient, phi_density,
                                restart_initial_law, simulate_return_paths)
from swarchpricer.restarts import (exact_past_posterior, scenario_states,
                                   scenario_normalization)


def toy_params(**kw):
    defaults = dict(d=0.25, nu=0.1, alpha=5.0, beta=0.01, m=6)
    defaults.update(kw)
    return ModelParams(**defaults)


class TestJointStateReturnDensity:
    def test_half_exponent_factorizes(self):
        # with a = 1 the joint splits into chain probability times the
        # endogenous density of the raw window
        params = toy_params(d=0.5)
        x = np.array([0.01, -0.02, 0.005])
        i_max = 400
        val = joint_state_return_density(x, [3, 4, 5], 0, params, i_max)
        chain = (restart_initial_law(3, params.nu)
                 * (1 - params.nu) ** 2)
        assert val == pytest.approx(
            chain * phi_density(x, params.alpha, params.beta), rel=1e-12)

    def test_unpinned_marginal_matches_truncated_mass(self):
        params = toy_params(d=0.5)
        x = np.array([0.01, -0.02])
        i_max = 200
        val = marginal_return_density(x, params, i_max)
        tail = (1 - params.nu) ** i_max
        assert val == pytest.approx(
            phi_density(x, params.alpha, params.beta) * (1 - tail), rel=1e-9)

    def test_marginal_integrates_to_one(self):
        # sum over strings then integrate over the two returns
        params = toy_params(nu=0.2)
        val, err = dblquad(
            lambda y2, y1: marginal_return_density([y1, y2], params, 60),
            -0.3, 0.3, -0.3, 0.3, epsabs=1e-9)
        assert val == pytest.approx(1.0, abs=1e-4)

    def test_monotone_in_truncation(self):
        params = toy_params()
        x = np.array([0.02, 0.01, -0.015])
        vals = [joint_state_return_density(x, [2], 1, params, i_max)
                for i_max in (10, 20, 40, 80, 160)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        # stable once past the geometric tail
        assert vals[-1] == pytest.approx(vals[-2], rel=1e-8)

    def test_window_longer_than_memory_rejected(self):
        params = toy_params(m=2)
        with pytest.raises(ValueError):
            marginal_return_density(np.zeros(4), params, 20)

    def test_block_outside_window_rejected(self):
        params = toy_params()
        with pytest.raises(ValueError):
            joint_state_return_density(np.zeros(3), [1, 2], 2, params, 20)


class TestPastSampler:
    def test_certain_restart_pins_all_states(self):
        params = toy_params(nu=1.0, m=4)
        x = np.full(20, 0.005)
        cfg = InferenceConfig(tau=2, n_mc=5, i_max=8)
        paths = sample_past_restarts(x, 20, params, cfg, 3)
        for p in paths:
            assert np.all(p.states == 1)

    def test_insufficient_history_rejected(self):
        params = toy_params(m=6)
        cfg = InferenceConfig(tau=3, n_mc=2, i_max=20)
        with pytest.raises(ValueError):
            sample_past_restarts(np.zeros(8), 8, params, cfg, 0)

    def test_quiet_history_modal_string_has_no_restart(self):
        # constant small returns with rare restarts: the dominant strings
        # carry no recent restart (pure ascending)
        params = toy_params(nu=0.01, d=0.25, m=6)
        x = np.full(30, 0.004)
        cfg = InferenceConfig(tau=3, n_mc=1, i_max=40)
        post = exact_past_posterior(x, 30, params, cfg)
        modal = max(post, key=post.get)
        assert all(b == a + 1 for a, b in zip(modal, modal[1:]))
        paths = sample_past_restarts(x, 30, params, cfg, 7, n_samples=400)
        freq = Counter(tuple(int(s) for s in p.states) for p in paths)
        sampled_modal = max(freq, key=freq.get)
        assert all(b == a + 1 for a, b in
                   zip(sampled_modal, sampled_modal[1:]))

    def test_sampled_frequencies_match_enumeration(self):
        params = ModelParams(d=0.2, nu=0.15, alpha=6.0, beta=0.012, m=6)
        x = np.full(30, 0.004)
        x[24:30] = [0.08, 0.030, 0.020, 0.015, 0.012, 0.011]
        cfg = InferenceConfig(tau=3, n_mc=1, i_max=50)
        post = exact_past_posterior(x, 30, params, cfg)
        assert sum(post.values()) == pytest.approx(1.0, abs=1e-9)
        n = 2000
        paths = sample_past_restarts(x, 30, params, cfg, 3, n_samples=n)
        freq = Counter(tuple(int(s) for s in p.states) for p in paths)
        tv = 0.5 * sum(abs(freq.get(k, 0) / n - v) for k, v in post.items())
        tv += 0.5 * sum(freq[k] / n for k in freq if k not in post)
        assert tv < 0.05

    def test_weights_are_sampled_factor_products(self):
        params = toy_params(m=4, nu=0.2)
        x = simulate_return_paths(params, 24, 1, 5)[0]
        cfg = InferenceConfig(tau=2, n_mc=1, i_max=30)
        post = exact_past_posterior(x, 24, params, cfg)
        paths = sample_past_restarts(x, 24, params, cfg, 11, n_samples=50)
        for p in paths:
            key = tuple(int(s) for s in p.states)
            assert p.weight == pytest.approx(post[key], rel=1e-9)

    def test_determinism(self):
        params = toy_params(m=4)
        x = simulate_return_paths(params, 24, 1, 5)[0]
        cfg = InferenceConfig(tau=2, n_mc=4, i_max=30)
        a = sample_past_restarts(x, 24, params, cfg, 9)
        b = sample_past_restarts(x, 24, params, cfg, 9)
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa.states, pb.states)
            assert pa.weight == pb.weight


class TestBruteForceEnumeration:
    """Independent nested-loop oracle for the window marginals."""

    @staticmethod
    def _brute_marginal(x, pinned, offset, params, i_max):
        # enumerate every support-consistent string directly from the
        # chain laws and the joint density definition
        from itertools import product

        ell = len(x)
        total = 0.0
        frontier = [((i,), restart_initial_law(i, params.nu))
                    for i in range(1, i_max + 1)]
        for _ in range(ell - 1):
            nxt = []
            for states, prob in frontier:
                prev = states[-1]
                nxt.append((states + (1,), prob * params.nu))
                nxt.append((states + (prev + 1,), prob * (1 - params.nu)))
            frontier = nxt
        for states, prob in frontier:
            if any(states[offset + k] != v for k, v in enumerate(pinned)):
                continue
            a = a_coefficient(np.asarray(states), params.d)
            total += (prob / np.prod(a)
                      * phi_density(np.asarray(x) / a, params.alpha,
                                    params.beta))
        return total

    def test_marginal_matches_brute_force(self):
        params = toy_params(m=4, nu=0.2)
        x = np.array([0.012, -0.02, 0.006])
        i_max = 40
        for pinned, offset in [((), 0), ((2,), 1), ((1, 2), 1), ((3, 4, 5), 0)]:
            got = joint_state_return_density(x, pinned, offset, params, i_max)
            ref = self._brute_marginal(x, pinned, offset, params, i_max)
            assert got == pytest.approx(ref, rel=1e-12)

    def test_sampler_factors_are_marginal_ratios(self):
        # the restart/increment odds used by the sampler equal the ratio
        # of pinned-window marginals computed through the public density
        params = toy_params(m=4, nu=0.2)
        x = simulate_return_paths(params, 30, 1, 3)[0]
        t0, tau = 30, 2
        cfg = InferenceConfig(tau=tau, n_mc=1, i_max=20)
        post = exact_past_posterior(x, t0, params, cfg)
        i_enum = cfg.resolved_i_max(params) + params.m

        # reconstruct the probability of one string from public marginals
        target = max(post, key=post.get)
        t_first = t0 - params.m
        w = x[t_first - tau: t_first + tau + 1]
        num = joint_state_return_density(w, (target[0],), tau, params, i_enum)
        den = joint_state_return_density(w, (), 0, params, i_enum)
        prob = num / den
        for t in range(t_first + 1, t0):
            w_lo, w_hi = t - tau, min(t + tau, t0 - 1)
            window = x[w_lo: w_hi + 1]
            b_lo = max(t - tau, t_first)
            block = tuple(target[bt - t_first] for bt in range(b_lo, t))
            prev = target[t - 1 - t_first]
            n_keep = joint_state_return_density(
                window, block + (prev + 1,), b_lo - w_lo, params, i_enum)
            n_restart = joint_state_return_density(
                window, block + (1,), b_lo - w_lo, params, i_enum)
            chosen = n_restart if target[t - t_first] == 1 else n_keep
            prob *= chosen / (n_keep + n_restart)
        assert prob == pytest.approx(post[target], rel=1e-9)


class TestConfigAndTypes:
    def test_default_truncation_formula(self):
        # m + tau + geometric tail bound, capped at 10 (m + tau)
        cfg = InferenceConfig(tau=3)
        tiny_nu = toy_params(nu=0.0002, m=21)
        assert cfg.resolved_i_max(tiny_nu) == 10 * (21 + 3)
        mid_nu = toy_params(nu=0.5, m=21)
        expected = 21 + 3 + math.ceil(math.log(1e-12) / math.log(0.5))
        assert cfg.resolved_i_max(mid_nu) == expected

    def test_explicit_i_max_validated(self):
        cfg = InferenceConfig(tau=3, i_max=5)
        with pytest.raises(ValueError):
            cfg.resolved_i_max(toy_params(m=21))

    def test_marginal_stable_when_default_truncation_doubles(self):
        params = toy_params(nu=0.05)
        cfg = InferenceConfig(tau=3)
        default = cfg.resolved_i_max(params)
        x = np.array([0.02, 0.01, -0.015])
        a = joint_state_return_density(x, [2], 1, params, default)
        b = joint_state_return_density(x, [2], 1, params, 2 * default)
        assert abs(b / a - 1.0) < 1e-8

    def test_near_deterministic_increments(self):
        from swarchpricer.model import simulate_state_paths
        params = toy_params(nu=1e-9)
        states = simulate_state_paths(params, 6, 3, 2)
        assert np.all(np.diff(states, axis=1) == 1)

    def test_restart_path_support_validation(self):
        from swarchpricer import RestartPath
        RestartPath(t_start=0, t_end=3, states=[5, 6, 1, 2])
        with pytest.raises(ValueError):
            RestartPath(t_start=0, t_end=3, states=[5, 6, 2, 3])
        with pytest.raises(ValueError):
            RestartPath(t_start=0, t_end=2, states=[1, 2, 0])
        with pytest.raises(ValueError):
            RestartPath(t_start=0, t_end=1, states=[1, 2], weight=1.5)


class TestFutureScenarios:
    def test_normalization_three_steps(self):
        # 0.125 + 0.375 + 0.375 = 0.875 = 1 - nu^3
        scen, a_norm = enumerate_future_scenarios(4, 10, 12, 0.5)
        assert a_norm == pytest.approx(0.875, abs=1e-15)
        assert a_norm == pytest.approx(1 - 0.5 ** 3, abs=1e-15)

    def test_single_step_exhausts_mass(self):
        scen, a_norm = enumerate_future_scenarios(3, 5, 5, 0.3)
        assert len(scen) == 2
        assert a_norm == pytest.approx(1.0, abs=1e-15)

    def test_scenario_count_five_steps(self):
        scen, _ = enumerate_future_scenarios(1, 0, 4, 0.1)
        assert len(scen) == 1 + 5 + 10

    def test_weights_normalize(self):
        for nu in (0.01, 0.3):
            for n in (1, 2, 6):
                scen, a_norm = enumerate_future_scenarios(2, 0, n - 1, nu)
                total = sum(s.weight for s in scen)
                assert total / a_norm == pytest.approx(1.0, abs=1e-14)

    def test_states_follow_support(self):
        scen, _ = enumerate_future_scenarios(5, 3, 8, 0.2)
        for s in scen:
            prev = 5
            for k, state in enumerate(s.states):
                assert state in (1, prev + 1)
                prev = state

    def test_third_order_option(self):
        scen, a_norm = enumerate_future_scenarios(1, 0, 4, 0.1,
                                                  max_restarts=3)
        assert len(scen) == 1 + 5 + 10 + 10
        assert a_norm == pytest.approx(scenario_normalization(0.1, 5, 3))

    def test_restart_times_generate_states(self):
        states = scenario_states(3, 5, (1, 3))
        np.testing.assert_array_equal(states, [4, 1, 2, 1, 2])

    def test_invalid_horizon_rejected(self):
        with pytest.raises(ValueError):
            enumerate_future_scenarios(1, 5, 4, 0.1)

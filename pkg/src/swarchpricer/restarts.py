"""Posterior sampling of past restart states and enumeration of future
restart scenarios.

The exact posterior of the state string given the whole return history is
intractable, so past states are drawn factor by factor from a local-window
approximation: each factor is a ratio of marginals of the joint
state/return density over a window of at most 2*tau+1 returns.  Those
marginals are computed by exhaustively enumerating every admissible chain
path on the window (initial state up to i_max, restart pattern over the
remaining steps), which is exact up to the geometric truncation.

Future states from the pricing day to maturity are enumerated explicitly
with at most ``max_restarts`` restarts, together with the normalization
mass of the retained scenarios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from .model import a_table
from .params import (FutureRestartScenario, InferenceConfig, ModelParams,
                     RestartPath)
from .rng import child_rng

__all__ = [
    "joint_state_return_density",
    "marginal_return_density",
    "sample_past_restarts",
    "enumerate_future_scenarios",
    "scenario_states",
    "scenario_normalization",
]


# ---------------------------------------------------------------------------
# Exhaustive chain paths on a window
# ---------------------------------------------------------------------------

@lru_cache(maxsize=128)
def _chain_path_table(window_len: int, i_max: int):
    """All admissible state paths of the given length.

    Paths are indexed by the initial state i0 in 1..i_max and the restart
    pattern over the window_len-1 transitions.  Returns (states, i0,
    n_restarts) with states of shape (i_max * 2^(window_len-1), window_len).
    """
    n_trans = window_len - 1
    n_patterns = 1 << n_trans
    i0 = np.arange(1, i_max + 1, dtype=np.int64)
    blocks = []
    meta_restarts = []
    for pattern in range(n_patterns):
        bits = [(pattern >> k) & 1 for k in range(n_trans)]
        states = np.empty((i_max, window_len), dtype=np.int64)
        states[:, 0] = i0
        running = None  # steps since most recent restart, None before any
        for p in range(1, window_len):
            if bits[p - 1]:
                states[:, p] = 1
                running = 0
            elif running is None:
                states[:, p] = i0 + p
            else:
                running += 1
                states[:, p] = running + 1
        blocks.append(states)
        meta_restarts.append(sum(bits))
    all_states = np.concatenate(blocks, axis=0)
    all_i0 = np.tile(i0, n_patterns)
    all_restarts = np.repeat(np.asarray(meta_restarts, dtype=np.int64), i_max)
    all_states.setflags(write=False)
    return all_states, all_i0, all_restarts


def _chain_log_prob(i0: np.ndarray, n_restarts: np.ndarray, window_len: int,
                    nu: float) -> np.ndarray:
    """Log probability of each path: stationary start plus transitions."""
    n_trans = window_len - 1
    log_nu = math.log(nu)
    out = np.full(i0.shape, log_nu) + n_restarts * log_nu
    geo = i0 - 1 + (n_trans - n_restarts)
    if nu < 1.0:
        out += geo * math.log1p(-nu)
    else:
        out[geo > 0] = -np.inf
    return out


class _WindowTable:
    """Path states and unnormalized log weights for one return window."""

    __slots__ = ("states", "log_weight")

    def __init__(self, x_window: np.ndarray, params: ModelParams, i_max: int):
        x = np.asarray(x_window, dtype=float)
        ell = x.size
        if ell > params.m + 1:
            raise ValueError(
                f"window of {ell} returns exceeds m + 1 = {params.m + 1}; "
                "the single-block joint density only covers that range")
        states, i0, n_restarts = _chain_path_table(ell, i_max)
        a_vals = a_table(i_max + ell + 1, params.d)
        a_paths = a_vals[states - 1]
        quad = params.beta ** 2 + np.sum((x / a_paths) ** 2, axis=1)
        alpha = params.alpha
        const = (alpha * math.log(params.beta)
                 + gammaln((alpha + ell) / 2.0)
                 - 0.5 * ell * math.log(math.pi) - gammaln(alpha / 2.0))
        self.states = states
        self.log_weight = (_chain_log_prob(i0, n_restarts, ell, params.nu)
                           - np.sum(np.log(a_paths), axis=1)
                           + const - 0.5 * (alpha + ell) * np.log(quad))

    def marginal(self, positions: Sequence[int], values: Sequence[int]) -> float:
        """Sum of path densities with the given states pinned (log scale
        internally, exact linear value returned)."""
        mask = np.ones(self.states.shape[0], dtype=bool)
        for pos, val in zip(positions, values):
            mask &= self.states[:, pos] == val
        lw = self.log_weight[mask]
        if lw.size == 0:
            return 0.0
        top = np.max(lw)
        if not np.isfinite(top):
            return 0.0
        return float(np.exp(top) * np.sum(np.exp(lw - top)))

    def scaled_weights(self) -> np.ndarray:
        """Linear weights scaled by a common factor, for ratio work."""
        top = np.max(self.log_weight)
        if not np.isfinite(top):
            return np.where(np.isfinite(self.log_weight), 1.0, 0.0)
        return np.exp(self.log_weight - top)


def joint_state_return_density(x_window, states: Sequence[int], offset: int,
                               params: ModelParams, i_max: int) -> float:
    """Marginal joint density of a return window and a pinned block of
    consecutive states starting at ``offset`` within the window.

    All states outside the block are summed out, truncating the infinite
    state space at i_max.  An empty block gives the marginal density of
    the returns alone.
    """
    x = np.asarray(x_window, dtype=float)
    states = list(states)
    if offset < 0 or offset + len(states) > x.size:
        raise ValueError("pinned block must lie inside the window")
    table = _WindowTable(x, params, i_max)
    return table.marginal(range(offset, offset + len(states)), states)


def marginal_return_density(x_window, params: ModelParams, i_max: int) -> float:
    """Marginal density of a return window with all states summed out."""
    return joint_state_return_density(x_window, (), 0, params, i_max)


# ---------------------------------------------------------------------------
# Sequential sampling of the past states
# ---------------------------------------------------------------------------

@dataclass
class _Factor:
    """One conditional factor of the local-window posterior."""

    w_lo: int                      # absolute time of the window start
    table: _WindowTable
    weights: np.ndarray            # scaled linear weights of the paths
    block_times: Tuple[int, ...]   # absolute times of conditioning states
    t: int                         # time of the state this factor samples


def _build_factors(history: np.ndarray, t0: int, params: ModelParams,
                   cfg: InferenceConfig) -> List[_Factor]:
    m, tau = params.m, cfg.tau
    if t0 > history.size:
        raise ValueError("t0 must lie within the supplied history")
    if t0 - m - tau < 0:
        raise ValueError(
            f"history must cover [t0 - m - tau, t0 - 1]; need {m + tau} "
            f"returns before t0, have {t0}")
    # Enumerate initial window states up to i_max + m so that every block
    # of previously sampled states (which grow by one per step) still
    # matches paths in later windows.
    i_enum = cfg.resolved_i_max(params) + m
    factors: List[_Factor] = []
    t_first = t0 - m
    w_lo, w_hi = t_first - tau, t_first + tau
    table = _WindowTable(history[w_lo:w_hi + 1], params, i_enum)
    factors.append(_Factor(w_lo, table, table.scaled_weights(), (), t_first))
    for t in range(t_first + 1, t0):
        w_lo, w_hi = t - tau, min(t + tau, t0 - 1)
        table = _WindowTable(history[w_lo:w_hi + 1], params, i_enum)
        block = tuple(range(max(t - tau, t_first), t))
        factors.append(_Factor(w_lo, table, table.scaled_weights(), block, t))
    return factors


def sample_past_restarts(history, t0: int, params: ModelParams,
                         cfg: InferenceConfig, rng_seed,
                         n_samples: int | None = None) -> List[RestartPath]:
    """Draw state strings over [t0 - m, t0 - 1] from the local posterior.

    The first state is drawn from its window marginal; each subsequent
    state is a restart/increment choice whose odds come from the ratio of
    pinned-block marginals on the sliding window.  Each returned path
    records the product of its sampled factor probabilities as weight.

    Parameters
    ----------
    history : array
        Returns indexed by time step; element t is the return of step t.
        Must cover [t0 - m - tau, t0 - 1].
    t0 : int
        Pricing step; only history before t0 is used.
    """
    history = np.asarray(history, dtype=float)
    n_samples = cfg.n_mc if n_samples is None else n_samples
    factors = _build_factors(history, t0, params, cfg)
    i_enum = cfg.resolved_i_max(params) + params.m
    m = params.m
    t_first = t0 - m

    first = factors[0]
    center = t_first - first.w_lo
    probs = np.bincount(first.table.states[:, center], weights=first.weights,
                        minlength=i_enum + 2 * cfg.tau + 2)
    support = np.nonzero(probs > 0)[0]
    if support.size == 0:
        raise ValueError("posterior for the first state has no mass; "
                         "check i_max and the history window")
    p_first = probs[support] / probs[support].sum()

    paths: List[RestartPath] = []
    for k in range(n_samples):
        rng = child_rng(_seed_int(rng_seed), 10, k)
        states = np.empty(m, dtype=np.int64)
        idx = rng.choice(support.size, p=p_first)
        states[0] = support[idx]
        weight = float(p_first[idx])
        for fac in factors[1:]:
            pos = fac.t - fac.w_lo
            block_pos = [bt - fac.w_lo for bt in fac.block_times]
            block_val = [states[bt - t_first] for bt in fac.block_times]
            mask = np.ones(fac.weights.size, dtype=bool)
            for p, v in zip(block_pos, block_val):
                mask &= fac.table.states[:, p] == v
            col = fac.table.states[:, pos]
            prev = states[fac.t - 1 - t_first]
            s_restart = float(fac.weights[mask & (col == 1)].sum())
            s_keep = float(fac.weights[mask & (col == prev + 1)].sum())
            total = s_restart + s_keep
            if total <= 0.0:
                # conditioning block fell outside the truncated path set;
                # fall back to the prior chain odds
                p_restart = params.nu
            else:
                p_restart = s_restart / total
            if rng.random() < p_restart:
                states[fac.t - t_first] = 1
                weight *= p_restart
            else:
                states[fac.t - t_first] = prev + 1
                weight *= 1.0 - p_restart
        paths.append(RestartPath(t_start=t_first, t_end=t0 - 1, states=states,
                                 weight=weight))
    return paths


def exact_past_posterior(history, t0: int, params: ModelParams,
                         cfg: InferenceConfig) -> dict:
    """Exhaustively enumerate the law targeted by ``sample_past_restarts``.

    Returns a dict mapping state tuples to probabilities.  Intended for
    small m and i_max; used to validate the sampler.
    """
    history = np.asarray(history, dtype=float)
    factors = _build_factors(history, t0, params, cfg)
    i_enum = cfg.resolved_i_max(params) + params.m
    m = params.m
    t_first = t0 - m

    first = factors[0]
    center = t_first - first.w_lo
    probs = np.bincount(first.table.states[:, center], weights=first.weights,
                        minlength=i_enum + 2 * cfg.tau + 2)
    support = np.nonzero(probs > 0)[0]
    norm = probs[support].sum()
    frontier = {(int(i),): probs[i] / norm for i in support}

    for fac in factors[1:]:
        pos = fac.t - fac.w_lo
        block_pos = [bt - fac.w_lo for bt in fac.block_times]
        nxt: dict = {}
        for prefix, p_prefix in frontier.items():
            block_val = [prefix[bt - t_first] for bt in fac.block_times]
            mask = np.ones(fac.weights.size, dtype=bool)
            for p, v in zip(block_pos, block_val):
                mask &= fac.table.states[:, p] == v
            col = fac.table.states[:, pos]
            prev = prefix[fac.t - 1 - t_first]
            s_restart = float(fac.weights[mask & (col == 1)].sum())
            s_keep = float(fac.weights[mask & (col == prev + 1)].sum())
            total = s_restart + s_keep
            p_restart = params.nu if total <= 0 else s_restart / total
            if p_restart > 0:
                nxt[prefix + (1,)] = nxt.get(prefix + (1,), 0.0) + p_prefix * p_restart
            if p_restart < 1:
                key = prefix + (prev + 1,)
                nxt[key] = nxt.get(key, 0.0) + p_prefix * (1.0 - p_restart)
        frontier = nxt
    return frontier


def _seed_int(rng_seed) -> int:
    if isinstance(rng_seed, (int, np.integer)):
        return int(rng_seed)
    raise TypeError("rng_seed must be an integer for reproducible splitting")


# ---------------------------------------------------------------------------
# Future scenarios
# ---------------------------------------------------------------------------

def scenario_states(i_prev: int, n_steps: int,
                    restart_times: Sequence[int]) -> np.ndarray:
    """State string over n_steps implied by restarts at the given offsets
    (0-based offsets from the first future step), starting from i_prev."""
    states = np.empty(n_steps, dtype=np.int64)
    current = i_prev
    restarts = set(int(t) for t in restart_times)
    for k in range(n_steps):
        current = 1 if k in restarts else current + 1
        states[k] = current
    return states


def scenario_normalization(nu: float, n_steps: int, max_restarts: int = 2) -> float:
    """Total chain mass of strings with at most max_restarts restarts."""
    total = 0.0
    for k in range(min(max_restarts, n_steps) + 1):
        total += math.comb(n_steps, k) * nu ** k * (1.0 - nu) ** (n_steps - k)
    return total


def enumerate_future_scenarios(i_prev: int, t0: int, maturity: int, nu: float,
                               max_restarts: int = 2
                               ) -> Tuple[List[FutureRestartScenario], float]:
    """Enumerate future state strings over [t0, maturity] with at most
    ``max_restarts`` restarts, plus the normalization mass A.

    Exactly 1 + n + n(n-1)/2 scenarios are produced for the default of
    two restarts, n being the number of steps.  Weights are the chain
    prefactors nu^k (1-nu)^(n-k); dividing by A makes them sum to one.
    """
    if maturity < t0:
        raise ValueError("maturity must be >= t0")
    if i_prev < 1:
        raise ValueError("i_prev must be >= 1")
    n = maturity - t0 + 1
    scenarios: List[FutureRestartScenario] = []
    for k in range(min(max_restarts, n) + 1):
        weight = nu ** k * (1.0 - nu) ** (n - k)
        for combo in combinations(range(n), k):
            scenarios.append(FutureRestartScenario(
                order=k,
                restart_times=tuple(t0 + c for c in combo),
                states=scenario_states(i_prev, n, combo),
                weight=weight))
    a_norm = scenario_normalization(nu, n, max_restarts)
    return scenarios, a_norm

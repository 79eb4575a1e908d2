"""Martingale pricing of European calls under the switching model.

Conditionally on a volatility level and a future state string, discounted
prices are martingales under a Gaussian kernel whose mean is tied to its
variance, and the call price has a Black-Scholes-like closed form driven
by the aggregate volatility sigma * sqrt(sum of squared switching
coefficients).  The full pricer averages that closed form over sampled
past state strings, enumerated future restart scenarios, and the
volatility mixture built from each combination.

The discrete-time Black-Scholes price is the degenerate case (point-mass
volatility, switching off) and is exposed directly together with its
implied-volatility inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .mixture import conditional_scale_matrix, simulate_conditional_y
from .model import a_coefficient
from .params import (ContractSpec, ModelParams, NumericError, PriceResult,
                     PricingConfig, RestartPath)
from .restarts import enumerate_future_scenarios, sample_past_restarts
from .rng import child_rng

__all__ = [
    "martingale_kernel",
    "effective_volatility",
    "conditional_call_price",
    "conditional_delta",
    "bs_price",
    "bs_delta",
    "bs_implied_vol",
    "NoImpliedVolError",
    "PricingComponents",
    "prepare_pricing",
    "price_with_components",
    "price_option",
    "price_bounds",
]


class NoImpliedVolError(NumericError):
    """Market price outside the no-arbitrage band; no implied volatility."""


# ---------------------------------------------------------------------------
# Conditional closed forms
# ---------------------------------------------------------------------------

def martingale_kernel(x, sigma: float, i_state: int, params: ModelParams):
    """Transition density of one return under the pricing measure.

    Gaussian in x with standard deviation sigma * a(i) and mean
    gamma - (sigma * a(i))^2 / 2 where gamma = ln(1+r) - mu; this makes
    the discounted asset price a martingale.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    sd = sigma * a_coefficient(i_state, params.d)
    mean = params.gamma - 0.5 * sd * sd
    x_arr = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * ((x_arr - mean) / sd) ** 2) / (math.sqrt(2 * math.pi) * sd)
    return float(out) if np.isscalar(x) else out


def effective_volatility(sigma, states: Sequence[int], d: float):
    """Aggregate volatility sigma * sqrt(sum a(i_t)^2) over the horizon."""
    a2 = a_coefficient(np.asarray(states), d) ** 2
    return sigma * math.sqrt(float(np.sum(a2)))


def _call_closed_form(s_prev: float, strike: float, n_steps: int, r: float,
                      sigma_tilde):
    """Call price given the aggregate volatility (vectorized)."""
    growth = 1.0 + r
    disc = growth ** (-n_steps)
    lead = math.log(s_prev / strike) + n_steps * math.log1p(r)
    st = np.asarray(sigma_tilde, dtype=float)
    intrinsic = growth * max(s_prev - strike * disc, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_plus = lead / st + 0.5 * st
        d_minus = lead / st - 0.5 * st
        price = growth * (s_prev * ndtr(d_plus) - strike * disc * ndtr(d_minus))
    out = np.where(st > 0, price, intrinsic)
    return float(out) if np.isscalar(sigma_tilde) else out


def _delta_closed_form(s_prev: float, strike: float, n_steps: int, r: float,
                       sigma_tilde):
    growth = 1.0 + r
    lead = math.log(s_prev / strike) + n_steps * math.log1p(r)
    st = np.asarray(sigma_tilde, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_plus = lead / st + 0.5 * st
        delta = growth * ndtr(d_plus)
    limit = growth if lead > 0 else (0.5 * growth if lead == 0 else 0.0)
    out = np.where(st > 0, delta, limit)
    return float(out) if np.isscalar(sigma_tilde) else out


def conditional_call_price(contract: ContractSpec, sigma, states,
                           params: ModelParams):
    """Call price conditional on the volatility level and future states."""
    states = np.asarray(states)
    if states.size != contract.n_steps:
        raise ValueError("states must cover every step from t0 to maturity")
    st = np.asarray(sigma, dtype=float) * math.sqrt(
        float(np.sum(a_coefficient(states, params.d) ** 2)))
    out = _call_closed_form(contract.s_prev, contract.strike,
                            contract.n_steps, params.r, st)
    return float(out) if np.isscalar(sigma) else out


def conditional_delta(contract: ContractSpec, sigma, states,
                      params: ModelParams):
    """Hedge ratio (1+r) N(d+) conditional on volatility and states."""
    states = np.asarray(states)
    if states.size != contract.n_steps:
        raise ValueError("states must cover every step from t0 to maturity")
    st = np.asarray(sigma, dtype=float) * math.sqrt(
        float(np.sum(a_coefficient(states, params.d) ** 2)))
    out = _delta_closed_form(contract.s_prev, contract.strike,
                             contract.n_steps, params.r, st)
    return float(out) if np.isscalar(sigma) else out


def expected_conditional_price(contract: ContractSpec, mixture,
                               states, params: ModelParams,
                               n_sigma: int = 512, rng=None) -> float:
    """Average the conditional closed form over a volatility mixture.

    The price is linear in the mixture, so a discrete point-mass mixture
    integrates exactly as the weighted sum over its atoms; continuous
    mixtures are averaged over ``n_sigma`` draws.
    """
    if mixture.is_point_mass:
        prices = conditional_call_price(contract, mixture.scales, states,
                                        params)
        return float(np.sum(mixture.weights * prices))
    from .rng import as_rng

    sigma = mixture.sample_sigma(n_sigma, as_rng(rng))
    return float(np.mean(conditional_call_price(contract, sigma, states,
                                                params)))


def price_bounds(contract: ContractSpec, r: float) -> tuple[float, float]:
    """No-arbitrage band for the call price under the pricing measure."""
    growth = 1.0 + r
    disc = growth ** (-contract.n_steps)
    lower = growth * max(contract.s_prev - contract.strike * disc, 0.0)
    return lower, growth * contract.s_prev


# ---------------------------------------------------------------------------
# Black-Scholes benchmark
# ---------------------------------------------------------------------------

def bs_price(contract: ContractSpec, sigma_bs: float, r: float) -> float:
    """Discrete-time Black-Scholes price: point-mass volatility, a = 1."""
    if sigma_bs < 0:
        raise ValueError("sigma_bs must be >= 0")
    st = sigma_bs * math.sqrt(contract.n_steps)
    return float(_call_closed_form(contract.s_prev, contract.strike,
                                   contract.n_steps, r, st))


def bs_delta(contract: ContractSpec, sigma_bs: float, r: float) -> float:
    st = sigma_bs * math.sqrt(contract.n_steps)
    return float(_delta_closed_form(contract.s_prev, contract.strike,
                                    contract.n_steps, r, st))


def bs_implied_vol(contract: ContractSpec, market_price: float, r: float,
                   price_tol: float = 1e-8) -> float:
    """Per-step volatility whose Black-Scholes price matches the quote.

    Raises NoImpliedVolError when the quote sits outside the open
    no-arbitrage band (including exactly at the intrinsic-value floor).
    """
    lower, upper = price_bounds(contract, r)
    if market_price <= lower + price_tol or market_price >= upper - price_tol:
        raise NoImpliedVolError(
            f"price {market_price} outside invertible band ({lower}, {upper})")

    def objective(sig: float) -> float:
        return bs_price(contract, sig, r) - market_price

    hi = 1.0
    while objective(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise NoImpliedVolError("no volatility reaches the quoted price")
    sol = brentq(objective, 1e-12, hi, xtol=1e-14, rtol=8.9e-16)
    if abs(bs_price(contract, sol, r) - market_price) > price_tol:
        raise NoImpliedVolError("inversion did not reach price tolerance")
    return float(sol)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

@dataclass
class PricingComponents:
    """Strike-independent ingredients shared by all contracts at one t0.

    Holds the sampled past state strings, the de-modulated endogenous
    history per sample, and the posterior scale matrix along simulated
    futures (realizations x horizon+1).
    """

    params: ModelParams
    cfg: PricingConfig
    t0: int
    seed: int
    max_horizon: int
    past: List[RestartPath]
    y_hist: List[np.ndarray]
    scales: List[np.ndarray]


def prepare_pricing(history, t0: int, params: ModelParams, cfg: PricingConfig,
                    rng_seed: int, max_horizon: int) -> PricingComponents:
    """Run the strike-independent pricing stages once.

    ``max_horizon`` is the largest maturity - t0 that will be priced from
    these components.
    """
    history = np.asarray(history, dtype=float)
    past = sample_past_restarts(history, t0, params, cfg.inference, rng_seed)
    x_window = history[t0 - params.m:t0]
    y_hist, scales = [], []
    for n_idx, path in enumerate(past):
        a_past = a_coefficient(path.states, params.d)
        y = x_window / a_past
        fut = simulate_conditional_y(y, max_horizon, params, cfg.n_real,
                                     child_rng(rng_seed, 30, n_idx))
        y_hist.append(y)
        scales.append(conditional_scale_matrix(y, fut, params))
    return PricingComponents(params=params, cfg=cfg, t0=t0, seed=rng_seed,
                             max_horizon=max_horizon, past=past,
                             y_hist=y_hist, scales=scales)


def scenario_mixture(comps: PricingComponents, n_idx: int,
                     states: np.ndarray):
    """Volatility mixture of one (past sample, future states) pair.

    Atoms are the posterior scales along the prepared simulated futures,
    weighted by the squared switching coefficients of the scenario; the
    same object the staged pricer integrates against.
    """
    from .mixture import MixtureDensity

    states = np.asarray(states)
    n_steps = states.size
    scales = comps.scales[n_idx][:, :n_steps]
    a2 = a_coefficient(states, comps.params.d) ** 2
    w = (a2 / a2.sum())[None, :] / scales.shape[0]
    return MixtureDensity(shape=comps.params.alpha + comps.params.m,
                          scales=scales.ravel(),
                          weights=np.broadcast_to(w, scales.shape).ravel())


def _row_searchsorted(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = np.empty(u.shape, dtype=np.int64)
    for s in range(cdf.shape[0]):
        out[s] = np.searchsorted(cdf[s], u[s], side="right")
    return np.minimum(out, cdf.shape[1] - 1)


def _weighted_quantiles(values: np.ndarray, weights: np.ndarray,
                        qs: Sequence[float]) -> List[float]:
    order = np.argsort(values)
    v, w = values[order], weights[order]
    cum = np.cumsum(w)
    cum /= cum[-1]
    return [float(np.interp(q, cum, v)) for q in qs]


def price_with_components(contract: ContractSpec,
                          comps: PricingComponents) -> PriceResult:
    """Price one contract from prepared components.

    Implements the staged evaluation: for every sampled past string,
    enumerate the restricted future scenarios, integrate the conditional
    closed form over the volatility mixture of each scenario, and combine
    with the restart-order weights normalized by the retained mass.
    """
    params, cfg = comps.params, comps.cfg
    if contract.t0 != comps.t0:
        raise ValueError("contract t0 differs from the prepared components")
    n_steps = contract.n_steps
    if n_steps - 1 > comps.max_horizon:
        raise ValueError("contract maturity exceeds the prepared horizon")

    n_mc = len(comps.past)
    shape = params.alpha + params.m
    price_acc = 0.0
    delta_acc = 0.0
    a_norm = None
    n_scen = 0
    st_values: List[np.ndarray] = []
    st_weights: List[np.ndarray] = []

    for n_idx, path in enumerate(comps.past):
        i_prev = path.state_at(comps.t0 - 1)
        scenarios, a_norm = enumerate_future_scenarios(
            i_prev, contract.t0, contract.maturity, params.nu,
            cfg.max_restarts)
        if a_norm <= 0.0:
            raise NumericError(
                "retained restart scenarios carry zero mass; increase "
                "max_restarts or lower nu")
        n_scen = len(scenarios)
        scales_n = comps.scales[n_idx][:, :n_steps]
        for order in range(cfg.max_restarts + 1):
            batch = [sc for sc in scenarios if sc.order == order]
            if not batch:
                continue
            states = np.stack([sc.states for sc in batch])
            omega = batch[0].weight
            a2 = a_coefficient(states, params.d) ** 2
            sum_a2 = a2.sum(axis=1)
            root = np.sqrt(sum_a2)
            if cfg.fixed_sigma is not None:
                st = cfg.fixed_sigma * root
                c_scen = _call_closed_form(contract.s_prev, contract.strike,
                                           n_steps, params.r, st)
                d_scen = _delta_closed_form(contract.s_prev, contract.strike,
                                            n_steps, params.r, st)
                st_draws = st[:, None]
            else:
                rng = child_rng(comps.seed, 20, n_idx, order)
                n_sig = cfg.n_sigma
                cdf = np.cumsum(a2, axis=1) / sum_a2[:, None]
                t_idx = _row_searchsorted(cdf, rng.random((len(batch), n_sig)))
                r_idx = rng.integers(0, cfg.n_real, size=(len(batch), n_sig))
                g = rng.gamma(shape / 2.0, size=(len(batch), n_sig))
                sigma = scales_n[r_idx, t_idx] / np.sqrt(2.0 * g)
                st_draws = sigma * root[:, None]
                c_mat = _call_closed_form(contract.s_prev, contract.strike,
                                          n_steps, params.r, st_draws)
                d_mat = _delta_closed_form(contract.s_prev, contract.strike,
                                           n_steps, params.r, st_draws)
                c_scen = c_mat.mean(axis=1)
                d_scen = d_mat.mean(axis=1)
            price_acc += omega * float(np.sum(c_scen))
            delta_acc += omega * float(np.sum(d_scen))
            keep = min(8, st_draws.shape[1])
            st_values.append(st_draws[:, :keep].ravel())
            st_weights.append(np.full(st_draws[:, :keep].size,
                                      omega / keep))

    norm = a_norm * n_mc
    values = np.concatenate(st_values)
    weights = np.concatenate(st_weights)
    q05, q50, q95 = _weighted_quantiles(values, weights, (0.05, 0.5, 0.95))
    stats = {
        "mean": float(np.sum(values * weights) / np.sum(weights)),
        "q05": q05, "q50": q50, "q95": q95,
    }
    return PriceResult(price=price_acc / norm, delta=delta_acc / norm,
                       sigma_tilde_stats=stats, n_scenarios=n_scen,
                       n_mc=n_mc)


def price_option(contract: ContractSpec, history, params: ModelParams,
                 cfg: Optional[PricingConfig] = None,
                 rng_seed: int = 0) -> PriceResult:
    """Full pricing pipeline for one contract.

    Stages: (i) sample past state strings from the local posterior;
    (ii) enumerate future scenarios with at most ``cfg.max_restarts``
    restarts; (iii) build the volatility mixture per sample; (iv) average
    the conditional closed form over each mixture; (v) combine across
    scenarios and samples with normalized restart-order weights.

    With ``cfg.fixed_sigma`` set and d = 1/2 the result equals the
    discrete Black-Scholes price, and the state machinery is skipped
    because every scenario then yields the identical aggregate
    volatility.
    """
    cfg = cfg or PricingConfig()
    if cfg.fixed_sigma is not None and params.d == 0.5:
        n = contract.n_steps
        st = cfg.fixed_sigma * math.sqrt(n)
        price = _call_closed_form(contract.s_prev, contract.strike, n,
                                  params.r, st)
        delta = _delta_closed_form(contract.s_prev, contract.strike, n,
                                   params.r, st)
        n_scen = sum(math.comb(n, k) for k in range(min(cfg.max_restarts, n) + 1))
        stats = {"mean": st, "q05": st, "q50": st, "q95": st}
        return PriceResult(price=float(price), delta=float(delta),
                           sigma_tilde_stats=stats, n_scenarios=n_scen,
                           n_mc=cfg.inference.n_mc)
    comps = prepare_pricing(history, contract.t0, params, cfg, rng_seed,
                            max_horizon=contract.n_steps - 1)
    return price_with_components(contract, comps)

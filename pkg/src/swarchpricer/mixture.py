"""Construction of the single-volatility mixing density used for pricing.

Conditionally on m past endogenous values, the volatility of the next
step is inverse-gamma shaped with shape alpha + m and scale
sqrt(beta^2 + sum of squared lags) (the Bayes update of the prior by m
Gaussian observations).  The pricing mixture is the a^2-weighted average
of those conditional densities over the steps from the pricing day to
maturity, with the densities at future steps propagated by simulating
the endogenous component forward.  The mixture is carried exactly as a
weighted collection of (shape, scale) atoms; curves on a sigma grid are
derived only for reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .model import a_coefficient, sample_next_y
from .params import ModelParams, RestartPath
from .rng import as_rng

__all__ = [
    "MixtureDensity",
    "volatility_prior_density",
    "conditional_sigma_density",
    "bayes_sigma_scale",
    "simulate_conditional_y",
    "propagate_sigma_posterior",
    "build_sigma_mixture",
    "conditional_scale_matrix",
]


def log_volatility_density(sigma, shape: float, scale):
    """Log density of sigma when sigma^2 ~ InvGamma(shape/2, scale^2/2).

    Vectorized in both sigma and scale (broadcasting applies).
    """
    s = np.asarray(sigma, dtype=float)
    b = np.asarray(scale, dtype=float)
    if np.any(s <= 0):
        raise ValueError("sigma must be > 0")
    return ((1.0 - shape / 2.0) * math.log(2.0) - gammaln(shape / 2.0)
            + shape * np.log(b) - (shape + 1.0) * np.log(s)
            - b * b / (2.0 * s * s))


def volatility_prior_density(sigma, alpha: float, beta: float):
    """Prior volatility density with shape alpha and scale beta."""
    out = np.exp(log_volatility_density(sigma, alpha, beta))
    return float(out) if np.isscalar(sigma) else out


def bayes_sigma_scale(y_lags, beta: float) -> float:
    """Posterior scale sqrt(beta^2 + sum of squared lags)."""
    lags = np.asarray(y_lags, dtype=float)
    return float(np.sqrt(beta * beta + np.sum(lags * lags)))


def conditional_sigma_density(sigma, y_lags, alpha: float, beta: float,
                              m: int):
    """Closed-form conditional volatility density given exactly m lags.

    Inverse-gamma shaped with shape alpha + m and scale
    sqrt(beta^2 + sum of squared lags); collapses to the prior with
    updated shape when all lags vanish.
    """
    lags = np.asarray(y_lags, dtype=float)
    if lags.size != m:
        raise ValueError(f"need exactly {m} lags, got {lags.size}")
    scale = bayes_sigma_scale(lags, beta)
    out = np.exp(log_volatility_density(sigma, alpha + m, scale))
    return float(out) if np.isscalar(sigma) else out


def draw_sigma(shape: float, scales: np.ndarray,
               rng: np.random.Generator) -> np.ndarray:
    """Draw sigma per scale from the inverse-gamma volatility law."""
    g = rng.gamma(shape / 2.0, size=np.shape(scales))
    return np.asarray(scales) / np.sqrt(2.0 * g)


@dataclass
class MixtureDensity:
    """Discrete mixture of conditional volatility densities.

    ``shape`` None marks a point-mass mixture whose atoms sit exactly at
    ``scales``; otherwise atom k is inverse-gamma shaped with the common
    shape and scale ``scales[k]``.  Weights are normalized to one.
    """

    shape: float | None
    scales: np.ndarray
    weights: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.scales = np.asarray(self.scales, dtype=float).ravel()
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.scales.size != self.weights.size:
            raise ValueError("scales and weights must have equal length")
        if np.any(self.scales <= 0) or np.any(self.weights < 0):
            raise ValueError("scales must be > 0 and weights >= 0")
        total = self.weights.sum()
        if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-12):
            if total <= 0:
                raise ValueError("weights must have positive mass")
            self.weights = self.weights / total

    @property
    def is_point_mass(self) -> bool:
        return self.shape is None

    @classmethod
    def point_mass(cls, sigma: float, **provenance) -> "MixtureDensity":
        return cls(shape=None, scales=np.array([sigma]),
                   weights=np.array([1.0]), provenance=provenance)

    def pdf(self, sigma):
        if self.is_point_mass:
            raise ValueError("point-mass mixture has no density curve")
        s = np.atleast_1d(np.asarray(sigma, dtype=float))
        lp = log_volatility_density(s[:, None], self.shape,
                                    self.scales[None, :])
        out = np.sum(np.exp(lp) * self.weights[None, :], axis=1)
        return float(out[0]) if np.isscalar(sigma) else out

    def mean_sigma2(self) -> float:
        """Second moment of sigma under the mixture, in closed form."""
        if self.is_point_mass:
            return float(np.sum(self.weights * self.scales ** 2))
        if self.shape <= 2:
            return math.inf
        return float(np.sum(self.weights * self.scales ** 2
                            / (self.shape - 2.0)))

    def sample_sigma(self, n: int, rng) -> np.ndarray:
        rng = as_rng(rng)
        idx = rng.choice(self.scales.size, size=n, p=self.weights)
        if self.is_point_mass:
            return self.scales[idx]
        return draw_sigma(self.shape, self.scales[idx], rng)

    def grid(self, sigma_grid: np.ndarray) -> np.ndarray:
        """Density evaluated on a reporting grid."""
        return self.pdf(np.asarray(sigma_grid, dtype=float))


def prior_sigma_grid(params: ModelParams, n_points: int = 400,
                     q_lo: float = 1e-4, q_hi: float = 1.0 - 1e-4) -> np.ndarray:
    """Log-spaced sigma grid spanning prior quantiles, for plot output."""
    from scipy.stats import invgamma

    v_lo = invgamma.ppf(q_lo, params.alpha / 2.0,
                        scale=params.beta ** 2 / 2.0)
    v_hi = invgamma.ppf(q_hi, params.alpha / 2.0,
                        scale=params.beta ** 2 / 2.0)
    return np.geomspace(math.sqrt(v_lo), math.sqrt(v_hi), n_points)


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

def simulate_conditional_y(y_history: np.ndarray, horizon: int,
                           params: ModelParams, n_real: int,
                           rng) -> np.ndarray:
    """Simulate the endogenous component forward given its last m values.

    Returns (n_real, horizon); horizon 0 gives an empty array.  Each step
    draws from the one-step conditional law in the steady regime.
    """
    hist = np.asarray(y_history, dtype=float)
    if hist.size != params.m:
        raise ValueError(f"need exactly {params.m} history values")
    rng = as_rng(rng)
    paths = np.empty((n_real, horizon))
    lags = np.tile(hist, (n_real, 1))
    for k in range(horizon):
        nxt = sample_next_y(lags, params.alpha, params.beta, params.m, rng)
        paths[:, k] = nxt
        lags = np.concatenate([lags[:, 1:], nxt[:, None]], axis=1)
    return paths


def conditional_scale_matrix(y_history: np.ndarray, y_future: np.ndarray,
                             params: ModelParams) -> np.ndarray:
    """Posterior scales along simulated futures.

    Column k holds sqrt(beta^2 + sum of the m squared values preceding
    step t0 + k), for k = 0..horizon; column 0 depends on the history
    alone and is identical across realizations.
    """
    hist = np.asarray(y_history, dtype=float)
    fut = np.atleast_2d(np.asarray(y_future, dtype=float))
    n_real, horizon = fut.shape
    m = params.m
    full_sq = np.concatenate(
        [np.tile(hist * hist, (n_real, 1)), fut * fut], axis=1)
    csum = np.cumsum(full_sq, axis=1)
    scales = np.empty((n_real, horizon + 1))
    for k in range(horizon + 1):
        hi = k + m - 1
        lo = k - 1
        window = csum[:, hi] - (csum[:, lo] if lo >= 0 else 0.0)
        scales[:, k] = np.sqrt(params.beta ** 2 + window)
    return scales


def propagate_sigma_posterior(y_history, t_offset: int, params: ModelParams,
                              n_real: int, rng_seed) -> MixtureDensity:
    """Conditional volatility density at ``t_offset`` steps ahead.

    Offset 0 returns the closed-form conditional density of the next
    step exactly (a single atom).  Positive offsets integrate over the
    intervening endogenous values by simulation: each realization
    contributes one (shape, scale) atom.
    """
    if t_offset < 0:
        raise ValueError("t_offset must be >= 0")
    hist = np.asarray(y_history, dtype=float)
    shape = params.alpha + params.m
    if t_offset == 0:
        scale = bayes_sigma_scale(hist, params.beta)
        return MixtureDensity(shape=shape, scales=np.array([scale]),
                              weights=np.array([1.0]),
                              provenance={"t_offset": 0, "n_real": 1})
    fut = simulate_conditional_y(hist, t_offset, params, n_real,
                                 as_rng(rng_seed))
    scales = conditional_scale_matrix(hist, fut, params)[:, t_offset]
    weights = np.full(n_real, 1.0 / n_real)
    return MixtureDensity(shape=shape, scales=scales, weights=weights,
                          provenance={"t_offset": t_offset, "n_real": n_real})


def build_sigma_mixture(history_x, restart_path: RestartPath, t0: int,
                        maturity: int, params: ModelParams,
                        n_real: int = 100, rng_seed=0) -> MixtureDensity:
    """Pricing mixture for the horizon [t0, maturity] given one restart path.

    The restart path must cover [t0 - m, maturity]; its past segment
    de-modulates the observed returns into endogenous values, and its
    future segment supplies the a^2 weights.  ``history_x`` holds the
    returns of steps t0 - m .. t0 - 1.
    """
    x = np.asarray(history_x, dtype=float)
    m = params.m
    if x.size != m:
        raise ValueError(f"history_x must hold exactly m = {m} returns")
    if restart_path.t_start > t0 - m or restart_path.t_end < maturity:
        raise ValueError("restart path must cover [t0 - m, maturity]")
    if maturity < t0:
        raise ValueError("maturity must be >= t0")

    past_states = np.array([restart_path.state_at(t)
                            for t in range(t0 - m, t0)])
    y_hist = x / a_coefficient(past_states, params.d)

    horizon = maturity - t0
    fut = simulate_conditional_y(y_hist, horizon, params, n_real,
                                 as_rng(rng_seed))
    scales = conditional_scale_matrix(y_hist, fut, params)

    fut_states = np.array([restart_path.state_at(t)
                           for t in range(t0, maturity + 1)])
    a2 = a_coefficient(fut_states, params.d) ** 2
    w = (a2 / a2.sum())[None, :] / n_real
    return MixtureDensity(shape=params.alpha + params.m,
                          scales=scales.ravel(), weights=np.broadcast_to(
                              w, scales.shape).ravel(),
                          provenance={"t0": t0, "maturity": maturity,
                                      "n_real": n_real})

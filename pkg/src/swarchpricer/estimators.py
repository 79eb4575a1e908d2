"""Estimator-style front end: fit on a return history, predict option
prices for contract rows, scikit-learn conventions throughout.

``SwarchOptionPricer.fit`` runs the calibration protocol (grid-based
moment matching for the shape parameters on the full window, second-
moment matching for the scale on the last year) unless the parameters
are supplied up front; ``predict`` prices (strike, n_steps, s_prev) rows
with the full pipeline.  ``BlackScholesPricer`` is the degenerate
benchmark with the same surface.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .calibration import CalibrationGrid, calibrate_scale, calibrate_shape
from .params import ContractSpec, ModelParams, PricingConfig, InferenceConfig
from .pricing import bs_price, price_with_components, prepare_pricing
from .validation import check_contract_table, check_returns

__all__ = ["SwarchOptionPricer", "BlackScholesPricer"]

SCALE_WINDOW = 252


class SwarchOptionPricer(BaseEstimator):
    """Switching-volatility option pricer with a fit/predict surface.

    Parameters
    ----------
    d, nu, alpha, beta : float, optional
        Model parameters; any left as None is calibrated in ``fit``
        (shape parameters need ``grid``).
    m : int
        Memory range of the endogenous recursion.
    r : float
        Per-step risk-free rate used in pricing.
    grid : CalibrationGrid, optional
        Search grid for the shape parameters.
    mc_budget : int
        Simulated paths per grid cell during shape calibration.
    tau, n_mc, n_real, n_sigma, max_restarts : int
        Pricing pipeline knobs (posterior window, past samples,
        mixture realizations, volatility draws, scenario order).
    seed : int
        Master seed; fit and predict are deterministic given it.
    """

    def __init__(self, d: Optional[float] = None, nu: Optional[float] = None,
                 alpha: Optional[float] = None, beta: Optional[float] = None,
                 m: int = 21, r: float = 0.0,
                 grid: Optional[CalibrationGrid] = None, mc_budget: int = 50,
                 tau: int = 3, n_mc: int = 20, n_real: int = 100,
                 n_sigma: int = 512, max_restarts: int = 2, seed: int = 0):
        self.d = d
        self.nu = nu
        self.alpha = alpha
        self.beta = beta
        self.m = m
        self.r = r
        self.grid = grid
        self.mc_budget = mc_budget
        self.tau = tau
        self.n_mc = n_mc
        self.n_real = n_real
        self.n_sigma = n_sigma
        self.max_restarts = max_restarts
        self.seed = seed

    def fit(self, X, y=None):
        """Calibrate on a return history (1-D array-like)."""
        x = check_returns(X, min_length=self.m + self.tau + 2)
        if None in (self.d, self.nu, self.alpha):
            if self.grid is None:
                raise ValueError(
                    "shape parameters are unset; provide d, nu and alpha "
                    "or a CalibrationGrid to search")
            shape = calibrate_shape(x, self.grid, m=self.m,
                                    mc_budget=self.mc_budget,
                                    rng_seed=self.seed)
            d, nu, alpha = shape.d, shape.nu, shape.alpha
            self.shape_result_ = shape
        else:
            d, nu, alpha = self.d, self.nu, self.alpha
        window = x[-min(SCALE_WINDOW, x.size):]
        scale = calibrate_scale(window, d=d, nu=nu, alpha=alpha, m=self.m,
                                rng_seed=self.seed)
        beta = self.beta if self.beta is not None else scale.beta
        self.params_ = ModelParams(d=d, nu=nu, alpha=alpha, beta=beta,
                                   m=self.m, mu=scale.mu, r=self.r)
        self.sigma_bs_ = scale.sigma_bs
        self.history_ = x
        return self

    def _config(self) -> PricingConfig:
        return PricingConfig(
            inference=InferenceConfig(tau=self.tau, n_mc=self.n_mc),
            n_real=self.n_real, n_sigma=self.n_sigma,
            max_restarts=self.max_restarts)

    def predict(self, X) -> np.ndarray:
        """Model prices for contract rows (strike, n_steps, s_prev)."""
        self._check_fitted()
        table = check_contract_table(X)
        cfg = self._config()
        t0 = self.history_.size
        comps = None
        if len(table):
            comps = prepare_pricing(self.history_, t0, self.params_, cfg,
                                    self.seed,
                                    max_horizon=int(table["n_steps"].max()) - 1)
        out = np.empty(len(table))
        for k, row in enumerate(table.itertuples(index=False)):
            contract = ContractSpec(strike=row.strike, t0=t0,
                                    maturity=t0 + row.n_steps - 1,
                                    s_prev=row.s_prev)
            out[k] = price_with_components(contract, comps).price
        return out

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise RuntimeError("call fit before predict")


class BlackScholesPricer(BaseEstimator):
    """Benchmark pricer: point-mass volatility from the fitted window."""

    def __init__(self, r: float = 0.0, sigma_bs: Optional[float] = None):
        self.r = r
        self.sigma_bs = sigma_bs

    def fit(self, X, y=None):
        x = check_returns(X, min_length=2)
        window = x[-min(SCALE_WINDOW, x.size):]
        self.sigma_bs_ = (self.sigma_bs if self.sigma_bs is not None
                          else float(np.std(window, ddof=1)))
        self.mu_ = float(np.mean(window))
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "sigma_bs_"):
            raise RuntimeError("call fit before predict")
        table = check_contract_table(X)
        out = np.empty(len(table))
        for k, row in enumerate(table.itertuples(index=False)):
            contract = ContractSpec(strike=row.strike, t0=1,
                                    maturity=row.n_steps, s_prev=row.s_prev)
            out[k] = bs_price(contract, self.sigma_bs_, self.r)
        return out

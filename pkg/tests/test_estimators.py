"""Estimator front end: scikit-learn conventions, fit/predict behavior."""

import numpy as np
import pandas as pd
import pytest
from sklearn.base import clone

from swarchpricer import (BlackScholesPricer, CalibrationGrid, ContractSpec,
                          ModelParams, SwarchOptionPricer, bs_price)
from swarchpricer.model import simulate_return_paths
from swarchpricer.pricing import price_bounds


def history(n=80, seed=2):
    params = ModelParams(d=0.3, nu=0.05, alpha=5.0, beta=0.01, m=6)
    return simulate_return_paths(params, n, 1, seed)[0]


def contract_table():
    return pd.DataFrame({"strike": [95.0, 100.0, 105.0],
                         "n_steps": [5, 5, 10],
                         "s_prev": [100.0, 100.0, 100.0]})


class TestSklearnConventions:
    def test_get_params_roundtrip(self):
        est = SwarchOptionPricer(d=0.3, nu=0.05, alpha=5.0, m=6, seed=3)
        params = est.get_params()
        assert params["d"] == 0.3 and params["seed"] == 3
        est2 = SwarchOptionPricer(**params)
        assert est2.get_params() == params

    def test_clone(self):
        est = SwarchOptionPricer(d=0.3, nu=0.05, alpha=5.0, m=6)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_predict_before_fit_raises(self):
        with pytest.raises(RuntimeError):
            SwarchOptionPricer(d=0.3, nu=0.05, alpha=5.0).predict(
                contract_table())

    def test_missing_shape_without_grid_raises(self):
        with pytest.raises(ValueError):
            SwarchOptionPricer().fit(history())


class TestSwarchOptionPricer:
    def test_fit_with_given_shape_parameters(self):
        est = SwarchOptionPricer(d=0.3, nu=0.05, alpha=5.0, m=6, n_mc=4,
                                 n_real=10, n_sigma=32, seed=5)
        est.fit(history())
        assert est.params_.d == 0.3
        assert est.params_.beta > 0
        assert est.sigma_bs_ > 0

    def test_predict_prices_within_bounds(self):
        est = SwarchOptionPricer(d=0.3, nu=0.05, alpha=5.0, m=6, n_mc=4,
                                 n_real=10, n_sigma=32, seed=5)
        est.fit(history())
        table = contract_table()
        prices = est.predict(table)
        assert prices.shape == (3,)
        for price, row in zip(prices, table.itertuples(index=False)):
            c = ContractSpec(strike=row.strike, t0=1, maturity=row.n_steps,
                             s_prev=row.s_prev)
            lo, hi = price_bounds(c, est.params_.r)
            assert lo <= price <= hi

    def test_predict_accepts_plain_arrays(self):
        est = SwarchOptionPricer(d=0.3, nu=0.05, alpha=5.0, m=6, n_mc=3,
                                 n_real=8, n_sigma=16, seed=5)
        est.fit(history())
        out = est.predict(np.array([[100.0, 5, 100.0]]))
        assert out.shape == (1,)

    def test_deterministic_given_seed(self):
        table = contract_table()
        runs = []
        for _ in range(2):
            est = SwarchOptionPricer(d=0.3, nu=0.05, alpha=5.0, m=6, n_mc=4,
                                     n_real=10, n_sigma=32, seed=11)
            runs.append(est.fit(history()).predict(table))
        np.testing.assert_array_equal(runs[0], runs[1])

    def test_grid_calibrated_fit(self):
        grid = CalibrationGrid(d_values=(0.2, 0.4), nu_values=(0.02, 0.08),
                               alpha_values=(4.0, 6.0))
        est = SwarchOptionPricer(grid=grid, m=5, mc_budget=6, n_mc=3,
                                 n_real=8, n_sigma=16, seed=7)
        est.fit(history(400, seed=9))
        assert est.params_.d in grid.d_values
        assert hasattr(est, "shape_result_")


class TestBlackScholesPricer:
    def test_predict_matches_direct_formula(self):
        x = history()
        est = BlackScholesPricer(r=0.0004).fit(x)
        table = contract_table()
        out = est.predict(table)
        for price, row in zip(out, table.itertuples(index=False)):
            c = ContractSpec(strike=row.strike, t0=1, maturity=row.n_steps,
                             s_prev=row.s_prev)
            assert price == pytest.approx(
                bs_price(c, est.sigma_bs_, 0.0004), rel=1e-14)

    def test_fixed_sigma_override(self):
        est = BlackScholesPricer(sigma_bs=0.02).fit(history())
        assert est.sigma_bs_ == 0.02

    def test_invalid_contract_rows_rejected(self):
        est = BlackScholesPricer().fit(history())
        with pytest.raises(ValueError):
            est.predict(np.array([[100.0, 0, 100.0]]))
        with pytest.raises(ValueError):
            est.predict(np.array([[-1.0, 5, 100.0]]))

"""Switching-volatility return model with closed-form martingale option
pricing, calibration, and an option-chain evaluation harness."""

from .calibration import (CalibrationGrid, CalibrationResult, MomentTable,
                          ScaleResult, calibrate_scale, calibrate_shape,
                          empirical_moments)
from .estimators import BlackScholesPricer, SwarchOptionPricer
from .market import (EvaluationReport, TradingCalendar, bucket_and_report,
                     dividend_adjusted_index, filter_chain, select_rate)
from .mixture import (MixtureDensity, build_sigma_mixture,
                      conditional_sigma_density, propagate_sigma_posterior,
                      volatility_prior_density)
from .model import (a_coefficient, conditional_y_density, phi_density,
                    restart_initial_law, restart_transition,
                    simulate_restart_states, simulate_returns, simulate_y)
from .params import (ContractSpec, DataError, FutureRestartScenario,
                     InferenceConfig, ModelParams, NumericError, PriceResult,
                     PricingConfig, RestartPath)
from .pricing import (NoImpliedVolError, bs_delta, bs_implied_vol, bs_price,
                      conditional_call_price, conditional_delta,
                      effective_volatility, martingale_kernel, price_option)
from .restarts import (enumerate_future_scenarios,
                       joint_state_return_density, marginal_return_density,
                       sample_past_restarts)

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "InferenceConfig", "PricingConfig", "ContractSpec",
    "RestartPath", "FutureRestartScenario", "PriceResult", "MixtureDensity",
    "DataError", "NumericError", "NoImpliedVolError",
    "a_coefficient", "restart_initial_law", "restart_transition",
    "simulate_y", "simulate_restart_states", "simulate_returns",
    "phi_density", "conditional_y_density",
    "joint_state_return_density", "marginal_return_density",
    "sample_past_restarts", "enumerate_future_scenarios",
    "volatility_prior_density", "conditional_sigma_density",
    "propagate_sigma_posterior", "build_sigma_mixture",
    "martingale_kernel", "effective_volatility", "conditional_call_price",
    "conditional_delta", "price_option", "bs_price", "bs_delta",
    "bs_implied_vol",
    "empirical_moments", "calibrate_shape", "calibrate_scale",
    "CalibrationGrid", "CalibrationResult", "ScaleResult", "MomentTable",
    "TradingCalendar", "filter_chain", "select_rate",
    "dividend_adjusted_index", "bucket_and_report", "EvaluationReport",
    "SwarchOptionPricer", "BlackScholesPricer",
]

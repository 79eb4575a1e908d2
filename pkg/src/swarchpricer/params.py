"""Parameter containers and domain types shared across the package."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

TRADING_DAYS_PER_YEAR = 252


class DataError(Exception):
    """Malformed or insufficient input data (files, schemas, histories)."""


class NumericError(Exception):
    """A numerical procedure failed to produce a valid result."""


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the switching-volatility return model.

    Attributes
    ----------
    d : float
        Scaling exponent of the switching coefficients, > 0.  d = 1/2
        switches the modulation off entirely.
    nu : float
        Per-step restart probability of the integer state chain, in (0, 1].
    alpha : float
        Shape of the inverse-gamma volatility prior, > 0.
    beta : float
        Scale of the inverse-gamma volatility prior (per-step return
        units), > 0.
    m : int
        Memory range of the endogenous recursion, >= 1.
    mu : float
        Mean return rate per step.
    r : float
        Risk-free rate per step, >= 0.
    """

    d: float
    nu: float
    alpha: float
    beta: float
    m: int = 21
    mu: float = 0.0
    r: float = 0.0

    def __post_init__(self) -> None:
        if not self.d > 0:
            raise ValueError(f"d must be > 0, got {self.d}")
        if not 0 < self.nu <= 1:
            raise ValueError(f"nu must be in (0, 1], got {self.nu}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise ValueError(f"m must be an integer >= 1, got {self.m}")
        if not self.r >= 0:
            raise ValueError(f"r must be >= 0, got {self.r}")

    def replace(self, **kwargs) -> "ModelParams":
        return replace(self, **kwargs)

    @property
    def gamma(self) -> float:
        """Drift offset ln(1+r) - mu of the martingale kernel."""
        return math.log1p(self.r) - self.mu


@dataclass(frozen=True)
class InferenceConfig:
    """Settings for the local-window posterior over past restart states.

    ``i_max`` truncates the infinite sums over the integer state; when
    None it defaults to m + tau + ceil(log(1e-12)/log(1-nu)), capped at
    10*(m + tau), which bounds the geometric tail mass below 1e-12.
    """

    tau: int = 3
    n_mc: int = 20
    i_max: Optional[int] = None

    def __post_init__(self) -> None:
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if self.n_mc < 1:
            raise ValueError(f"n_mc must be >= 1, got {self.n_mc}")

    def resolved_i_max(self, params: ModelParams) -> int:
        base = params.m + self.tau
        if self.i_max is not None:
            if self.i_max < base:
                raise ValueError(f"i_max must be >= m + tau = {base}")
            return int(self.i_max)
        if params.nu >= 1.0:
            tail = 1
        else:
            tail = math.ceil(math.log(1e-12) / math.log1p(-params.nu))
        return int(min(base + tail, 10 * base))


@dataclass(frozen=True)
class PricingConfig:
    """Knobs of the full pricing pipeline.

    ``fixed_sigma`` replaces the volatility mixture with a point mass,
    which degenerates the pricer to the discrete Black-Scholes formula
    when d = 1/2.
    """

    inference: InferenceConfig = field(default_factory=InferenceConfig)
    n_real: int = 100
    n_sigma: int = 512
    max_restarts: int = 2
    fixed_sigma: Optional[float] = None

    def __post_init__(self) -> None:
        if self.n_real < 1:
            raise ValueError("n_real must be >= 1")
        if self.n_sigma < 1:
            raise ValueError("n_sigma must be >= 1")
        if self.max_restarts not in (0, 1, 2, 3):
            raise ValueError("max_restarts must be in {0, 1, 2, 3}")
        if self.fixed_sigma is not None and not self.fixed_sigma > 0:
            raise ValueError("fixed_sigma must be > 0 when given")


@dataclass
class RestartPath:
    """A string of integer states over [t_start, t_end] with its weight.

    Consecutive states must follow the chain support: the next state is
    either 1 (restart) or the previous state plus one.
    """

    t_start: int
    t_end: int
    states: np.ndarray
    weight: float = 1.0

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=np.int64)
        if self.t_end < self.t_start:
            raise ValueError("t_end must be >= t_start")
        if self.states.shape != (self.t_end - self.t_start + 1,):
            raise ValueError("states length must match [t_start, t_end]")
        if np.any(self.states < 1):
            raise ValueError("states must be positive integers")
        nxt, prev = self.states[1:], self.states[:-1]
        if not np.all((nxt == 1) | (nxt == prev + 1)):
            raise ValueError("states must restart to 1 or increment by 1")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight must be in [0, 1], got {self.weight}")

    def __len__(self) -> int:
        return self.states.size

    def state_at(self, t: int) -> int:
        if not self.t_start <= t <= self.t_end:
            raise ValueError(f"time {t} outside [{self.t_start}, {self.t_end}]")
        return int(self.states[t - self.t_start])


@dataclass(frozen=True)
class FutureRestartScenario:
    """A future state string with at most a few restarts in [t0, T].

    ``weight`` is the chain probability prefactor of the scenario:
    (1-nu)^n, nu*(1-nu)^(n-1), nu^2*(1-nu)^(n-2) or nu^3*(1-nu)^(n-3)
    for order 0..3, where n is the number of steps.
    """

    order: int
    restart_times: Tuple[int, ...]
    states: np.ndarray
    weight: float


@dataclass(frozen=True)
class ContractSpec:
    """A European call: strike, pricing step t0, maturity step T, and the
    underlying level at t0 - 1 (the latest value known when pricing)."""

    strike: float
    t0: int
    maturity: int
    s_prev: float

    def __post_init__(self) -> None:
        if not self.strike > 0:
            raise ValueError("strike must be > 0")
        if self.maturity < self.t0:
            raise ValueError("maturity must be >= t0")
        if not self.s_prev > 0:
            raise ValueError("s_prev must be > 0")

    @property
    def n_steps(self) -> int:
        """Return steps carried by the contract, maturity - t0 + 1."""
        return self.maturity - self.t0 + 1


@dataclass
class PriceResult:
    """Output of the full pricing pipeline for one contract."""

    price: float
    delta: float
    sigma_tilde_stats: dict
    n_scenarios: int
    n_mc: int

    def lower_bound(self, contract: ContractSpec, r: float) -> float:
        disc = (1.0 + r) ** (-contract.n_steps)
        return max(0.0, (1.0 + r) * (contract.s_prev - contract.strike * disc))

    def upper_bound(self, contract: ContractSpec, r: float) -> float:
        return (1.0 + r) * contract.s_prev

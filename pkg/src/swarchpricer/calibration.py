"""Parameter estimation by simulated moment matching.

The shape parameters (d, nu, alpha) are fitted on a long window by grid
search.  Every grid cell simulates paths with common random numbers and
is scored by a weighted squared distance between scale-free statistics
of the data window and the per-path average of the same statistics under
the model; the argmin is deterministic given the seed.

The statistic set starts from absolute-moment scaling E|R_tau|^q over
several orders and horizons plus the autocorrelation of absolute
returns, and extends it with robust log-scale blocks (autocorrelation
and dispersion of log absolute returns, quantile ratios, burst
occupancy, and the dynamics of the log rolling sum of squares at the
memory-window scale).  The extension is load-bearing: within any window
of at most m+1 steps the endogenous component is spherically
distributed, so every scale-free within-window statistic is blind to the
tail-shape parameter, which only surfaces in the radius dynamics across
windows.  Weighting is two-pass: a diagonal pass locates a preliminary
argmin, then a shrunk inverse covariance estimated from that cell's
simulated paths scores the final pass.

A single five-year window identifies the shape parameters only coarsely
(the argmin wanders by about a grid step, matching the dispersion the
estimator shows on rolling real-data windows), so CalibrationResult also
exposes a parametric-bootstrap consistency test: whether a given cell's
objective lies within the noise band of the optimum.

The scale parameters (beta, sigma_bs, mu) come from a short window:
sigma_bs and mu are the sample standard deviation and mean, and beta is
matched by bisection so the simulated unconditional second moment of the
returns reproduces the window's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Sequence, Tuple

import numpy as np

from .model import simulate_return_paths
from .params import ModelParams
from .rng import child_rng

__all__ = [
    "MomentTable",
    "empirical_moments",
    "CalibrationGrid",
    "CalibrationResult",
    "ScaleResult",
    "calibrate_shape",
    "calibrate_scale",
    "DEFAULT_Q_SET",
    "DEFAULT_TAU_SET",
    "DEFAULT_ACF_LAGS",
]

DEFAULT_Q_SET = (1.0, 2.0, 4.0)
DEFAULT_TAU_SET = (1, 2, 5, 10, 21, 42)
DEFAULT_ACF_LAGS = (1, 5, 10, 21, 63)
LOG_ACF_LAGS = (1, 2, 5, 10, 21, 42, 63)


# ---------------------------------------------------------------------------
# Moment tables (reporting / diagnostics)
# ---------------------------------------------------------------------------

@dataclass
class MomentTable:
    """Aggregation moments E|R_tau|^q and absolute-return autocorrelation."""

    qs: Tuple[float, ...]
    taus: Tuple[int, ...]
    abs_moments: np.ndarray          # shape (len(qs), len(taus))
    acf_abs: np.ndarray              # lags 1..len(acf_abs)
    n_obs: int

    def hurst(self, q: float) -> float:
        """Scaling exponent H(q) from the log-log slope over tau."""
        qi = self.qs.index(q)
        logs = np.log(self.abs_moments[qi])
        lt = np.log(np.asarray(self.taus, dtype=float))
        slope = np.polyfit(lt, logs, 1)[0]
        return float(slope / q)


def _aggregate_abs_moments(paths: np.ndarray, qs: Sequence[float],
                           taus: Sequence[int]) -> np.ndarray:
    """Per-path overlapping-window estimates of E|R_tau|^q,
    shape (n_paths, len(qs), len(taus))."""
    csum = np.cumsum(paths, axis=1)
    out = np.empty((paths.shape[0], len(qs), len(taus)))
    for ti, tau in enumerate(taus):
        r = csum[:, tau - 1:] - np.concatenate(
            [np.zeros((paths.shape[0], 1)), csum[:, :-tau]], axis=1)
        abs_r = np.abs(r)
        for qi, q in enumerate(qs):
            out[:, qi, ti] = np.mean(abs_r ** q, axis=1)
    return out


def _acf(series: np.ndarray, lags: Sequence[int]) -> np.ndarray:
    z = series - series.mean()
    den = float(np.sum(z * z))
    return np.array([float(np.sum(z[lag:] * z[:-lag])) / den for lag in lags])


def empirical_moments(series, q_set: Sequence[float] = DEFAULT_Q_SET,
                      tau_set: Sequence[int] = DEFAULT_TAU_SET,
                      max_acf_lag: int = 100) -> MomentTable:
    """Moment table of one return series.

    Requires the series to be much longer than the largest horizon; a
    window shorter than twice max(tau_set) is rejected.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if x.size < 2 * max(tau_set) or x.size <= max_acf_lag:
        raise ValueError("series too short for the requested horizons")
    return MomentTable(
        qs=tuple(q_set), taus=tuple(tau_set),
        abs_moments=_aggregate_abs_moments(x[None, :], q_set, tau_set)[0],
        acf_abs=_acf(np.abs(x), range(1, max_acf_lag + 1)), n_obs=x.size)


# ---------------------------------------------------------------------------
# Objective statistic
# ---------------------------------------------------------------------------

def _shape_statistic(x: np.ndarray, m: int,
                     qs: Sequence[float] = DEFAULT_Q_SET,
                     taus: Sequence[int] = DEFAULT_TAU_SET,
                     acf_lags: Sequence[int] = DEFAULT_ACF_LAGS) -> np.ndarray:
    """Scale-free single-path statistic used by the shape objective.

    Blocks: log absolute moments (the identically-zero (q=2, tau=1)
    entry dropped), autocorrelation of |x|, autocorrelation and
    dispersion of log|x|, quantile tail ratios, burst occupancy, and
    log-radius dynamics at the memory-window scale.
    """
    x = np.asarray(x, dtype=float)
    std = x.std()
    if std <= 0:
        raise ValueError("zero-variance series")
    z = x / std
    out = []
    mom = _aggregate_abs_moments(z[None, :], qs, taus)[0]
    for qi, q in enumerate(qs):
        for ti, tau in enumerate(taus):
            if q == 2.0 and tau == 1:
                continue
            out.append(math.log(mom[qi, ti]))
    az = np.abs(z) + 1e-300
    out.extend(_acf(az, acf_lags))
    lz = np.log(az)
    out.extend(_acf(lz, LOG_ACF_LAGS))
    out.append(float(np.std(lz)))
    q50, q90, q95, q99 = np.quantile(az, [0.5, 0.9, 0.95, 0.99])
    out.extend([math.log(q95 / q50), math.log(q99 / q90),
                float(np.mean(az > 3 * q50)), float(np.mean(az > 6 * q50))])
    w = m + 1
    c2 = np.cumsum(z * z)
    radius = np.log(c2[w:] - c2[:-w] + 1e-300)
    out.append(float(np.std(radius)))
    out.extend(_acf(radius, (w, 2 * w, 4 * w, 8 * w, 16 * w)))
    for lag in (w, 4 * w):
        out.append(float(np.mean((radius[lag:] - radius[:-lag]) ** 2)))
    return np.asarray(out)


# ---------------------------------------------------------------------------
# Shape calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationGrid:
    """Cartesian search grid over (d, nu, alpha)."""

    d_values: Tuple[float, ...]
    nu_values: Tuple[float, ...]
    alpha_values: Tuple[float, ...]

    def __post_init__(self) -> None:
        if not (self.d_values and self.nu_values and self.alpha_values):
            raise ValueError("grid must contain at least one point per axis")

    @classmethod
    def regular(cls, d_range=(0.1, 0.35), nu_range=(1e-4, 1e-3),
                alpha_range=(3.0, 10.0), d_step: float = 5e-3,
                nu_step: float = 1e-4,
                alpha_step: float = 0.5) -> "CalibrationGrid":
        if min(d_step, nu_step, alpha_step) <= 0:
            raise ValueError("grid steps must be positive")

        def axis(lo, hi, step):
            n = int(round((hi - lo) / step)) + 1
            return tuple(lo + k * step for k in range(n))

        return cls(axis(*d_range, d_step), axis(*nu_range, nu_step),
                   axis(*alpha_range, alpha_step))

    @property
    def size(self) -> int:
        return (len(self.d_values) * len(self.nu_values)
                * len(self.alpha_values))

    def cells(self):
        for d in self.d_values:
            for nu in self.nu_values:
                for alpha in self.alpha_values:
                    yield (d, nu, alpha)

    def neighbor(self, cell_a, cell_b) -> bool:
        """True when the two cells differ by at most one step per axis."""
        axes = (self.d_values, self.nu_values, self.alpha_values)
        return all(abs(axis.index(a) - axis.index(b)) <= 1
                   for axis, a, b in zip(axes, cell_a, cell_b))


@dataclass
class CalibrationResult:
    """Grid argmin with the objective surface and consistency machinery."""

    d: float
    nu: float
    alpha: float
    m: int
    objective: float
    objective_table: np.ndarray      # (n_d, n_nu, n_alpha)
    grid: CalibrationGrid
    diagnostics: Dict = field(default_factory=dict)

    def to_params(self, beta: float, mu: float = 0.0,
                  r: float = 0.0) -> ModelParams:
        return ModelParams(d=self.d, nu=self.nu, alpha=self.alpha, beta=beta,
                           m=self.m, mu=mu, r=r)

    @property
    def argmin_cell(self) -> Tuple[float, float, float]:
        return (self.d, self.nu, self.alpha)

    def objective_at(self, cell) -> float:
        di = self.grid.d_values.index(cell[0])
        ni = self.grid.nu_values.index(cell[1])
        ai = self.grid.alpha_values.index(cell[2])
        return float(self.objective_table[di, ni, ai])

    def noise_band(self, cell, level: float = 0.975) -> float:
        """Quantile of the argmin-gap statistic under data generated at
        ``cell``, from the stored simulated paths (parametric bootstrap)."""
        vectors = self.diagnostics["cell_vectors"][cell]
        means = self.diagnostics["cell_means"]
        keys = self.diagnostics["cell_keys"]
        w_mat = self.diagnostics["weight_matrix"]
        idx = keys.index(cell)
        gaps = []
        for v in vectors:
            diffs = means - v
            obj = np.einsum("ki,ij,kj->k", diffs, w_mat, diffs)
            gaps.append(float(obj[idx] - obj.min()))
        return float(np.quantile(gaps, level))

    def accepts(self, cell, level: float = 0.975) -> bool:
        """Whether ``cell`` is recovered: it is the argmin or a grid
        neighbor, or its objective lies within the noise band of the
        optimum (the surface is statistically flat between them)."""
        if self.grid.neighbor(cell, self.argmin_cell):
            return True
        gap = self.objective_at(cell) - self.objective
        return gap <= self.noise_band(cell, level)


@lru_cache(maxsize=1024)
def _cell_statistics(cell, length: int, m: int, mc_budget: int,
                     sim_seed: int, q_set, tau_set, acf_lags) -> np.ndarray:
    """Per-path statistics of one grid cell's CRN simulation.

    Cached: identical (seed, grid cell, window length, budget) requests
    across calibrate_shape calls reuse the same simulated table.
    """
    d, nu, alpha = cell
    params = ModelParams(d=d, nu=nu, alpha=alpha, beta=1.0, m=m)
    paths = simulate_return_paths(params, length, mc_budget, sim_seed)
    out = np.stack([_shape_statistic(paths[i], m, q_set, tau_set, acf_lags)
                    for i in range(mc_budget)])
    out.setflags(write=False)
    return out


def calibrate_shape(series, grid: CalibrationGrid, m: int = 21,
                    mc_budget: int = 200, rng_seed: int = 0,
                    q_set=DEFAULT_Q_SET, tau_set=DEFAULT_TAU_SET,
                    acf_lags=DEFAULT_ACF_LAGS,
                    shrinkage: float = 0.4) -> CalibrationResult:
    """Grid search for (d, nu, alpha) by simulated moment matching.

    Every cell simulates ``mc_budget`` paths of the data's length with
    the same seeds (common random numbers), making the objective a
    deterministic function of the seed.  Statistics are scale-free, so
    beta drops out and is calibrated separately on a short window.  The
    first pass ranks cells with diagonal inverse-variance weights; the
    second re-ranks with a shrunk inverse covariance estimated from the
    preliminary argmin cell's simulated paths.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 2 * max(tau_set):
        raise ValueError("series too short for shape calibration")
    data_vec = _shape_statistic(x, m, q_set, tau_set, acf_lags)

    sim_seed = int(child_rng(rng_seed, 51).integers(0, 2 ** 31 - 1))
    keys = list(grid.cells())
    vectors: Dict = {
        cell: _cell_statistics(cell, x.size, m, mc_budget, sim_seed,
                               tuple(q_set), tuple(tau_set), tuple(acf_lags))
        for cell in keys}
    means = np.stack([vectors[c].mean(axis=0) for c in keys])

    # pass 1: diagonal weights from the median per-cell variance
    per_cell_var = np.stack([vectors[c].var(axis=0) for c in keys])
    w_diag = 1.0 / np.maximum(np.median(per_cell_var, axis=0), 1e-12)
    obj1 = np.sum(w_diag * (means - data_vec) ** 2, axis=1)
    prelim = keys[int(np.argmin(obj1))]

    # pass 2: shrunk inverse covariance at the preliminary argmin
    cov = np.cov(vectors[prelim], rowvar=False)
    cov = (1.0 - shrinkage) * cov + shrinkage * np.diag(np.diag(cov))
    cov += 1e-8 * np.eye(cov.shape[0])
    w_mat = np.linalg.inv(cov)
    diffs = means - data_vec
    obj2 = np.einsum("ki,ij,kj->k", diffs, w_mat, diffs)

    table = obj2.reshape(len(grid.d_values), len(grid.nu_values),
                         len(grid.alpha_values))
    di, ni, ai = np.unravel_index(int(np.argmin(table)), table.shape)
    nu_profile = table[di, :, ai]
    spread = float(nu_profile.max() - nu_profile.min())
    scale = float(np.median(table))
    diagnostics = {
        "nu_profile_at_argmin": nu_profile.copy(),
        "nu_flat": bool(len(grid.nu_values) > 1
                        and spread < 1e-3 * max(scale, 1e-300)),
        "data_vector": data_vec,
        "weight_matrix": w_mat,
        "cell_means": means,
        "cell_keys": keys,
        "cell_vectors": vectors,
        "preliminary_argmin": prelim,
    }
    return CalibrationResult(
        d=float(grid.d_values[di]), nu=float(grid.nu_values[ni]),
        alpha=float(grid.alpha_values[ai]), m=m,
        objective=float(table[di, ni, ai]), objective_table=table,
        grid=grid, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# Scale calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleResult:
    beta: float
    sigma_bs: float
    mu: float


def calibrate_scale(series, d: float, nu: float, alpha: float, m: int = 21,
                    rng_seed: int = 0, n_paths: int = 1024,
                    horizon: int = 504, rel_tol: float = 1e-4) -> ScaleResult:
    """Scale parameters from a short window.

    sigma_bs is the sample standard deviation and mu the sample mean.
    beta is found by bisection so that the simulated unconditional second
    moment of the returns (fixed seed, so the map beta -> moment is
    deterministic and increasing) matches the window's second moment.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("window too short")
    sigma_bs = float(np.std(x, ddof=1))
    if sigma_bs <= 0:
        raise ValueError("zero-variance window; scale is unidentified")
    mu = float(np.mean(x))
    target = float(np.mean(x * x))
    sim_seed = int(child_rng(rng_seed, 60).integers(0, 2 ** 31 - 1))

    def moment(beta: float) -> float:
        params = ModelParams(d=d, nu=nu, alpha=alpha, beta=beta, m=m)
        paths = simulate_return_paths(params, horizon, n_paths, sim_seed)
        return float(np.mean(paths * paths))

    lo, hi = sigma_bs * 1e-3, sigma_bs * 1e3
    if moment(lo) - target > 0 or moment(hi) - target < 0:
        raise ValueError("bisection bracket failed; window scale implausible")
    while (hi - lo) / hi > rel_tol:
        mid = math.sqrt(lo * hi)
        if moment(mid) - target > 0:
            hi = mid
        else:
            lo = mid
    return ScaleResult(beta=math.sqrt(lo * hi), sigma_bs=sigma_bs, mu=mu)

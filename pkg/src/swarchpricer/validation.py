"""Input validation helpers shared by the estimator API and the CLI."""

from __future__ import annotations

import numpy as np
import pandas as pd

__all__ = ["check_returns", "check_contract_table"]


def check_returns(x, min_length: int = 1) -> np.ndarray:
    """Coerce a return history to a finite 1-D float array."""
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size < min_length:
        raise ValueError(f"need at least {min_length} returns, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("returns must be finite")
    return arr


def check_contract_table(X) -> pd.DataFrame:
    """Coerce contract rows to a frame with strike, n_steps, s_prev.

    Accepts a DataFrame with those columns or a 2-D array-like with the
    columns in that order.
    """
    if isinstance(X, pd.DataFrame):
        missing = {"strike", "n_steps", "s_prev"} - set(X.columns)
        if missing:
            raise ValueError(f"contract table missing columns {sorted(missing)}")
        df = X[["strike", "n_steps", "s_prev"]].copy()
    else:
        arr = np.atleast_2d(np.asarray(X, dtype=float))
        if arr.shape[1] != 3:
            raise ValueError("contract rows must be (strike, n_steps, s_prev)")
        df = pd.DataFrame(arr, columns=["strike", "n_steps", "s_prev"])
    if (df["strike"] <= 0).any() or (df["s_prev"] <= 0).any():
        raise ValueError("strike and s_prev must be positive")
    if (df["n_steps"] < 1).any():
        raise ValueError("n_steps must be >= 1")
    if not np.allclose(df["n_steps"], np.round(df["n_steps"])):
        raise ValueError("n_steps must be integer-valued")
    df["n_steps"] = df["n_steps"].astype(int)
    return df

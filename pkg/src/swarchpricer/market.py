"""Option-chain ingestion, filtering, rate selection, dividend adjustment,
and bucketed evaluation reports.

The filter protocol keeps Wednesday quotes with more than a trading week
to expiry, at least the minimum tick price, at most a year to maturity,
and (when the adjusted index and rate are available) no violation of the
static lower bound.  Every rejected quote carries exactly one reason: the
first failing stage in the documented order.

Day counts are open-market days from a supplied exchange calendar.  Rate
tenors bucket as [1,40] -> 1m, [41,82] -> 3m, [83,183] -> 6m and
above -> 12m, pinned by tests because the prose convention is
boundary-ambiguous.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, Sequence, Tuple

import numpy as np
import pandas as pd

from .params import DataError, TRADING_DAYS_PER_YEAR

__all__ = [
    "TradingCalendar",
    "filter_chain",
    "select_rate",
    "dividend_adjusted_index",
    "bucket_moneyness",
    "bucket_dtm",
    "bucket_and_report",
    "EvaluationReport",
    "MONEYNESS_LABELS",
    "DTM_LABELS",
    "MIN_TICK_PRICE",
    "LAST_WEEK_DAYS",
]

MIN_TICK_PRICE = 0.125
LAST_WEEK_DAYS = 5          # a trading week; quotes with dtm <= 5 drop
MAX_DTM = TRADING_DAYS_PER_YEAR

MONEYNESS_EDGES = (0.50, 0.75, 1.00, 1.25, 1.50, 1.75, 2.00, 2.25, 2.50)
MONEYNESS_LABELS = ("<0.50", "0.50-0.75", "0.75-1.00", "1.00-1.25",
                    "1.25-1.50", "1.50-1.75", "1.75-2.00", "2.00-2.25",
                    "2.25-2.50", ">2.50")
DTM_EDGES = (21, 63, 126)
DTM_LABELS = ("<21", "21-63", "63-126", "126-252")

RATE_TENOR_COLUMNS = ("r1m", "r3m", "r6m", "r12m")


class TradingCalendar:
    """Sorted open-market dates with day-count helpers."""

    def __init__(self, dates: Sequence[date]):
        self.dates = sorted(dates)
        if not self.dates:
            raise DataError("calendar is empty")
        self._pos = {d: k for k, d in enumerate(self.dates)}

    def __contains__(self, d: date) -> bool:
        return d in self._pos

    def days_to_maturity(self, quote_date: date, expiry: date) -> int:
        """Open-market days in (quote_date, expiry]."""
        hi = bisect_right(self.dates, expiry)
        lo = bisect_right(self.dates, quote_date)
        return hi - lo

    def index(self, d: date) -> int:
        try:
            return self._pos[d]
        except KeyError:
            raise DataError(f"{d} is not an open-market day") from None


def _is_wednesday(d: date) -> bool:
    return d.weekday() == 2


def filter_chain(quotes: pd.DataFrame, calendar: TradingCalendar
                 ) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Apply the quote filters; returns (kept, rejections).

    ``quotes`` needs columns quote_date, expiry, strike, cp_flag, price,
    underlying_close.  Optional columns s_adj and rate_annual enable the
    static-arbitrage stage for calls.  The output gains dtm and moneyness
    columns; rejections carry a single ``reason`` column.  Rejections are
    logged, never fatal, and the operation is idempotent.
    """
    df = quotes.copy()
    if df.empty:
        rej = df.copy()
        rej["reason"] = pd.Series(dtype=str)
        if "dtm" not in df.columns:
            df["dtm"] = pd.Series(dtype=int)
            df["moneyness"] = pd.Series(dtype=float)
        return df, rej
    if "dtm" not in df.columns:
        df["dtm"] = [calendar.days_to_maturity(q, e)
                     for q, e in zip(df["quote_date"], df["expiry"])]
    if "moneyness" not in df.columns:
        df["moneyness"] = df["underlying_close"] / df["strike"]

    reason = pd.Series("", index=df.index, dtype=object)

    def mark(mask, code):
        fresh = mask & (reason == "")
        reason[fresh] = code

    mark(~df["quote_date"].map(_is_wednesday), "not_wednesday")
    mark(df["dtm"] <= LAST_WEEK_DAYS, "last_week")
    mark(df["price"] < MIN_TICK_PRICE, "below_tick_threshold")
    mark(df["dtm"] > MAX_DTM, "maturity_over_year")
    if "s_adj" in df.columns and "rate_annual" in df.columns:
        tau = df["dtm"] / TRADING_DAYS_PER_YEAR
        bound = np.maximum(
            df["s_adj"] - df["strike"] * np.exp(-df["rate_annual"] * tau), 0.0)
        is_call = df["cp_flag"].astype(str).str.upper().str.startswith("C")
        mark(is_call & (df["price"] < bound - 1e-9), "arbitrage_violation")

    kept = df[reason == ""].copy()
    rejections = df[reason != ""].copy()
    rejections["reason"] = reason[reason != ""]
    return kept, rejections


def select_rate(quote_date: date, days_to_expiry: int,
                curve: pd.DataFrame) -> float:
    """Annualized rate for a maturity, from the tenor closest by bucket.

    ``curve`` is indexed by date with columns r1m, r3m, r6m, r12m.
    """
    if days_to_expiry < 1:
        raise ValueError("days_to_expiry must be >= 1")
    if days_to_expiry <= 40:
        col = "r1m"
    elif days_to_expiry <= 82:
        col = "r3m"
    elif days_to_expiry <= 183:
        col = "r6m"
    else:
        col = "r12m"
    try:
        value = curve.loc[quote_date, col]
    except KeyError:
        raise DataError(f"no rates for {quote_date}") from None
    if pd.isna(value):
        raise DataError(f"missing tenor {col} on {quote_date}")
    return float(value)


def dividend_adjusted_index(chain: pd.DataFrame, index_level: float,
                            rate_annual: float, days_to_expiry: int
                            ) -> Tuple[float, Dict]:
    """Dividend-discounted index from the parity of the closest-to-the-money
    put/call pair at one (quote date, expiry).

    Solves C - P = S_adj - K exp(-r tau) for S_adj.  Among strikes quoted
    on both sides, picks the one nearest the index level, breaking ties
    toward the lower strike.  Without any pair the raw index is returned
    and flagged.
    """
    flags = chain["cp_flag"].astype(str).str.upper().str[0]
    calls = chain[flags == "C"].set_index("strike")["price"]
    puts = chain[flags == "P"].set_index("strike")["price"]
    common = sorted(set(calls.index) & set(puts.index))
    if not common:
        return float(index_level), {"fallback": True, "pair_strike": None}
    strikes = np.asarray(common, dtype=float)
    order = np.lexsort((strikes, np.abs(strikes - index_level)))
    k = float(strikes[order[0]])
    tau = days_to_expiry / TRADING_DAYS_PER_YEAR
    s_adj = float(calls.loc[k]) - float(puts.loc[k]) + k * math.exp(
        -rate_annual * tau)
    return s_adj, {"fallback": False, "pair_strike": k}


# ---------------------------------------------------------------------------
# Buckets and reports
# ---------------------------------------------------------------------------

def bucket_moneyness(m: float) -> str:
    """Left-closed moneyness bucket label (1.00 belongs to 1.00-1.25)."""
    idx = int(np.searchsorted(MONEYNESS_EDGES, m, side="right"))
    return MONEYNESS_LABELS[idx]


def bucket_dtm(d: int) -> str:
    """Left-closed days-to-maturity bucket label."""
    idx = int(np.searchsorted(DTM_EDGES, d, side="right"))
    return DTM_LABELS[idx]


@dataclass
class EvaluationReport:
    """Per-bucket contract counts, averages and pricing RMSEs.

    Every table is indexed by moneyness label (plus "All") with
    days-to-maturity labels (plus "All") as columns; the margins are
    recomputed from the unbucketed records.
    """

    counts: pd.DataFrame
    avg_price: pd.DataFrame
    avg_implied_vol: pd.DataFrame
    rmse_model: pd.DataFrame
    rmse_bs: pd.DataFrame
    meta: Dict = field(default_factory=dict)

    @property
    def total_count(self) -> int:
        return int(self.counts.loc["All", "All"])

    def overall_rmse(self) -> Tuple[float, float]:
        return (float(self.rmse_model.loc["All", "All"]),
                float(self.rmse_bs.loc["All", "All"]))


def _cell_tables(df: pd.DataFrame) -> EvaluationReport:
    rows = list(MONEYNESS_LABELS) + ["All"]
    cols = list(DTM_LABELS) + ["All"]

    def table(fn):
        out = pd.DataFrame(np.nan, index=rows, columns=cols)
        for rlab in rows:
            rsel = df if rlab == "All" else df[df["m_bucket"] == rlab]
            for clab in cols:
                sel = rsel if clab == "All" else rsel[rsel["d_bucket"] == clab]
                out.loc[rlab, clab] = fn(sel)
        return out

    def rmse(col):
        def inner(sel):
            if sel.empty:
                return np.nan
            err = sel[col] - sel["market_price"]
            return float(np.sqrt(np.mean(err ** 2)))
        return inner

    counts = table(lambda sel: len(sel)).astype(int)
    avg_price = table(lambda sel: float(sel["market_price"].mean())
                      if not sel.empty else np.nan)
    if "iv_market" in df.columns:
        avg_iv = table(lambda sel: float(sel["iv_market"].dropna().mean())
                       if sel["iv_market"].notna().any() else np.nan)
    else:
        avg_iv = pd.DataFrame(np.nan, index=rows, columns=cols)
    return EvaluationReport(
        counts=counts, avg_price=avg_price, avg_implied_vol=avg_iv,
        rmse_model=table(rmse("model_price")), rmse_bs=table(rmse("bs_price")))


def bucket_and_report(records: pd.DataFrame) -> EvaluationReport:
    """Bucket aligned pricing records and compute the evaluation tables.

    ``records`` needs columns moneyness, dtm, market_price, model_price,
    bs_price, and optionally iv_market.
    """
    df = records.copy()
    df["m_bucket"] = df["moneyness"].map(bucket_moneyness)
    df["d_bucket"] = df["dtm"].map(bucket_dtm)
    report = _cell_tables(df)
    report.meta["n_records"] = len(df)
    return report

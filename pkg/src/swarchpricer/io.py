"""File formats: CSV artifacts with provenance headers, key-value configs,
and the exchange calendar.

Every artifact written by the CLI starts with a comment line holding the
config hash and the seed, so outputs are traceable to the run that made
them; readers skip '#' lines.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path
from typing import Dict, Iterable, Optional

import numpy as np
import pandas as pd

from .market import TradingCalendar
from .params import DataError

__all__ = [
    "ReturnSeries",
    "config_hash",
    "read_config",
    "write_config",
    "write_dataframe",
    "read_dataframe",
    "read_return_series",
    "write_return_series",
    "read_option_chain",
    "read_rates",
    "read_calendar",
    "read_contracts",
]


@dataclass
class ReturnSeries:
    """Dated log-return history: strictly increasing dates, finite values."""

    dates: list
    returns: np.ndarray

    def __post_init__(self) -> None:
        self.returns = np.asarray(self.returns, dtype=float)
        if len(self.dates) != self.returns.size:
            raise DataError("dates and returns must have equal length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        if not np.all(np.isfinite(self.returns)):
            raise DataError("returns must be finite")

    def __len__(self) -> int:
        return self.returns.size


def config_hash(config: Dict) -> str:
    """Stable short hash of a flat key-value configuration."""
    canon = "\n".join(f"{k}={config[k]}" for k in sorted(config))
    return hashlib.sha1(canon.encode()).hexdigest()[:12]


def read_config(path) -> Dict[str, str]:
    """Flat key=value text file; '#' lines and blanks ignored."""
    out: Dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"malformed config line: {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_config(path, config: Dict, meta: Optional[Dict] = None) -> None:
    lines = []
    if meta:
        lines.append("# " + " ".join(f"{k}={v}" for k, v in meta.items()))
    lines.extend(f"{k}={config[k]}" for k in config)
    Path(path).write_text("\n".join(lines) + "\n")


def _header_line(meta: Dict) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n"


def write_dataframe(path, df: pd.DataFrame, meta: Dict) -> None:
    """CSV with a provenance comment header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(_header_line(meta))
        df.to_csv(fh, index=False)


def read_dataframe(path, parse_dates: Iterable[str] = ()) -> pd.DataFrame:
    df = pd.read_csv(path, comment="#")
    for col in parse_dates:
        df[col] = pd.to_datetime(df[col]).dt.date
    return df


def _parse_date(s) -> date:
    if isinstance(s, date) and not isinstance(s, datetime):
        return s
    return datetime.strptime(str(s), "%Y-%m-%d").date()


def read_return_series(path) -> ReturnSeries:
    """CSV with header date,log_return and ISO dates."""
    df = read_dataframe(path)
    required = {"date", "log_return"}
    if not required.issubset(df.columns):
        raise DataError(f"return series needs columns {sorted(required)}")
    dates = [_parse_date(d) for d in df["date"]]
    return ReturnSeries(dates=dates, returns=df["log_return"].to_numpy(float))


def write_return_series(path, series: ReturnSeries, meta: Dict) -> None:
    df = pd.DataFrame({"date": [d.isoformat() for d in series.dates],
                       "log_return": series.returns})
    write_dataframe(path, df, meta)


def read_option_chain(path) -> pd.DataFrame:
    """CSV: quote_date,expiry,strike,cp_flag,price,underlying_close."""
    df = read_dataframe(path, parse_dates=("quote_date", "expiry"))
    required = {"quote_date", "expiry", "strike", "cp_flag", "price",
                "underlying_close"}
    missing = required - set(df.columns)
    if missing:
        raise DataError(f"option chain missing columns {sorted(missing)}")
    return df


def read_rates(path, allow_negative: bool = False) -> pd.DataFrame:
    """CSV: date,r1m,r3m,r6m,r12m -> frame indexed by date.

    Negative rates are rejected unless explicitly allowed.
    """
    df = read_dataframe(path, parse_dates=("date",))
    required = {"date", "r1m", "r3m", "r6m", "r12m"}
    missing = required - set(df.columns)
    if missing:
        raise DataError(f"rates file missing columns {sorted(missing)}")
    tenors = df[["r1m", "r3m", "r6m", "r12m"]]
    if not allow_negative and (tenors < 0).any().any():
        raise DataError("negative rates present; pass allow_negative=True "
                        "(--allow-negative-rates) to accept them")
    return df.set_index("date")


def read_calendar(path) -> TradingCalendar:
    """One ISO trading date per line."""
    dates = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            dates.append(_parse_date(line))
    return TradingCalendar(dates)


def read_contracts(path) -> pd.DataFrame:
    """CSV: quote_date,expiry,strike,S_prev (optional market_price)."""
    df = read_dataframe(path, parse_dates=("quote_date", "expiry"))
    required = {"quote_date", "expiry", "strike", "S_prev"}
    missing = required - set(df.columns)
    if missing:
        raise DataError(f"contracts file missing columns {sorted(missing)}")
    return df

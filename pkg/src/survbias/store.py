"""Canonical record store: one row per (date, symbol, series) observation.

The on-disk format is plain CSV with a fixed header so any language can
read it:

    DATE,SYMBOL,SERIES,OPEN,HIGH,LOW,CLOSE,TOTTRDQTY,TOTTRDVAL,ISIN,OUTLIER

DATE is YYYY-MM-DD, missing ISIN is an empty field, OUTLIER is 0/1.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

STORE_COLUMNS = [
    "DATE", "SYMBOL", "SERIES", "OPEN", "HIGH", "LOW", "CLOSE",
    "TOTTRDQTY", "TOTTRDVAL", "ISIN", "OUTLIER",
]

STORE_HEADER = ",".join(STORE_COLUMNS)


@dataclass
class TradingRecord:
    """One standardized equity observation."""

    date: date
    symbol: str
    series: str
    open: Optional[float]
    high: Optional[float]
    low: Optional[float]
    close: float
    traded_qty: float
    traded_value: float
    isin: str = ""
    outlier_flag: bool = False

    def validate(self) -> None:
        """Raise ValueError if the record violates its own invariants."""
        if not self.symbol:
            raise ValueError("symbol must be non-empty")
        if not self.close > 0:
            raise ValueError(f"close must be positive, got {self.close}")
        if self.traded_qty < 0:
            raise ValueError(f"traded_qty must be >= 0, got {self.traded_qty}")
        if self.traded_value < 0:
            raise ValueError(f"traded_value must be >= 0, got {self.traded_value}")
        prices = (self.open, self.high, self.low, self.close)
        if all(p is not None for p in prices):
            if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
                raise ValueError(
                    f"OHLC sanity violated: O={self.open} H={self.high} "
                    f"L={self.low} C={self.close}"
                )


def records_to_frame(records: list[TradingRecord]) -> pd.DataFrame:
    """Build a store frame from TradingRecord objects (mainly for tests)."""
    rows = [
        (pd.Timestamp(r.date), r.symbol, r.series, r.open, r.high, r.low,
         r.close, r.traded_qty, r.traded_value, r.isin, int(r.outlier_flag))
        for r in records
    ]
    return pd.DataFrame(rows, columns=STORE_COLUMNS)


def empty_frame() -> pd.DataFrame:
    df = pd.DataFrame(columns=STORE_COLUMNS)
    df["DATE"] = pd.to_datetime(df["DATE"])
    return df


def save_store(df: pd.DataFrame, path: str | Path) -> None:
    """Write the canonical store CSV with deterministic formatting."""
    out = df.copy()
    out["DATE"] = pd.to_datetime(out["DATE"]).dt.strftime("%Y-%m-%d")
    # Quantities are share counts; keep them integral when they are.
    qty = pd.to_numeric(out["TOTTRDQTY"], errors="coerce")
    if qty.notna().all() and (qty == qty.round()).all():
        out["TOTTRDQTY"] = qty.astype("int64")
    out["OUTLIER"] = pd.to_numeric(out["OUTLIER"]).astype("int64")
    out["ISIN"] = out["ISIN"].fillna("")
    out.to_csv(path, index=False, columns=STORE_COLUMNS)


def load_store(path: str | Path) -> pd.DataFrame:
    """Read a canonical store CSV back into a typed frame."""
    df = pd.read_csv(
        path,
        dtype={"SYMBOL": str, "SERIES": str, "ISIN": str},
        parse_dates=["DATE"],
    )
    missing = [c for c in STORE_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"not a canonical store, missing columns: {missing}")
    df["ISIN"] = df["ISIN"].fillna("")
    df["OUTLIER"] = df["OUTLIER"].astype("int64")
    return df


def trading_calendar(df: pd.DataFrame) -> pd.DatetimeIndex:
    """Strictly increasing sequence of dates with at least one record."""
    return pd.DatetimeIndex(np.sort(df["DATE"].unique()))


def close_panel(df: pd.DataFrame) -> pd.DataFrame:
    """Pivot to a (date x symbol) close-price panel, NaN where untraded."""
    return df.pivot_table(index="DATE", columns="SYMBOL", values="CLOSE",
                          aggfunc="first").sort_index()


def qty_panel(df: pd.DataFrame) -> pd.DataFrame:
    """Pivot to a (date x symbol) traded-quantity panel."""
    return df.pivot_table(index="DATE", columns="SYMBOL", values="TOTTRDQTY",
                          aggfunc="first").sort_index()


def last_trade_dates(df: pd.DataFrame) -> pd.Series:
    """Final observation date per symbol."""
    return df.groupby("SYMBOL")["DATE"].max()

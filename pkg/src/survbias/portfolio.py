"""Daily-rebalanced portfolio return series over a stock universe.

Two universes matter here: the fixed survivor basket (the final
constituents held across the whole window) and the complete universe
(whatever the quarter snapshot in effect said at each date). Membership is
piecewise-constant between snapshots, so series are built segment by
segment on vectorized return panels.

No transaction costs, no slippage, full daily rebalancing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .errors import DomainError, EmptyWindow
from .store import close_panel, qty_panel
from .universe import ConstituentSnapshot

SURVIVOR_ONLY = "survivor"
COMPLETE = "complete"

EQUAL_WEIGHT = "equal"
VALUE_WEIGHT = "value"


def stock_daily_return(p_today: float, p_prev: float) -> float:
    """Simple daily return from two consecutive closes."""
    if p_prev <= 0 or p_today <= 0:
        raise DomainError("prices must be positive")
    return (p_today - p_prev) / p_prev


@dataclass(frozen=True)
class UniverseSpec:
    """Which stocks the portfolio may hold on each date."""

    kind: str
    members: Optional[frozenset] = None
    snapshots: Optional[tuple] = None

    @classmethod
    def survivor_only(cls, members) -> "UniverseSpec":
        return cls(kind=SURVIVOR_ONLY, members=frozenset(members))

    @classmethod
    def complete(cls, snapshots: list[ConstituentSnapshot]) -> "UniverseSpec":
        dates = [s.date for s in snapshots]
        if not snapshots or dates != sorted(dates):
            raise DomainError("need date-sorted, non-empty snapshots")
        return cls(kind=COMPLETE, snapshots=tuple(snapshots))

    def segments(self, dates: pd.DatetimeIndex):
        """Split `dates` into runs with constant membership.

        A snapshot governs from the first trading date after it through
        the next snapshot date inclusive; the first snapshot also covers
        any earlier dates, matching a basket fixed before the window.
        """
        if self.kind == SURVIVOR_ONLY:
            return [(dates, self.members)]
        snaps = self.snapshots
        out = []
        for i, snap in enumerate(snaps):
            # snapshot i governs (s_i, s_{i+1}]; the first also backfills
            # every earlier date and the last extends to the window end
            mask = np.ones(len(dates), dtype=bool)
            if i > 0:
                mask &= dates > snap.date
            if i + 1 < len(snaps):
                mask &= dates <= snaps[i + 1].date
            seg = dates[mask]
            if len(seg):
                out.append((seg, snap.members))
        return out


@dataclass(frozen=True)
class WeightScheme:
    kind: str = EQUAL_WEIGHT
    clip_bounds: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in (EQUAL_WEIGHT, VALUE_WEIGHT):
            raise DomainError(f"unknown weight scheme {self.kind!r}")
        if self.clip_bounds is not None:
            lo, hi = self.clip_bounds
            if not lo < 0 < hi:
                raise DomainError("clip bounds must straddle zero")

    @classmethod
    def equal(cls, clip_bounds=None) -> "WeightScheme":
        return cls(kind=EQUAL_WEIGHT, clip_bounds=clip_bounds)

    @classmethod
    def value(cls, clip_bounds=None) -> "WeightScheme":
        return cls(kind=VALUE_WEIGHT, clip_bounds=clip_bounds)


@dataclass
class ReturnSeries:
    """Aligned dates, daily returns, and contributing-stock counts."""

    dates: pd.DatetimeIndex
    returns: np.ndarray
    n_active: np.ndarray
    label: str = ""
    zero_active_dates: tuple = ()
    ew_fallback_dates: tuple = ()

    def __post_init__(self):
        if not (len(self.dates) == len(self.returns) == len(self.n_active)):
            raise DomainError("dates, returns, n_active must align")
        if np.any(self.returns <= -1.0):
            raise DomainError("portfolio return at or below -100%")

    def __len__(self):
        return len(self.dates)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "DATE": self.dates,
            "RETURN": self.returns,
            "N_ACTIVE": self.n_active,
        })

    def save_csv(self, path: str | Path) -> None:
        df = self.to_frame()
        df["DATE"] = df["DATE"].dt.strftime("%Y-%m-%d")
        # %.17g plus round_trip parsing makes save/load bit-exact
        df.to_csv(path, index=False, float_format="%.17g")


def load_series_csv(path: str | Path, label: str = "") -> ReturnSeries:
    df = pd.read_csv(path, parse_dates=["DATE"], float_precision="round_trip")
    return ReturnSeries(dates=pd.DatetimeIndex(df["DATE"]),
                        returns=df["RETURN"].to_numpy(dtype=float),
                        n_active=df["N_ACTIVE"].to_numpy(dtype=int),
                        label=label)


def _window_calendar(records: pd.DataFrame, start, end) -> pd.DatetimeIndex:
    cal = pd.DatetimeIndex(np.sort(records["DATE"].unique()))
    if start is not None:
        cal = cal[cal >= pd.Timestamp(start)]
    if end is not None:
        cal = cal[cal <= pd.Timestamp(end)]
    return cal


def build_series(records: pd.DataFrame, universe: UniverseSpec,
                 scheme: WeightScheme, start=None, end=None,
                 label: str = "") -> ReturnSeries:
    """Portfolio return for every trading date after the window's first.

    A member contributes on date d only when it has closes on both d and
    the immediately previous trading date; anything staler is treated as
    missing, never carried forward. Dates where no member is computable
    yield return 0 and are flagged.
    """
    cal = _window_calendar(records, start, end)
    if len(cal) < 2:
        raise EmptyWindow(f"window has {len(cal)} trading dates, need >= 2")
    window = records.loc[records["DATE"].isin(cal)]
    closes = close_panel(window)
    rets = (closes / closes.shift(1) - 1.0).iloc[1:]
    out_dates = cal[1:]

    prev_proxy = None
    if scheme.kind == VALUE_WEIGHT:
        prev_proxy = (closes * qty_panel(window)).shift(1).iloc[1:]

    ret_out = pd.Series(0.0, index=out_dates)
    n_out = pd.Series(0, index=out_dates, dtype=int)
    ew_fallback: list = []
    for seg_dates, members in universe.segments(out_dates):
        cols = sorted(set(members) & set(rets.columns))
        block = rets.loc[seg_dates, cols]
        if scheme.clip_bounds is not None:
            block = block.clip(*scheme.clip_bounds)
        have = block.notna()
        active = have.sum(axis=1)
        if scheme.kind == EQUAL_WEIGHT:
            agg = block.mean(axis=1)
        else:
            w = prev_proxy.loc[seg_dates, cols].where(have, 0.0).fillna(0.0)
            wsum = w.sum(axis=1)
            agg = block.fillna(0.0).mul(w).sum(axis=1) / wsum.where(wsum > 0)
            # all computable members can carry zero proxy (zero-volume
            # prior day); fall back to equal weight rather than drop the day
            fb = (wsum <= 0) & (active > 0)
            if fb.any():
                agg[fb] = block.loc[fb].mean(axis=1)
                ew_fallback.extend(seg_dates[fb])
        ret_out.loc[seg_dates] = agg.where(active > 0, 0.0).fillna(0.0)
        n_out.loc[seg_dates] = active
    return ReturnSeries(
        dates=out_dates,
        returns=ret_out.to_numpy(),
        n_active=n_out.to_numpy(),
        label=label or universe.kind,
        zero_active_dates=tuple(out_dates[n_out.to_numpy() == 0]),
        ew_fallback_dates=tuple(ew_fallback),
    )


def portfolio_return(date, universe: UniverseSpec, scheme: WeightScheme,
                     records: pd.DataFrame) -> tuple[float, int]:
    """Single-date portfolio return and contributing-stock count."""
    date = pd.Timestamp(date)
    cal = _window_calendar(records, None, date)
    if len(cal) < 2 or cal[-1] != date:
        raise EmptyWindow(f"{date.date()} has no previous trading date")
    series = build_series(records, universe, scheme,
                          start=cal[-2], end=date)
    return float(series.returns[0]), int(series.n_active[0])

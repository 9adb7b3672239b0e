"""Reconstruct quarterly index membership from the canonical store.

Membership is recovered by ranking every traded symbol on each quarter-end
trading date by a market-cap proxy (close times traded quantity) and taking
a fixed rank band. Per-symbol membership timelines and removal
classifications are derived from the snapshot sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from .errors import DomainError, EmptyDate

SURVIVOR = "Survivor"
DELISTED = "Delisted"
GRADUATED = "Graduated"
DEMOTED = "Demoted"
CLASSIFICATIONS = (SURVIVOR, DELISTED, GRADUATED, DEMOTED)

DEFAULT_LOW_RANK = 151
DEFAULT_HIGH_RANK = 400
DEAD_THRESHOLD_DAYS = 365
ACTIVITY_WINDOW_DAYS = 90


def market_cap_proxy(close, traded_qty):
    """Tradable-size proxy: close price times total traded quantity.

    Works elementwise on scalars or array-likes.
    """
    close = np.asarray(close, dtype=float)
    qty = np.asarray(traded_qty, dtype=float)
    if np.any(close <= 0):
        raise DomainError("close must be positive")
    if np.any(qty < 0):
        raise DomainError("traded quantity must be non-negative")
    out = close * qty
    return float(out) if out.ndim == 0 else out


@dataclass
class SnapshotRanking:
    """All symbols traded on one date, ordered by descending proxy."""

    date: pd.Timestamp
    frame: pd.DataFrame  # columns RANK, SYMBOL, PROXY

    def __len__(self):
        return len(self.frame)


@dataclass
class ConstituentSnapshot:
    date: pd.Timestamp
    members: frozenset

    def __len__(self):
        return len(self.members)


@dataclass
class MembershipInterval:
    """One symbol's presence across the snapshot sequence."""

    symbol: str
    entry: pd.Timestamp
    exit: pd.Timestamp
    snapshot_count: int
    classification: Optional[str] = None
    last_trade: Optional[pd.Timestamp] = None


def rank_snapshot(records: pd.DataFrame, date) -> SnapshotRanking:
    """Rank every symbol trading on `date` by descending proxy.

    Ties break by ascending symbol so the result is independent of input
    row order.
    """
    date = pd.Timestamp(date)
    day = records.loc[records["DATE"] == date]
    if day.empty:
        raise EmptyDate(f"no records on {date.date()}")
    frame = pd.DataFrame({
        "SYMBOL": day["SYMBOL"].to_numpy(),
        "PROXY": market_cap_proxy(day["CLOSE"], day["TOTTRDQTY"]),
    })
    frame = frame.sort_values(["PROXY", "SYMBOL"],
                              ascending=[False, True], kind="stable")
    frame.insert(0, "RANK", np.arange(1, len(frame) + 1))
    return SnapshotRanking(date=date, frame=frame.reset_index(drop=True))


def select_band(ranking: SnapshotRanking,
                low_rank: int = DEFAULT_LOW_RANK,
                high_rank: int = DEFAULT_HIGH_RANK) -> ConstituentSnapshot:
    """Symbols at 1-based ranks low..high inclusive, truncated if short."""
    if low_rank < 1 or high_rank < low_rank:
        raise DomainError(f"bad rank band [{low_rank}, {high_rank}]")
    picked = ranking.frame.iloc[low_rank - 1:high_rank]
    return ConstituentSnapshot(date=ranking.date,
                               members=frozenset(picked["SYMBOL"]))


def quarter_end_dates(calendar: Iterable[pd.Timestamp]) -> list[pd.Timestamp]:
    """Last trading date inside each calendar quarter that has any."""
    idx = pd.DatetimeIndex(sorted(set(pd.DatetimeIndex(calendar))))
    if len(idx) == 0:
        return []
    s = idx.to_series()
    return list(s.groupby(idx.to_period("Q")).max())


def build_snapshots(records: pd.DataFrame,
                    low_rank: int = DEFAULT_LOW_RANK,
                    high_rank: int = DEFAULT_HIGH_RANK,
                    dates: Optional[Iterable] = None,
                    ) -> tuple[list[SnapshotRanking], list[ConstituentSnapshot]]:
    """Rank and band-select on every quarter-end date (or explicit dates)."""
    if dates is None:
        dates = quarter_end_dates(records["DATE"].unique())
    else:
        dates = [pd.Timestamp(d) for d in dates]
    rankings = [rank_snapshot(records, d) for d in dates]
    snapshots = [select_band(r, low_rank, high_rank) for r in rankings]
    return rankings, snapshots


def build_timeline(snapshots: list[ConstituentSnapshot],
                   ) -> dict[str, MembershipInterval]:
    """Per-symbol first/last member dates over a date-sorted snapshot list.

    Gaps are retained: a symbol out of the band for one snapshot keeps its
    envelope [entry, exit] but its snapshot_count only counts snapshots
    where it was a member.
    """
    if not snapshots:
        raise DomainError("need at least one snapshot")
    order = [s.date for s in snapshots]
    if order != sorted(order):
        raise DomainError("snapshots must be date-sorted")
    timelines: dict[str, MembershipInterval] = {}
    for snap in snapshots:
        for symbol in snap.members:
            iv = timelines.get(symbol)
            if iv is None:
                timelines[symbol] = MembershipInterval(
                    symbol=symbol, entry=snap.date, exit=snap.date,
                    snapshot_count=1)
            else:
                iv.exit = snap.date
                iv.snapshot_count += 1
    return timelines


def classify_removals(timelines: dict[str, MembershipInterval],
                      records: pd.DataFrame,
                      final_members: frozenset,
                      asof=None,
                      dead_threshold_days: int = DEAD_THRESHOLD_DAYS,
                      ) -> dict[str, MembershipInterval]:
    """Assign each ever-member exactly one classification.

    Survivor: still in the final snapshot. Removed symbols split into
    Delisted (no trade within the dead threshold of asof), then Graduated
    vs Demoted by whether their proxy on their own last trade date sits
    above the median among still-trading removed symbols.
    """
    last_trade = records.groupby("SYMBOL")["DATE"].max()
    asof = pd.Timestamp(asof) if asof is not None else records["DATE"].max()

    # proxy at each symbol's final trade date
    keyed = records.set_index(["SYMBOL", "DATE"])
    removed_live: list[str] = []
    for symbol, iv in timelines.items():
        iv.last_trade = last_trade.get(symbol)
        if symbol in final_members:
            iv.classification = SURVIVOR
        elif iv.last_trade is None or \
                (asof - iv.last_trade).days >= dead_threshold_days:
            iv.classification = DELISTED
        else:
            removed_live.append(symbol)

    if removed_live:
        proxies = {}
        for symbol in removed_live:
            row = keyed.loc[(symbol, timelines[symbol].last_trade)]
            proxies[symbol] = market_cap_proxy(row["CLOSE"], row["TOTTRDQTY"])
        cutoff = float(np.median(list(proxies.values())))
        for symbol in removed_live:
            timelines[symbol].classification = (
                GRADUATED if proxies[symbol] > cutoff else DEMOTED)
    return timelines


@dataclass
class ValidationReport:
    current_match_count: int
    current_list_size: int
    stale_survivors: list = field(default_factory=list)
    inverted_intervals: list = field(default_factory=list)
    mean_exit_age_removed: float = float("nan")
    mean_exit_age_survivor: float = float("nan")

    @property
    def match_fraction(self) -> float:
        return self.current_match_count / self.current_list_size

    @property
    def consistent(self) -> bool:
        staleness_ordered = (
            np.isnan(self.mean_exit_age_removed)
            or self.mean_exit_age_removed > self.mean_exit_age_survivor)
        return (not self.stale_survivors and not self.inverted_intervals
                and staleness_ordered)


def validate_reconstruction(final_snapshot: ConstituentSnapshot,
                            official: Iterable[str],
                            timelines: dict[str, MembershipInterval],
                            asof=None,
                            activity_window_days: int = ACTIVITY_WINDOW_DAYS,
                            ) -> ValidationReport:
    """Compare the final snapshot against the official list and run
    internal consistency checks on the timelines."""
    official = {s.strip().upper() for s in official if s.strip()}
    if not official:
        raise DomainError("official constituent list is empty")
    asof = pd.Timestamp(asof) if asof is not None else final_snapshot.date

    matched = len(final_snapshot.members & official)
    stale = []
    inverted = []
    removed_ages = []
    survivor_ages = []
    for symbol, iv in timelines.items():
        if iv.exit < iv.entry:
            inverted.append(symbol)
        age = (asof - iv.exit).days
        if iv.classification == SURVIVOR:
            survivor_ages.append(age)
            if iv.last_trade is not None and \
                    (asof - iv.last_trade).days > activity_window_days:
                stale.append(symbol)
        else:
            removed_ages.append(age)
    return ValidationReport(
        current_match_count=matched,
        current_list_size=len(official),
        stale_survivors=sorted(stale),
        inverted_intervals=sorted(inverted),
        mean_exit_age_removed=float(np.mean(removed_ages)) if removed_ages
        else float("nan"),
        mean_exit_age_survivor=float(np.mean(survivor_ages)) if survivor_ages
        else float("nan"),
    )


def classification_counts(timelines: dict[str, MembershipInterval]) -> dict:
    counts = {c: 0 for c in CLASSIFICATIONS}
    for iv in timelines.values():
        counts[iv.classification] = counts.get(iv.classification, 0) + 1
    return counts


def timeline_records(timelines: dict[str, MembershipInterval]) -> list[dict]:
    """JSON-ready rows, symbol-sorted for stable output."""
    rows = []
    for symbol in sorted(timelines):
        iv = timelines[symbol]
        rows.append({
            "symbol": iv.symbol,
            "entry": str(iv.entry.date()),
            "exit": str(iv.exit.date()),
            "snapshots": iv.snapshot_count,
            "classification": iv.classification,
            "last_trade": str(iv.last_trade.date())
            if iv.last_trade is not None else None,
        })
    return rows


def save_timeline(timelines: dict[str, MembershipInterval],
                  path: str | Path) -> None:
    Path(path).write_text(json.dumps(timeline_records(timelines), indent=2)
                          + "\n")


def load_timeline(path: str | Path) -> dict[str, MembershipInterval]:
    rows = json.loads(Path(path).read_text())
    out = {}
    for row in rows:
        out[row["symbol"]] = MembershipInterval(
            symbol=row["symbol"],
            entry=pd.Timestamp(row["entry"]),
            exit=pd.Timestamp(row["exit"]),
            snapshot_count=int(row["snapshots"]),
            classification=row.get("classification"),
            last_trade=pd.Timestamp(row["last_trade"])
            if row.get("last_trade") else None,
        )
    return out


def save_snapshot_csv(ranking: SnapshotRanking, path: str | Path) -> None:
    ranking.frame.to_csv(path, index=False,
                         columns=["RANK", "SYMBOL", "PROXY"],
                         float_format="%.2f")


def load_official_list(path: str | Path) -> set[str]:
    """Official constituent list: plain text, one symbol per line."""
    lines = Path(path).read_text().splitlines()
    return {ln.strip().upper() for ln in lines if ln.strip()}

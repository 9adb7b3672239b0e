"""Synthetic market generator with exact ground truth.

The generator maintains an explicit ordering of all living stocks and
derives each day's traded volume from that ordering, so the market-cap
proxy ranking reproduces the intended order exactly: position p gets a
proxy target of (N + 1 - p) * 1e7, and with prices orders of magnitude
below the 1e7 gap, integer-quantity rounding can never swap two ranks.

Membership churn is injected at quarter transitions (delist, graduate,
demote); a designated-survivor subset is guarded so it stays in the band
and forms the final surviving basket. Everything — prices, volumes,
memberships, classifications, and both portfolio return series — is
recorded as ground truth while the files are written, which makes the
generator an end-to-end oracle for the reconstruction pipeline.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DomainError
from .universe import (DEFAULT_HIGH_RANK, DEFAULT_LOW_RANK, DELISTED,
                       DEMOTED, GRADUATED, SURVIVOR, quarter_end_dates)

PROXY_GAP = 1e7
PRICE_FLOOR = 0.05

FILE_HEADER = ("SYMBOL,SERIES,OPEN,HIGH,LOW,CLOSE,LAST,PREVCLOSE,"
               "TOTTRDQTY,TOTTRDVAL,TIMESTAMP,TOTALTRADES,ISIN")

SERIES_KEYS = ("survivor_equal", "complete_equal",
               "survivor_value", "complete_value")


@dataclass
class SynthConfig:
    n_stocks: int = 500
    n_days: int = 504
    seed: int = 42
    start: str = "2020-01-01"
    delist_hazard: float = 0.04
    graduation_rate: float = 0.05
    demotion_rate: float = 0.05
    volatility: float = 0.02
    drift: float = 0.0003
    survivor_premium: float = 0.0002
    n_designated: int = 150
    pre_death_drift: float = -0.03
    pre_death_days: int = 15
    dead_threshold_days: int = 365

    def validate(self) -> None:
        if self.n_stocks <= DEFAULT_HIGH_RANK:
            raise DomainError("need more stocks than the band's high rank")
        for name in ["delist_hazard", "graduation_rate", "demotion_rate"]:
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise DomainError(f"{name} must be in [0, 1]")
        if self.n_days < 2:
            raise DomainError("need at least two days")
        band = DEFAULT_HIGH_RANK - DEFAULT_LOW_RANK + 1
        if not 0 <= self.n_designated <= band:
            raise DomainError("designated survivors must fit in the band")


@dataclass
class TruthSeries:
    dates: pd.DatetimeIndex
    returns: np.ndarray
    n_active: np.ndarray


@dataclass
class GroundTruth:
    config: SynthConfig
    quarter_dates: list
    memberships: dict            # quarter date -> frozenset of symbols
    classifications: dict        # symbol -> classification
    series: dict                 # key -> TruthSeries
    death_dates: dict = field(default_factory=dict)

    @property
    def final_members(self) -> frozenset:
        return self.memberships[self.quarter_dates[-1]]

    @property
    def ever_members(self) -> frozenset:
        out: set = set()
        for members in self.memberships.values():
            out |= members
        return frozenset(out)

    def to_dict(self) -> dict:
        return {
            "config": dict(self.config.__dict__),
            "quarter_dates": [str(d.date()) for d in self.quarter_dates],
            "memberships": {str(d.date()): sorted(m)
                            for d, m in self.memberships.items()},
            "classifications": dict(sorted(self.classifications.items())),
            "death_dates": {s: str(d.date())
                            for s, d in sorted(self.death_dates.items())},
            "series": {
                key: {
                    "dates": [str(d.date()) for d in ts.dates],
                    "returns": [float(r) for r in ts.returns],
                    "n_active": [int(n) for n in ts.n_active],
                } for key, ts in self.series.items()
            },
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _symbol(i: int) -> str:
    return f"SYN{i:04d}"


class _Simulator:
    """Single-seed market simulation; one instance per generate() call."""

    def __init__(self, config: SynthConfig):
        config.validate()
        self.cfg = config
        self.rng = np.random.default_rng(config.seed)
        self.dates = pd.bdate_range(config.start, periods=config.n_days)
        self.quarters = quarter_end_dates(self.dates)
        if len(self.quarters) < 2:
            raise DomainError("window too short for two quarter snapshots")
        self.n = config.n_stocks
        self.lo = DEFAULT_LOW_RANK - 1    # 0-based band slice [lo, hi)
        self.hi = DEFAULT_HIGH_RANK
        self.prices = np.zeros((config.n_days, self.n))
        self.qty = np.zeros((config.n_days, self.n), dtype=np.int64)
        self.alive = np.zeros((config.n_days, self.n), dtype=bool)
        self.death_idx = np.full(self.n, -1, dtype=np.int64)
        self.order = list(self.rng.permutation(self.n))
        band = self.order[self.lo:self.hi]
        picked = self.rng.choice(len(band), size=config.n_designated,
                                 replace=False)
        self.designated = np.zeros(self.n, dtype=bool)
        self.designated[[band[i] for i in picked]] = True
        self.memberships: dict = {}
        # deaths count as delistable only when old enough to look dead
        # at the end of the window, keeping truth and rule-based labels
        # in agreement on clean runs
        self.death_cutoff = self.dates[-1] - pd.Timedelta(
            days=config.dead_threshold_days)

    def _transition(self, next_quarter_end_pos: int, prev_quarter_pos: int):
        """Churn applied on the first day after a quarter end."""
        cfg = self.cfg
        band = [s for s in self.order[self.lo:self.hi]
                if not self.designated[s]]
        headroom = len(self.order) - (self.hi + 10)
        deaths: list[int] = []
        graduates: list[int] = []
        demotes: list[int] = []
        feasible = [t for t in range(prev_quarter_pos + 1,
                                     next_quarter_end_pos)
                    if self.dates[t] <= self.death_cutoff]
        for s in band:
            u = self.rng.random()
            if u < cfg.delist_hazard:
                if feasible and len(deaths) < headroom:
                    deaths.append(s)
                continue
            if u < cfg.delist_hazard + cfg.graduation_rate:
                graduates.append(s)
            elif u < (cfg.delist_hazard + cfg.graduation_rate
                      + cfg.demotion_rate):
                demotes.append(s)
        for s in deaths:
            self.death_idx[s] = feasible[
                int(self.rng.integers(0, len(feasible)))]
        for s in graduates:
            self.order.remove(s)
            self.order.insert(int(self.rng.integers(0, self.lo)), s)
        for s in demotes:
            self.order.remove(s)
            self.order.insert(
                int(self.rng.integers(self.hi, len(self.order) + 1)), s)
        self._guard_designated()

    def _guard_designated(self):
        """Swap drifted designated survivors back into the band."""
        pos = {s: p for p, s in enumerate(self.order)}
        swap_slots = [p for p in range(self.hi - 1, self.lo - 1, -1)
                      if not self.designated[self.order[p]]]
        for s in np.flatnonzero(self.designated):
            p = pos[s]
            if self.lo <= p < self.hi:
                continue
            q = swap_slots.pop()
            other = self.order[q]
            self.order[p], self.order[q] = other, s
            pos[other] = p
            pos[s] = q

    def run(self) -> None:
        cfg = self.cfg
        date_pos = {d: i for i, d in enumerate(self.dates)}
        quarter_pos = [date_pos[q] for q in self.quarters]
        quarter_set = set(quarter_pos)
        initial = np.round(self.rng.uniform(5.0, 500.0, size=self.n), 2)
        for t in range(cfg.n_days):
            if t - 1 in quarter_set:
                qi = quarter_pos.index(t - 1)
                if qi + 1 < len(quarter_pos):
                    self._transition(quarter_pos[qi + 1], t - 1)
            self.order = [s for s in self.order
                          if self.death_idx[s] < 0 or self.death_idx[s] >= t]
            if t == 0:
                self.prices[0] = initial
            else:
                mu = np.full(self.n, cfg.drift)
                mu[self.designated] += cfg.survivor_premium
                dying = self.death_idx >= 0
                in_window = (dying & (t >= self.death_idx - cfg.pre_death_days)
                             & (t <= self.death_idx))
                mu[in_window] = cfg.pre_death_drift
                z = self.rng.standard_normal(self.n)
                step = self.prices[t - 1] * (1 + mu + cfg.volatility * z)
                self.prices[t] = np.maximum(np.round(step, 2), PRICE_FLOOR)
            live = np.array(self.order)
            self.alive[t, live] = True
            targets = (self.n + 1 - np.arange(len(live))) * PROXY_GAP
            self.qty[t, live] = np.maximum(
                1, np.round(targets / self.prices[t, live])).astype(np.int64)
            if t in quarter_set:
                self.memberships[self.dates[t]] = frozenset(
                    _symbol(s) for s in self.order[self.lo:self.hi])

    def classify(self) -> dict:
        """Position-based truth labels once the simulation has ended."""
        ever = set()
        for members in self.memberships.values():
            ever |= {int(s[3:]) for s in members}
        final = {int(s[3:]) for s in self.memberships[self.quarters[-1]]}
        pos = {s: p for p, s in enumerate(self.order)}
        out = {}
        for s in sorted(ever):
            if self.death_idx[s] >= 0:
                label = DELISTED
            elif s in final:
                label = SURVIVOR
            elif pos[s] < self.lo:
                label = GRADUATED
            else:
                label = DEMOTED
            out[_symbol(s)] = label
        return out

    def _series_pair(self, members_for) -> tuple[TruthSeries, TruthSeries]:
        """Equal- and value-weight truth series in one plain per-day loop,
        independent of the portfolio module's vectorized path."""
        n_out = self.cfg.n_days - 1
        eq_ret = np.zeros(n_out)
        vw_ret = np.zeros(n_out)
        n_active = np.zeros(n_out, dtype=np.int64)
        for t in range(1, self.cfg.n_days):
            idx = members_for(t)
            ok = idx[self.alive[t, idx] & self.alive[t - 1, idx]]
            n_active[t - 1] = len(ok)
            if len(ok) == 0:
                continue
            rets = self.prices[t, ok] / self.prices[t - 1, ok] - 1.0
            eq_ret[t - 1] = float(np.mean(rets))
            w = self.prices[t - 1, ok] * self.qty[t - 1, ok]
            vw_ret[t - 1] = (float(rets @ (w / w.sum()))
                             if w.sum() > 0 else float(np.mean(rets)))
        dates = self.dates[1:]
        return (TruthSeries(dates=dates, returns=eq_ret, n_active=n_active),
                TruthSeries(dates=dates, returns=vw_ret,
                            n_active=n_active.copy()))

    def build_series(self) -> dict:
        final_idx = np.array(sorted(
            int(s[3:]) for s in self.memberships[self.quarters[-1]]))
        member_idx = {
            d: np.array(sorted(int(s[3:]) for s in members))
            for d, members in self.memberships.items()
        }
        q_list = list(self.quarters)

        def survivor_members(t):
            return final_idx

        def complete_members(t):
            # snapshot governs (q_i, q_{i+1}]; first snapshot backfills
            i = bisect.bisect_left(q_list, self.dates[t])
            return member_idx[q_list[max(i - 1, 0)]]

        out = {}
        for prefix, members_for in [("survivor", survivor_members),
                                    ("complete", complete_members)]:
            eq, vw = self._series_pair(members_for)
            out[f"{prefix}_equal"] = eq
            out[f"{prefix}_value"] = vw
        return out

    def write_files(self, out_dir: Path) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for t, date in enumerate(self.dates):
            stamp = date.strftime("%d%b%Y").upper()
            path = out_dir / f"cm{stamp}bhav.csv"
            label = date.strftime("%d-%b-%Y").upper()
            lines = [FILE_HEADER]
            for s in np.flatnonzero(self.alive[t]):
                c = self.prices[t, s]
                prev = self.prices[t - 1, s] if t > 0 and self.alive[t - 1, s] else c
                q = self.qty[t, s]
                lines.append(
                    f"{_symbol(s)},EQ,{c:.2f},{c:.2f},{c:.2f},{c:.2f},"
                    f"{c:.2f},{prev:.2f},{q},{c * q:.2f},{label},"
                    f"{q // 1000 + 1},INE{s:05d}A01")
            path.write_text("\n".join(lines) + "\n")
            paths.append(path)
        return paths


def generate(config: SynthConfig, out_dir: str | Path) -> GroundTruth:
    """Write daily files and return the matching ground truth."""
    sim = _Simulator(config)
    sim.run()
    sim.write_files(Path(out_dir))
    return GroundTruth(
        config=config,
        quarter_dates=list(sim.quarters),
        memberships=dict(sim.memberships),
        classifications=sim.classify(),
        series=sim.build_series(),
        death_dates={_symbol(s): sim.dates[sim.death_idx[s]]
                     for s in np.flatnonzero(sim.death_idx >= 0)},
    )


@dataclass
class ScoreReport:
    quarter_overlap_pct: dict
    min_overlap_pct: float
    quarters_aligned: bool
    confusion: dict
    series_max_abs_dev: dict
    n_active_match: dict

    def to_dict(self) -> dict:
        return {
            "quarter_overlap_pct": dict(self.quarter_overlap_pct),
            "min_overlap_pct": self.min_overlap_pct,
            "quarters_aligned": self.quarters_aligned,
            "confusion": {k: dict(v) for k, v in self.confusion.items()},
            "series_max_abs_dev": dict(self.series_max_abs_dev),
            "n_active_match": dict(self.n_active_match),
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def score_pipeline(truth: GroundTruth, snapshots, timelines,
                   series_by_key: dict) -> ScoreReport:
    """Compare pipeline outputs against generator bookkeeping.

    snapshots: pipeline ConstituentSnapshot list; timelines: classified
    membership intervals; series_by_key: ReturnSeries per SERIES_KEYS key.
    """
    pipe_members = {s.date: s.members for s in snapshots}
    aligned = set(pipe_members) == set(truth.memberships)
    overlaps = {}
    for date, want in truth.memberships.items():
        got = pipe_members.get(date, frozenset())
        pct = 100.0 * len(got & want) / len(want) if want else 100.0
        overlaps[str(date.date())] = pct

    confusion: dict = {}
    for symbol, want in truth.classifications.items():
        iv = timelines.get(symbol)
        got = iv.classification if iv is not None else "Missing"
        confusion.setdefault(want, {})
        confusion[want][got] = confusion[want].get(got, 0) + 1

    deviations = {}
    active_ok = {}
    for key, ts in truth.series.items():
        got = series_by_key.get(key)
        if got is None or len(got.returns) != len(ts.returns):
            deviations[key] = float("inf")
            active_ok[key] = False
            continue
        deviations[key] = float(np.max(np.abs(got.returns - ts.returns))) \
            if len(ts.returns) else 0.0
        active_ok[key] = bool(np.array_equal(got.n_active, ts.n_active))

    return ScoreReport(
        quarter_overlap_pct=overlaps,
        min_overlap_pct=min(overlaps.values()) if overlaps else 100.0,
        quarters_aligned=aligned,
        confusion=confusion,
        series_max_abs_dev=deviations,
        n_active_match=active_ok,
    )

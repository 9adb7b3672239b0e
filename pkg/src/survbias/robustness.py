"""Scenario matrix: rerun the bias measurement under alternative choices.

Each scenario is a pure function of (config, store): rank band, rebalance
frequency, weighting and clipping, delisting terminal-return treatment,
and date subwindow. The baseline scenario goes through exactly the same
code path as the primary pipeline, so their reports match bit for bit.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .bias import BiasReport, compute_bias
from .errors import DomainError, EmptyWindow
from .metrics import PerfMetrics, annualized_return, compute_metrics
from .portfolio import (ReturnSeries, UniverseSpec, WeightScheme,
                        build_series)
from .store import close_panel, qty_panel
from .universe import (DEFAULT_HIGH_RANK, DEFAULT_LOW_RANK, DELISTED,
                       ValidationReport, build_snapshots, build_timeline,
                       classify_removals, quarter_end_dates,
                       validate_reconstruction)

QUARTERLY = "quarterly"
SEMIANNUAL = "semiannual"
SEMIANNUAL_MONTHS = (3, 9)

DAILY_REBALANCE = "daily_rebalance"
STOCK_CUMULATIVE = "stock_cumulative"

SCENARIO_TABLE_COLUMNS = ["LABEL", "SURV_RET", "COMP_RET", "BIAS_PP",
                          "SHARPE_BIAS"]


@dataclass(frozen=True)
class ScenarioConfig:
    label: str = "baseline"
    rank_band: tuple = (DEFAULT_LOW_RANK, DEFAULT_HIGH_RANK)
    rebalance_frequency: str = QUARTERLY
    weighting: WeightScheme = field(default_factory=WeightScheme.equal)
    delist_terminal_return: Optional[float] = None
    subperiod: Optional[tuple] = None
    aggregation: str = DAILY_REBALANCE

    def validate(self) -> None:
        low, high = self.rank_band
        if low < 1 or high <= low:
            raise DomainError(f"bad rank band {self.rank_band}")
        if self.rebalance_frequency not in (QUARTERLY, SEMIANNUAL):
            raise DomainError(
                f"unknown frequency {self.rebalance_frequency!r}")
        t = self.delist_terminal_return
        if t is not None and not -1.0 <= t <= 0.0:
            raise DomainError("terminal return must lie in [-1, 0]")
        if self.aggregation not in (DAILY_REBALANCE, STOCK_CUMULATIVE):
            raise DomainError(f"unknown aggregation {self.aggregation!r}")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "rank_band": list(self.rank_band),
            "rebalance_frequency": self.rebalance_frequency,
            "weighting": {
                "kind": self.weighting.kind,
                "clip_bounds": (list(self.weighting.clip_bounds)
                                if self.weighting.clip_bounds else None),
            },
            "delist_terminal_return": self.delist_terminal_return,
            "subperiod": ([str(d) for d in self.subperiod]
                          if self.subperiod else None),
            "aggregation": self.aggregation,
        }

    @classmethod
    def from_dict(cls, blob: dict) -> "ScenarioConfig":
        w = blob.get("weighting", {})
        clip = w.get("clip_bounds")
        cfg = cls(
            label=blob.get("label", "scenario"),
            rank_band=tuple(blob.get("rank_band",
                                     (DEFAULT_LOW_RANK, DEFAULT_HIGH_RANK))),
            rebalance_frequency=blob.get("rebalance_frequency", QUARTERLY),
            weighting=WeightScheme(kind=w.get("kind", "equal"),
                                   clip_bounds=tuple(clip) if clip else None),
            delist_terminal_return=blob.get("delist_terminal_return"),
            subperiod=(tuple(blob["subperiod"])
                       if blob.get("subperiod") else None),
            aggregation=blob.get("aggregation", DAILY_REBALANCE),
        )
        cfg.validate()
        return cfg


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    survivor_metrics: PerfMetrics
    complete_metrics: PerfMetrics
    bias_report: BiasReport
    survivor_series: Optional[ReturnSeries] = None
    complete_series: Optional[ReturnSeries] = None
    validation: Optional[ValidationReport] = None

    @property
    def bias_pp(self) -> float:
        return (self.survivor_metrics.annualized_return
                - self.complete_metrics.annualized_return) * 100.0

    @property
    def sharpe_bias(self) -> float:
        return self.survivor_metrics.sharpe - self.complete_metrics.sharpe

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "survivor": self.survivor_metrics.to_dict(),
            "complete": self.complete_metrics.to_dict(),
            "bias": self.bias_report.to_dict(),
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def snapshot_dates_for(records: pd.DataFrame, frequency: str) -> list:
    dates = quarter_end_dates(records["DATE"].unique())
    if frequency == SEMIANNUAL:
        dates = [d for d in dates if d.month in SEMIANNUAL_MONTHS]
    if not dates:
        raise EmptyWindow(f"no snapshot dates for frequency {frequency!r}")
    return dates


def apply_delist_treatment(records: pd.DataFrame, timelines: dict,
                           terminal: Optional[float]) -> pd.DataFrame:
    """Append a one-day terminal return for every delisted stock.

    The synthetic close lands on the first trading date after the stock's
    last trade, so disappearance costs the portfolio `terminal` instead of
    being silently free. terminal -1.0 drives the stock's wealth to zero;
    the portfolio return stays above -1 because the stock's weight is
    below 1.
    """
    if terminal is None:
        return records
    if not -1.0 <= terminal <= 0.0:
        raise DomainError("terminal return must lie in [-1, 0]")
    cal = np.sort(records["DATE"].unique())
    closes = records.set_index(["SYMBOL", "DATE"])["CLOSE"]
    rows = []
    for symbol, iv in timelines.items():
        if iv.classification != DELISTED or iv.last_trade is None:
            continue
        pos = int(np.searchsorted(cal, np.datetime64(iv.last_trade),
                                  side="right"))
        if pos >= len(cal):
            continue
        last_close = float(closes.loc[(symbol, iv.last_trade)])
        rows.append({
            "DATE": pd.Timestamp(cal[pos]),
            "SYMBOL": symbol,
            "SERIES": "EQ",
            "OPEN": np.nan, "HIGH": np.nan, "LOW": np.nan,
            "CLOSE": last_close * (1.0 + terminal),
            "TOTTRDQTY": 0.0,
            "TOTTRDVAL": 0.0,
            "ISIN": "",
            "OUTLIER": 0,
        })
    if not rows:
        return records
    treated = pd.concat([records, pd.DataFrame(rows)], ignore_index=True)
    return treated.sort_values(["DATE", "SYMBOL"],
                               kind="stable").reset_index(drop=True)


def _stock_cumulative_metrics(records: pd.DataFrame, symbols,
                              scheme: WeightScheme, start, end,
                              windows: Optional[dict] = None) -> PerfMetrics:
    """Alternate aggregation: compound each stock first, weight the
    compounded returns once. Produces period totals only, so the
    path-dependent metrics are undefined here."""
    closes = close_panel(records)
    if start is not None:
        closes = closes.loc[closes.index >= pd.Timestamp(start)]
    if end is not None:
        closes = closes.loc[closes.index <= pd.Timestamp(end)]
    if len(closes) < 2:
        raise EmptyWindow("window too short")
    rets = closes / closes.shift(1) - 1.0
    if scheme.clip_bounds is not None:
        rets = rets.clip(*scheme.clip_bounds)
    proxies = closes * qty_panel(records).reindex(index=closes.index)
    cums, weights = [], []
    for symbol in sorted(set(symbols) & set(closes.columns)):
        r = rets[symbol]
        if windows and symbol in windows:
            lo, hi = windows[symbol]
            # strict lower bound: the return on the entry date itself
            # accrued before membership took effect
            if lo is not None:
                r = r.loc[r.index > lo]
            if hi is not None:
                r = r.loc[r.index <= hi]
        r = r.dropna()
        if r.empty:
            continue
        cums.append(float(np.prod(1.0 + r.to_numpy()) - 1.0))
        if scheme.kind == "value":
            first = proxies[symbol].dropna()
            weights.append(float(first.iloc[0]) if len(first) else 0.0)
        else:
            weights.append(1.0)
    if not cums:
        raise EmptyWindow("no stock has data in the window")
    w = np.asarray(weights)
    w = np.full(len(cums), 1.0 / len(cums)) if w.sum() <= 0 else w / w.sum()
    total = float(np.asarray(cums) @ w)
    n_days = len(closes) - 1
    return PerfMetrics(
        cumulative_return=total,
        annualized_return=annualized_return(total, n_days),
        sharpe=float("nan"), max_drawdown=float("nan"),
        annualized_volatility=float("nan"), n_days=n_days)


def run_scenario(records: pd.DataFrame, config: ScenarioConfig,
                 official=None, dead_threshold_days: int = 365,
                 ) -> ScenarioResult:
    """Full reconstruct-backtest-compare pass under one configuration."""
    config.validate()
    low, high = config.rank_band
    dates = snapshot_dates_for(records, config.rebalance_frequency)
    _, snaps = build_snapshots(records, low, high, dates=dates)
    timelines = build_timeline(snaps)
    classify_removals(timelines, records, snaps[-1].members,
                      dead_threshold_days=dead_threshold_days)
    start, end = config.subperiod if config.subperiod else (None, None)
    treated = apply_delist_treatment(records, timelines,
                                     config.delist_terminal_return)

    survivor = UniverseSpec.survivor_only(snaps[-1].members)
    complete = UniverseSpec.complete(snaps)
    surv_series = comp_series = None
    if config.aggregation == STOCK_CUMULATIVE:
        # member windows follow the same effectivity rule as the daily
        # mode: first snapshot backfills, final snapshot extends to the
        # window end, and a removed stock stays through the first
        # snapshot after its exit
        snap_dates = [s.date for s in snaps]
        windows = {}
        for symbol, iv in timelines.items():
            lo = None if iv.entry == snap_dates[0] else iv.entry
            if iv.exit == snap_dates[-1]:
                hi = None
            else:
                hi = snap_dates[bisect.bisect_right(snap_dates, iv.exit)]
            windows[symbol] = (lo, hi)
        m_surv = _stock_cumulative_metrics(
            treated, snaps[-1].members, config.weighting, start, end)
        m_comp = _stock_cumulative_metrics(
            treated, set(timelines), config.weighting, start, end,
            windows=windows)
    else:
        surv_series = build_series(treated, survivor, config.weighting,
                                   start, end, label="survivor")
        comp_series = build_series(treated, complete, config.weighting,
                                   start, end, label="complete")
        m_surv = compute_metrics(surv_series.returns)
        m_comp = compute_metrics(comp_series.returns)

    report = compute_bias(m_surv, m_comp)
    validation = None
    if official is not None:
        validation = validate_reconstruction(snaps[-1], official, timelines)
    return ScenarioResult(config=config, survivor_metrics=m_surv,
                          complete_metrics=m_comp, bias_report=report,
                          survivor_series=surv_series,
                          complete_series=comp_series,
                          validation=validation)


def default_scenarios() -> list[ScenarioConfig]:
    """The standard sweep: frequency, bands, weighting, terminals."""
    clip = (-0.5, 1.0)
    out = [
        ScenarioConfig(label="baseline"),
        ScenarioConfig(label="semiannual", rebalance_frequency=SEMIANNUAL),
        ScenarioConfig(label="band_101_350", rank_band=(101, 350)),
        ScenarioConfig(label="band_201_450", rank_band=(201, 450)),
        ScenarioConfig(label="equal_weight_clipped",
                       weighting=WeightScheme.equal(clip)),
        ScenarioConfig(label="value_weight_clipped",
                       weighting=WeightScheme.value(clip)),
        ScenarioConfig(label="stock_cumulative_vw_clipped",
                       weighting=WeightScheme.value(clip),
                       aggregation=STOCK_CUMULATIVE),
    ]
    for terminal in (-0.50, -0.75, -1.00):
        out.append(ScenarioConfig(label=f"delist_{terminal:+.2f}",
                                  delist_terminal_return=terminal))
    return out


def load_scenarios(path: str | Path) -> list[ScenarioConfig]:
    blobs = json.loads(Path(path).read_text())
    if not isinstance(blobs, list):
        raise DomainError("scenario file must hold a JSON array")
    return [ScenarioConfig.from_dict(blob) for blob in blobs]


def scenario_table(results: list[ScenarioResult]) -> pd.DataFrame:
    rows = [{
        "LABEL": r.config.label,
        "SURV_RET": r.survivor_metrics.annualized_return,
        "COMP_RET": r.complete_metrics.annualized_return,
        "BIAS_PP": r.bias_pp,
        "SHARPE_BIAS": r.sharpe_bias,
    } for r in results]
    return pd.DataFrame(rows, columns=SCENARIO_TABLE_COLUMNS)


def save_scenario_table(table: pd.DataFrame, path: str | Path) -> None:
    table.to_csv(path, index=False, float_format="%.6f")


def year_windows(records: pd.DataFrame) -> list[tuple]:
    """Calendar years clipped to the data range; partial years labeled."""
    first, last = records["DATE"].min(), records["DATE"].max()
    out = []
    for year in range(first.year, last.year + 1):
        lo = max(first, pd.Timestamp(year=year, month=1, day=1))
        hi = min(last, pd.Timestamp(year=year, month=12, day=31))
        partial = lo > pd.Timestamp(year=year, month=1, day=1) or \
            hi < pd.Timestamp(year=year, month=12, day=31)
        label = f"{year} (partial)" if partial else str(year)
        out.append((label, lo, hi))
    return out


def subperiod_table(records: pd.DataFrame, windows: Optional[list] = None,
                    base: Optional[ScenarioConfig] = None,
                    dead_threshold_days: int = 365,
                    ) -> tuple[pd.DataFrame, dict]:
    """Bias per window (calendar years by default) plus summary stats."""
    base = base or ScenarioConfig()
    windows = windows if windows is not None else year_windows(records)
    rows = []
    for label, lo, hi in windows:
        config = replace(base, label=label,
                         subperiod=(pd.Timestamp(lo), pd.Timestamp(hi)))
        try:
            result = run_scenario(records, config,
                                  dead_threshold_days=dead_threshold_days)
        except EmptyWindow:
            continue
        rows.append({
            "LABEL": label,
            "START": str(pd.Timestamp(lo).date()),
            "END": str(pd.Timestamp(hi).date()),
            "SURV_RET": result.survivor_metrics.annualized_return,
            "COMP_RET": result.complete_metrics.annualized_return,
            "BIAS_PP": result.bias_pp,
            "SHARPE_BIAS": result.sharpe_bias,
            "SURV_VOL": result.survivor_metrics.annualized_volatility,
            "COMP_VOL": result.complete_metrics.annualized_volatility,
        })
    table = pd.DataFrame(rows)
    biases = table["BIAS_PP"].to_numpy() if len(table) else np.array([])
    summary = {
        "n_windows": int(len(table)),
        "median_bias_pp": float(np.median(biases)) if len(biases) else None,
        "std_bias_pp": float(np.std(biases, ddof=1))
        if len(biases) > 1 else None,
        "positive_windows": int(np.sum(biases > 0)),
    }
    return table, summary

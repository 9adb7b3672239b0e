"""Survivorship-bias quantification.

Bias is always survivor minus complete: positive numbers mean the
survivor-only backtest flatters the result. Significance comes from a
one-sided bootstrap on the complete series, and the decomposition
attributes the gap to the three removal categories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .errors import DomainError, WindowMismatch, ZeroVolatility
from .metrics import PerfMetrics, annualized_return, sharpe
from .universe import DELISTED, MembershipInterval

STAT_ANNUAL_RETURN = "annual_return"
STAT_SHARPE = "sharpe"

METRIC_FIELDS = ["cumulative_return", "annualized_return", "sharpe",
                 "max_drawdown", "annualized_volatility"]

REMOVED_CATEGORIES = ("Delisted", "Graduated", "Demoted")


@dataclass
class MetricBias:
    metric: str
    survivor_value: float
    complete_value: float
    absolute_bias: float
    relative_bias_pct: Optional[float]

    def to_dict(self) -> dict:
        return {
            "survivor": self.survivor_value,
            "complete": self.complete_value,
            "absolute": self.absolute_bias,
            "relative_pct": self.relative_bias_pct,
        }


@dataclass
class BootstrapResult:
    statistic: str
    n_resamples: int
    seed: int
    survivor_stat: float
    p_value: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BiasReport:
    metrics: dict
    bootstrap: dict = field(default_factory=dict)
    decomposition: Optional[pd.DataFrame] = None

    def to_dict(self) -> dict:
        out = {"metrics": {k: v.to_dict() for k, v in self.metrics.items()}}
        out["bootstrap"] = {k: v.to_dict() for k, v in self.bootstrap.items()}
        out["decomposition"] = (
            None if self.decomposition is None
            else self.decomposition.to_dict(orient="records"))
        return out

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def compute_bias(survivor: PerfMetrics, complete: PerfMetrics) -> BiasReport:
    """Absolute and relative bias for every metric.

    Relative bias is null when the complete value is exactly zero.
    """
    if survivor.n_days != complete.n_days:
        raise WindowMismatch(
            f"windows differ: {survivor.n_days} vs {complete.n_days} days")
    out = {}
    for name in METRIC_FIELDS:
        s = getattr(survivor, name)
        c = getattr(complete, name)
        absolute = s - c
        relative = absolute / c * 100.0 if c != 0 else None
        out[name] = MetricBias(metric=name, survivor_value=s,
                               complete_value=c, absolute_bias=absolute,
                               relative_bias_pct=relative)
    return BiasReport(metrics=out)


def _resample_statistic(returns: np.ndarray, statistic: str,
                        seed: int, replicate: int) -> float:
    # independent stream per replicate: parallel and serial runs agree
    rng = np.random.default_rng([seed, replicate])
    sample = returns[rng.integers(0, len(returns), size=len(returns))]
    if statistic == STAT_ANNUAL_RETURN:
        cum = float(np.prod(1.0 + sample) - 1.0)
        return annualized_return(cum, len(sample))
    if statistic == STAT_SHARPE:
        try:
            return sharpe(sample)
        except ZeroVolatility:
            return float("nan")
    raise DomainError(f"unknown bootstrap statistic {statistic!r}")


def bootstrap_test(complete_series, survivor_stat: float,
                   statistic: str = STAT_ANNUAL_RETURN,
                   n: int = 1000, seed: int = 0) -> float:
    """One-sided bootstrap p-value.

    Draws n resamples (length T, with replacement) from the complete
    series and reports the fraction whose statistic is at least the
    survivor's. Deterministic in (series, statistic, n, seed).
    """
    returns = np.asarray(getattr(complete_series, "returns", complete_series),
                         dtype=float)
    if n < 1:
        raise DomainError("need at least one resample")
    if len(returns) < 2:
        raise DomainError("series too short to resample")
    stats = np.array([
        _resample_statistic(returns, statistic, seed, j) for j in range(n)
    ])
    exceed = stats >= survivor_stat  # NaN compares False, never counts
    return float(np.mean(exceed))


def run_bootstrap(complete_series, survivor_metrics: PerfMetrics,
                  n: int = 1000, seed: int = 0) -> dict:
    """Bootstrap both headline statistics against the survivor values."""
    out = {}
    for statistic, value in [
        (STAT_ANNUAL_RETURN, survivor_metrics.annualized_return),
        (STAT_SHARPE, survivor_metrics.sharpe),
    ]:
        p = bootstrap_test(complete_series, value, statistic, n, seed)
        out[statistic] = BootstrapResult(
            statistic=statistic, n_resamples=n, seed=seed,
            survivor_stat=value, p_value=p)
    return out


def member_period_return(records: pd.DataFrame,
                         iv: MembershipInterval) -> float:
    """Price ratio over the member period: entry snapshot close to exit
    snapshot close, or to the final trade for delisted stocks."""
    end = iv.last_trade if iv.classification == DELISTED else iv.exit
    own = records.loc[records["SYMBOL"] == iv.symbol]
    closes = own.set_index("DATE")["CLOSE"]
    try:
        return float(closes.loc[end] / closes.loc[iv.entry] - 1.0)
    except KeyError:
        return float("nan")


def decompose(timelines: dict, records: pd.DataFrame) -> pd.DataFrame:
    """Removed-stock table: count, share of removed, mean member-period
    return per removal category."""
    closes = records.set_index(["SYMBOL", "DATE"])["CLOSE"]
    per_category: dict[str, list] = {c: [] for c in REMOVED_CATEGORIES}
    for symbol, iv in timelines.items():
        if iv.classification not in per_category:
            continue
        end = iv.last_trade if iv.classification == DELISTED else iv.exit
        try:
            ret = float(closes.loc[(symbol, end)]
                        / closes.loc[(symbol, iv.entry)] - 1.0)
        except KeyError:
            ret = float("nan")
        per_category[iv.classification].append(ret)
    n_removed = sum(len(v) for v in per_category.values())
    rows = []
    for category in REMOVED_CATEGORIES:
        returns = per_category[category]
        rows.append({
            "CATEGORY": category,
            "COUNT": len(returns),
            "PCT_REMOVED": (100.0 * len(returns) / n_removed
                            if n_removed else 0.0),
            "MEAN_RETURN": float(np.nanmean(returns)) if returns
            else float("nan"),
        })
    return pd.DataFrame(rows, columns=["CATEGORY", "COUNT", "PCT_REMOVED",
                                       "MEAN_RETURN"])


def save_decomposition(table: pd.DataFrame, path: str | Path) -> None:
    table.to_csv(path, index=False, float_format="%.6f")

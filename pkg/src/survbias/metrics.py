"""Performance metrics over daily return series.

All functions are pure; annualization uses the 252-trading-day convention
and sample (T-1) standard deviations. Drawdowns are computed on a wealth
index starting at 1, which stays well-defined even when cumulative return
crosses zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyWindow, ZeroVolatility

TRADING_DAYS_PER_YEAR = 252


def _as_returns(series) -> np.ndarray:
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 1:
        raise DomainError("return series must be one-dimensional")
    return arr


def _sample_std(r: np.ndarray) -> float:
    # a constant series has zero sample variance by definition; computing
    # it numerically leaves ~1e-17 residue that would masquerade as signal
    if np.all(r == r[0]):
        return 0.0
    return float(np.std(r, ddof=1))


def cumulative_return(series) -> float:
    """Compounded growth: product of (1 + r) minus 1. Empty series → 0."""
    r = _as_returns(series)
    if np.any(r <= -1):
        raise DomainError("returns must be greater than -1")
    return float(np.prod(1.0 + r) - 1.0)


def annualized_return(cumulative: float, n_days: int) -> float:
    """Geometric annualization over a window of n_days trading days."""
    if cumulative <= -1:
        raise DomainError("cumulative return must be greater than -1")
    if n_days < 1:
        raise DomainError("window must cover at least one day")
    return float((1.0 + cumulative) ** (TRADING_DAYS_PER_YEAR / n_days) - 1.0)


def sharpe(series, risk_free_daily: float = 0.0) -> float:
    """Annualized mean excess return per unit of daily volatility."""
    r = _as_returns(series)
    if len(r) < 2:
        raise EmptyWindow("sharpe needs at least two observations")
    sd = _sample_std(r)
    if sd == 0.0:
        raise ZeroVolatility("return series has zero sample std")
    excess = float(np.mean(r)) - risk_free_daily
    return excess / sd * math.sqrt(TRADING_DAYS_PER_YEAR)


def max_drawdown(series) -> float:
    """Deepest peak-to-trough loss of the wealth index W_t = prod(1 + r).

    The pre-investment wealth of 1 counts as the first peak, so a series
    of pure losses draws down from the start.
    """
    r = _as_returns(series)
    if len(r) == 0:
        raise EmptyWindow("drawdown needs at least one observation")
    wealth = np.concatenate([[1.0], np.cumprod(1.0 + r)])
    peaks = np.maximum.accumulate(wealth)
    return float(np.min(wealth / peaks - 1.0))


def annualized_volatility(series) -> float:
    """Sample std of daily returns scaled to a 252-day year."""
    r = _as_returns(series)
    if len(r) < 2:
        raise EmptyWindow("volatility needs at least two observations")
    return _sample_std(r) * math.sqrt(TRADING_DAYS_PER_YEAR)


@dataclass
class PerfMetrics:
    cumulative_return: float
    annualized_return: float
    sharpe: float
    max_drawdown: float
    annualized_volatility: float
    n_days: int

    def to_dict(self) -> dict:
        return {
            "cumulative": self.cumulative_return,
            "annual": self.annualized_return,
            "sharpe": self.sharpe,
            "max_drawdown": self.max_drawdown,
            "volatility": self.annualized_volatility,
            "n_days": self.n_days,
        }


def compute_metrics(series, risk_free_daily: float = 0.0) -> PerfMetrics:
    """All five metrics at once.

    Sharpe is NaN for a zero-volatility series instead of raising, so
    degenerate scenario slices still produce a full row.
    """
    r = _as_returns(series)
    cum = cumulative_return(r)
    try:
        sr = sharpe(r, risk_free_daily)
    except ZeroVolatility:
        sr = float("nan")
    return PerfMetrics(
        cumulative_return=cum,
        annualized_return=annualized_return(cum, len(r)),
        sharpe=sr,
        max_drawdown=max_drawdown(r),
        annualized_volatility=annualized_volatility(r),
        n_days=len(r),
    )

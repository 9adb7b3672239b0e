"""Performance metrics against hand-rolled reference implementations."""

import math
import random

import numpy as np
import pytest

from survbias import metrics
from survbias.errors import DomainError, EmptyWindow, ZeroVolatility
from survbias.metrics import (annualized_return, annualized_volatility,
                              compute_metrics, cumulative_return,
                              max_drawdown, sharpe)


# Reference implementations: plain loops, no numpy, no shared code paths.

def ref_cumulative(rs):
    w = 1.0
    for r in rs:
        w *= 1.0 + r
    return w - 1.0


def ref_annualized(cum, n):
    return (1.0 + cum) ** (252.0 / n) - 1.0


def ref_sharpe(rs, rf=0.0):
    n = len(rs)
    m = sum(rs) / n
    var = sum((x - m) ** 2 for x in rs) / (n - 1)
    return (m - rf) / math.sqrt(var) * math.sqrt(252.0)


def ref_max_drawdown(rs):
    w, peak, worst = 1.0, 1.0, 0.0
    for r in rs:
        w *= 1.0 + r
        peak = max(peak, w)
        worst = min(worst, w / peak - 1.0)
    return worst


def ref_volatility(rs):
    n = len(rs)
    m = sum(rs) / n
    var = sum((x - m) ** 2 for x in rs) / (n - 1)
    return math.sqrt(var) * math.sqrt(252.0)


class TestCumulativeReturn:
    def test_compounding(self):
        assert cumulative_return([0.10, 0.10]) == pytest.approx(0.21)

    def test_empty_product(self):
        assert cumulative_return([]) == 0.0

    def test_gain_then_loss(self):
        assert cumulative_return([0.5, -0.5]) == pytest.approx(-0.25)

    def test_total_loss_rejected(self):
        with pytest.raises(DomainError):
            cumulative_return([0.1, -1.0])

    def test_reorder_invariance(self):
        rng = np.random.default_rng(3)
        rs = rng.uniform(-0.05, 0.05, size=40)
        shuffled = rng.permutation(rs)
        assert cumulative_return(rs) == pytest.approx(
            cumulative_return(shuffled), abs=1e-12)


class TestAnnualizedReturn:
    def test_two_years_of_ten_percent(self):
        assert annualized_return(0.21, 504) == pytest.approx(0.10)

    def test_one_year_identity(self):
        assert annualized_return(0.10, 252) == pytest.approx(0.10)

    def test_long_window(self):
        # 754% over a 2,283-day window; published summary figures round
        # the window, so only the formula value itself is exact
        got = annualized_return(7.54, 2283)
        assert got == pytest.approx(0.2671129324201831, abs=1e-12)
        assert got == pytest.approx(0.2617, abs=0.01)

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            annualized_return(-1.0, 10)
        with pytest.raises(DomainError):
            annualized_return(0.1, 0)


class TestSharpe:
    def test_arithmetic(self):
        # mean 0.001, sample std 0.01 exactly
        rs = [0.001 - 0.01, 0.001 + 0.01]
        sd = np.std(rs, ddof=1)
        rs = [0.001 + (r - 0.001) * 0.01 / sd for r in rs]
        assert sharpe(rs) == pytest.approx(0.1 * math.sqrt(252), abs=1e-9)

    def test_zero_mean(self):
        assert sharpe([0.01, -0.01] * 10) == pytest.approx(0.0)

    def test_constant_series_raises(self):
        with pytest.raises(ZeroVolatility):
            sharpe([0.005] * 10)

    def test_too_short(self):
        with pytest.raises(EmptyWindow):
            sharpe([0.01])

    def test_sign_follows_excess_mean(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            rs = rng.normal(rng.uniform(-0.01, 0.01), 0.02, size=30)
            rf = rng.uniform(-0.005, 0.005)
            got = sharpe(rs, rf)
            assert np.sign(got) == np.sign(np.mean(rs) - rf)


class TestMaxDrawdown:
    def test_monotone_gains(self):
        assert max_drawdown([0.01] * 50) == 0.0

    def test_peak_then_half(self):
        assert max_drawdown([1.0, -0.5]) == pytest.approx(-0.5)

    def test_compounding_losses(self):
        assert max_drawdown([-0.1, -0.1]) == pytest.approx(-0.19)

    def test_initial_wealth_is_first_peak(self):
        # loss on day one must register even though no gain preceded it
        assert max_drawdown([-0.2, 0.1]) == pytest.approx(-0.2)

    def test_bounded_below(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            rs = rng.uniform(-0.9, 2.0, size=rng.integers(1, 25))
            assert -1.0 <= max_drawdown(rs) <= 0.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyWindow):
            max_drawdown([])


class TestAnnualizedVolatility:
    def test_constant_series(self):
        assert annualized_volatility([0.01] * 10) == 0.0

    def test_two_points(self):
        assert annualized_volatility([0.0, 0.02]) == pytest.approx(
            0.2245, abs=5e-5)

    def test_daily_std_scaling(self):
        rng = np.random.default_rng(5)
        rs = rng.normal(0, 0.0126, size=5000)
        got = annualized_volatility(rs)
        assert got == pytest.approx(0.0126 * math.sqrt(252), rel=0.05)
        assert got == pytest.approx(0.20, abs=0.02)


class TestScaleConsistency:
    def test_zero_series(self):
        zeros = [0.0] * 20
        assert cumulative_return(zeros) == 0.0
        assert annualized_return(cumulative_return(zeros), 20) == 0.0
        assert annualized_volatility(zeros) == 0.0
        assert max_drawdown(zeros) == 0.0


class TestComputeMetrics:
    def test_fields_consistent(self):
        rng = np.random.default_rng(6)
        rs = rng.normal(0.0005, 0.01, size=300)
        m = compute_metrics(rs)
        assert m.cumulative_return == pytest.approx(cumulative_return(rs))
        assert m.sharpe == pytest.approx(sharpe(rs))
        assert m.max_drawdown == pytest.approx(max_drawdown(rs))
        assert m.n_days == 300
        assert -1.0 <= m.max_drawdown <= 0.0
        assert m.annualized_volatility >= 0.0

    def test_zero_volatility_gives_nan_sharpe(self):
        m = compute_metrics([0.01] * 10)
        assert math.isnan(m.sharpe)
        assert m.cumulative_return == pytest.approx(1.01 ** 10 - 1)

    def test_export_keys(self):
        m = compute_metrics([0.01, -0.005, 0.002])
        assert set(m.to_dict()) == {
            "cumulative", "annual", "sharpe", "max_drawdown", "volatility",
            "n_days"}


class TestAgainstReference:
    def test_random_series_match_loop_oracle(self):
        random.seed(20240817)
        for _ in range(300):
            n = random.randint(2, 20)
            rs = [random.uniform(-0.2, 0.25) for _ in range(n)]
            cum = cumulative_return(rs)
            assert cum == pytest.approx(ref_cumulative(rs), abs=1e-9)
            assert annualized_return(cum, n) == pytest.approx(
                ref_annualized(ref_cumulative(rs), n), abs=1e-9)
            assert max_drawdown(rs) == pytest.approx(
                ref_max_drawdown(rs), abs=1e-9)
            assert annualized_volatility(rs) == pytest.approx(
                ref_volatility(rs), abs=1e-9)
            if ref_volatility(rs) > 0:
                assert sharpe(rs) == pytest.approx(ref_sharpe(rs), abs=1e-9)

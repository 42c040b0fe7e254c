import math
from datetime import date

import numpy as np
import pytest

from wfeval.portfolio import (
    DailyPosition,
    PortfolioConfig,
    apply_turnover_cap,
    backtest,
    cost_sensitivity,
    daily_net_pnl,
    form_weights,
    perturbed_sharpe,
    sharpe_ratio,
)

import oracles
from conftest import weekday_calendar

D = date(2022, 3, 1)


class TestFormWeights:
    def test_ten_names_two_each_side(self):
        scores = {f"T{i}": float(i) for i in range(10)}
        pos = form_weights(scores, PortfolioConfig(p_long=0.2, p_short=0.2), D)
        longs = {t for t, w in pos.weights.items() if w > 0}
        shorts = {t for t, w in pos.weights.items() if w < 0}
        assert longs == {"T8", "T9"} and shorts == {"T0", "T1"}
        assert all(pos.weights[t] == 0.5 for t in longs)
        assert all(pos.weights[t] == -0.5 for t in shorts)

    def test_floor_with_minimum_one(self):
        scores = {f"T{i}": float(i) for i in range(5)}
        pos = form_weights(scores, PortfolioConfig(p_long=0.2, p_short=0.2), D)
        assert pos.n_long == 1
        assert pos.weights["T4"] == 1.0

    def test_matches_top_k_sort_oracle(self):
        rng = np.random.default_rng(0)
        scores = {f"T{i:02d}": float(v) for i, v in enumerate(rng.normal(size=36))}
        config = PortfolioConfig(p_long=0.25, p_short=0.25)
        pos = form_weights(scores, config, D)
        k = max(1, math.floor(0.25 * 36))
        expected_longs = set(sorted(scores, key=lambda t: (-scores[t], t))[:k])
        expected_shorts = set(sorted(scores, key=lambda t: (scores[t], t))[:k])
        assert {t for t, w in pos.weights.items() if w > 0} == expected_longs
        assert {t for t, w in pos.weights.items() if w < 0} == expected_shorts

    def test_all_equal_scores_skipped(self):
        assert form_weights({"A": 1.0, "B": 1.0, "C": 1.0}, PortfolioConfig(), D) is None

    def test_cutoff_tie_lexicographic(self):
        scores = {"A": 1.0, "B": 1.0, "C": 0.0, "D": -1.0, "E": -1.0}
        pos = form_weights(scores, PortfolioConfig(p_long=0.2, p_short=0.2), D)
        assert pos.weights["A"] == 1.0 and pos.weights["B"] == 0.0
        assert pos.weights["D"] == -1.0 and pos.weights["E"] == 0.0

    def test_dollar_neutrality(self):
        rng = np.random.default_rng(1)
        scores = {f"T{i}": float(v) for i, v in enumerate(rng.normal(size=17))}
        pos = form_weights(scores, PortfolioConfig(p_long=0.3, p_short=0.3), D)
        assert sum(pos.weights.values()) == pytest.approx(0.0, abs=1e-12)


class TestTurnoverCap:
    def test_slack_unchanged(self):
        target = DailyPosition(D, {"A": 0.2, "B": -0.2})
        out = apply_turnover_cap(target, {"A": 0.1, "B": -0.1}, cap=1.0)
        assert out.weights == {"A": 0.2, "B": -0.2}
        assert out.turnover == pytest.approx(0.2)

    def test_scaling_hits_cap_exactly(self):
        target = DailyPosition(D, {"A": 1.0, "B": -1.0})
        out = apply_turnover_cap(target, {}, cap=1.0)
        assert out.turnover == pytest.approx(1.0, abs=1e-15)
        assert out.weights == {"A": 0.5, "B": -0.5}

    def test_capped_weights_on_segment(self):
        rng = np.random.default_rng(2)
        prev = {f"T{i}": float(v) for i, v in enumerate(rng.normal(0, 0.1, 8))}
        target_w = {f"T{i}": float(v) for i, v in enumerate(rng.normal(0, 0.1, 8))}
        out = apply_turnover_cap(DailyPosition(D, target_w), prev, cap=0.1)
        for t, w in out.weights.items():
            lo, hi = sorted((prev.get(t, 0.0), target_w.get(t, 0.0)))
            assert lo - 1e-12 <= w <= hi + 1e-12

    def test_neutrality_preserved_by_cap(self):
        prev = {"A": 0.5, "B": 0.5, "C": -0.5, "D": -0.5}
        target = DailyPosition(D, {"A": -0.5, "B": 0.5, "C": 0.5, "D": -0.5})
        out = apply_turnover_cap(target, prev, cap=0.4)
        assert sum(out.weights.values()) == pytest.approx(0.0, abs=1e-15)


class TestDailyNetPnl:
    def test_gross_only(self):
        w = {"A": 0.5, "B": 0.5, "C": -0.5, "D": -0.5}
        r = {"A": 0.01, "B": 0.01, "C": -0.01, "D": -0.01}
        config = PortfolioConfig(cost_bps=10.0, borrow_bps=0.0)
        pnl = daily_net_pnl(w, r, turnover=0.0, config=config, day=D)
        assert pnl.gross == pytest.approx(0.02, abs=1e-15)
        assert pnl.net == pytest.approx(0.02, abs=1e-15)

    def test_trading_cost(self):
        w = {"A": 0.5, "B": 0.5, "C": -0.5, "D": -0.5}
        r = {"A": 0.01, "B": 0.01, "C": -0.01, "D": -0.01}
        config = PortfolioConfig(cost_bps=10.0, borrow_bps=0.0)
        pnl = daily_net_pnl(w, r, turnover=1.0, config=config, day=D)
        assert pnl.net == pytest.approx(0.02 - 0.001, abs=1e-15)

    def test_borrow_only(self):
        w = {"A": 0.5, "B": 0.5, "C": -0.5, "D": -0.5}
        r = {t: 0.0 for t in w}
        config = PortfolioConfig(cost_bps=0.0, borrow_bps=20.0)
        pnl = daily_net_pnl(w, r, turnover=0.0, config=config, day=D)
        assert pnl.net == pytest.approx(-0.002, abs=1e-15)
        assert pnl.short_notional == pytest.approx(1.0)

    def test_missing_return_treated_as_zero(self):
        pnl = daily_net_pnl({"A": 1.0}, {}, 0.0, PortfolioConfig(), D)
        assert pnl.gross == 0.0

    def test_components_sum_to_net(self):
        rng = np.random.default_rng(3)
        w = {f"T{i}": float(v) for i, v in enumerate(rng.normal(0, 0.2, 10))}
        r = {f"T{i}": float(v) for i, v in enumerate(rng.normal(0, 0.01, 10))}
        pnl = daily_net_pnl(w, r, 0.7, PortfolioConfig(), D)
        assert pnl.net == pytest.approx(
            pnl.gross - pnl.trade_cost - pnl.borrow_cost, abs=1e-15
        )


def _scenario(seed=11, days=30, names=12):
    rng = np.random.default_rng(seed)
    cal = weekday_calendar(date(2022, 1, 3), days)
    tickers = [f"T{i:02d}" for i in range(names)]
    scores, rets = {}, {}
    for d in cal:
        scores[d] = {t: float(v) for t, v in zip(tickers, rng.normal(size=names))}
        rets[d] = {t: float(v) for t, v in zip(tickers, rng.normal(0, 0.01, names))}
    return cal, scores, rets


class TestBacktest:
    def test_perfect_foresight_positive_gross(self):
        cal, _, rets = _scenario()
        # scores on day d equal the returns accruing on the NEXT day, so the
        # held book always earns a positive spread
        scores = {d: dict(rets[nxt]) for d, nxt in zip(cal, cal[1:])}
        # uncapped so the held book is exactly yesterday's target
        config = PortfolioConfig(cost_bps=0.0, borrow_bps=0.0, turnover_cap=10.0)
        result = backtest(scores, rets, config)
        for day in result.days[1:]:
            assert day.gross > 0.0

    def test_anti_foresight_mirror_negative(self):
        cal, _, rets = _scenario()
        scores = {d: dict(rets[nxt]) for d, nxt in zip(cal, cal[1:])}
        anti = {d: {t: -v for t, v in per.items()} for d, per in scores.items()}
        config = PortfolioConfig(cost_bps=0.0, borrow_bps=0.0)
        a = backtest(scores, rets, config)
        b = backtest(anti, rets, config)
        for x, y in zip(a.days, b.days):
            assert y.gross == pytest.approx(-x.gross, abs=1e-12)

    def test_matches_day_by_day_oracle(self):
        cal, scores, rets = _scenario(seed=7)
        config = PortfolioConfig(
            p_long=0.25, p_short=0.25, turnover_cap=0.8, cost_bps=12.0, borrow_bps=6.0
        )
        result = backtest(scores, rets, config)
        expected = oracles.backtest_oracle(
            sorted(scores), scores, rets, 0.25, 0.25, 0.8, 12.0, 6.0
        )
        got = [d.net for d in result.days]
        assert len(got) == len(expected)
        for g, e in zip(got, expected):
            assert g == pytest.approx(e, abs=1e-12)

    def test_first_day_charged_from_zero_book(self):
        cal, scores, rets = _scenario()
        config = PortfolioConfig(cost_bps=10.0, borrow_bps=0.0, turnover_cap=5.0)
        result = backtest(scores, rets, config)
        first = result.days[0]
        assert first.gross == 0.0
        assert first.turnover == pytest.approx(2.0)  # full L/S book from zero
        assert first.net == pytest.approx(-2.0 * 10.0 / 10_000.0)

    def test_scoreless_date_carries_book(self):
        cal, scores, rets = _scenario()
        scores[cal[3]] = {}
        result = backtest(scores, rets, PortfolioConfig())
        day = result.days[3]
        assert day.turnover == 0.0
        assert cal[3] in result.skipped_dates

    def test_zero_variance_sharpe_absent(self):
        assert sharpe_ratio([0.01, 0.01, 0.01]) is None
        assert sharpe_ratio([0.01]) is None


class TestCostSensitivity:
    def test_zero_cost_net_equals_gross_sharpe(self):
        cal, scores, rets = _scenario(seed=5)
        config = PortfolioConfig(cost_bps=0.0, borrow_bps=0.0)
        result = backtest(scores, rets, config)
        gross_sharpe = sharpe_ratio([d.gross for d in result.days])
        assert result.sharpe() == pytest.approx(gross_sharpe, abs=1e-12)

    def test_monotone_in_costs(self):
        cal, scores, rets = _scenario(seed=9)
        config = PortfolioConfig(cost_bps=15.0, borrow_bps=5.0)
        result = backtest(scores, rets, config)
        sharpes = [
            perturbed_sharpe(result.days, config, cs, 1.0)
            for cs in (0.5, 1.0, 1.5)
        ]
        assert sharpes[0] > sharpes[1] > sharpes[2]
        borrow_sharpes = [
            perturbed_sharpe(result.days, config, 1.0, bs) for bs in (0.5, 1.0, 1.5)
        ]
        assert borrow_sharpes[0] > borrow_sharpes[1] > borrow_sharpes[2]

    def test_grid_shape(self):
        cal, scores, rets = _scenario(seed=13)
        config = PortfolioConfig()
        result = backtest(scores, rets, config)
        table = cost_sensitivity({"m": result.days}, config)
        assert set(table["m"]) == {"base", "cost-50", "cost+50", "borrow-50", "borrow+50"}
        assert table["m"]["base"] == pytest.approx(result.sharpe())

import math
from datetime import date

import numpy as np
import pytest

from wfeval.features import (
    FeatureBlockPolicy,
    add_cross_sectional_ranks,
    add_market_context,
    apply_standardizer,
    build_feature_frame,
    build_scalar_features,
    drawdown_values,
    ema,
    fit_standardizer,
    kurtosis_values,
    macd_values,
    momentum_values,
    obv_values,
    rolling_beta_values,
    rsi_values,
    skewness_values,
    volatility_values,
    volume_change_values,
)
from wfeval.market_data import AccessRecorder

import oracles
from conftest import panel_from_closes, random_panel


class TestMomentum:
    def test_ten_percent_over_five_days(self):
        closes = np.array([100, 100, 100, 100, 100, 110], dtype=float)
        assert momentum_values(closes, 5)[-1] == pytest.approx(0.10, abs=1e-12)

    def test_constant_prices_zero(self):
        closes = np.full(30, 50.0)
        for n in (2, 5, 10, 20):
            vals = momentum_values(closes, n)
            assert np.allclose(vals[n:], 0.0)
            assert np.isnan(vals[:n]).all()

    def test_geometric_path_closed_form(self):
        t = np.arange(40)
        closes = 100.0 * 1.01**t
        vals = momentum_values(closes, 10)
        assert vals[-1] == pytest.approx(1.01**10 - 1.0, rel=1e-12)


class TestVolatility:
    def test_constant_zero(self):
        vals = volatility_values(np.full(30, 75.0), 20)
        assert vals[-1] == 0.0

    def test_alternating_matches_brute_stdev(self):
        closes = [100.0]
        for i in range(40):
            closes.append(closes[-1] * (1.01 if i % 2 == 0 else 0.99))
        closes = np.array(closes)
        vals = volatility_values(closes, 20)
        rets = [closes[i] / closes[i - 1] - 1.0 for i in range(len(closes) - 20, len(closes))]
        assert vals[-1] == pytest.approx(oracles.stdev_oracle(rets), abs=1e-12)

    def test_insufficient_history_absent(self):
        vals = volatility_values(np.array([100.0, 101.0]), 5)
        assert np.isnan(vals).all()


class TestReversalAndVolume:
    def test_rev_negates_mom(self, tiny_panel):
        frame = build_scalar_features(
            tiny_panel, tiny_panel.tickers, tiny_panel.calendar[0],
            tiny_panel.calendar[-1], FeatureBlockPolicy(),
        )
        mom = frame.column("mom_5")
        rev = frame.column("rev_5")
        assert mom and set(mom) == set(rev)
        for key, v in mom.items():
            assert rev[key] == pytest.approx(-v, abs=0.0)

    def test_volume_change(self):
        vols = np.array([1000, 1000, 1000, 1000, 1000, 1500], dtype=float)
        assert volume_change_values(vols, 5)[-1] == pytest.approx(0.5, abs=1e-15)

    def test_zero_lagged_volume_absent(self):
        vols = np.array([0, 1000, 1000, 1000, 1000, 1500], dtype=float)
        assert np.isnan(volume_change_values(vols, 5)[-1])


class TestDrawdown:
    def test_at_high_is_zero(self):
        closes = np.array([90.0, 95.0, 100.0])
        assert drawdown_values(closes)[-1] == 0.0

    def test_ten_percent_below_peak(self):
        closes = np.array([100.0, 90.0])
        assert drawdown_values(closes)[-1] == pytest.approx(-0.10, abs=1e-12)

    def test_monotone_rising_all_zero(self):
        closes = np.linspace(100, 150, 40)
        assert np.allclose(drawdown_values(closes), 0.0)

    def test_never_positive(self):
        rng = np.random.default_rng(5)
        closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, 200)))
        assert (drawdown_values(closes) <= 1e-15).all()


class TestRsi:
    def test_strictly_rising_is_100(self):
        closes = np.linspace(100, 114, 15)
        assert rsi_values(closes)[-1] == 100.0

    def test_flat_is_50(self):
        assert rsi_values(np.full(20, 42.0))[-1] == 50.0

    def test_strictly_falling_is_0(self):
        closes = np.linspace(114, 100, 15)
        assert rsi_values(closes)[-1] == 0.0

    def test_matches_step_recursion_oracle(self):
        rng = np.random.default_rng(11)
        closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.01, 30)))
        vals = rsi_values(closes)
        for i in range(15, 30):
            assert vals[i] == pytest.approx(oracles.rsi_oracle(list(closes[: i + 1])), abs=1e-10)

    def test_range(self):
        rng = np.random.default_rng(12)
        closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.03, 120)))
        vals = rsi_values(closes)
        ok = vals[~np.isnan(vals)]
        assert ((ok >= 0) & (ok <= 100)).all()


class TestMacd:
    def test_constant_prices_all_zero(self):
        macd, signal, hist = macd_values(np.full(50, 10.0))
        assert np.allclose(macd, 0) and np.allclose(signal, 0) and np.allclose(hist, 0)

    def test_hist_is_macd_minus_signal(self):
        rng = np.random.default_rng(3)
        closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, 80)))
        macd, signal, hist = macd_values(closes)
        assert np.allclose(hist, macd - signal, atol=0.0)

    def test_matches_recursion_oracle(self):
        rng = np.random.default_rng(7)
        closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.015, 60)))
        macd, signal, hist = macd_values(closes)
        o_macd, o_signal, o_hist = oracles.macd_oracle(list(closes))
        assert np.allclose(macd, o_macd, atol=1e-10)
        assert np.allclose(signal, o_signal, atol=1e-10)
        assert np.allclose(hist, o_hist, atol=1e-10)

    def test_ema_seeded_with_first_observation(self):
        vals = np.array([5.0, 6.0])
        out = ema(vals, 9)
        assert out[0] == 5.0
        assert out[1] == pytest.approx(0.2 * 6.0 + 0.8 * 5.0)


class TestCrossSectionalRanks:
    def _frame(self, values_by_ticker, column="x"):
        from wfeval.features import FeatureFrame

        d = date(2020, 1, 6)
        frame = FeatureFrame(tuple(sorted(values_by_ticker)), (d,))
        for t, v in values_by_ticker.items():
            if v is not None:
                frame.set(column, d, t, v)
        return frame, d

    def test_three_values(self):
        frame, d = self._frame({"A": 10.0, "B": 20.0, "C": 30.0})
        add_cross_sectional_ranks(frame, ("x",))
        col = frame.column("x_xrank")
        assert col[(d, "A")] == 0.0
        assert col[(d, "B")] == 0.5
        assert col[(d, "C")] == 1.0

    def test_all_equal_gives_half(self):
        frame, d = self._frame({"A": 7.0, "B": 7.0, "C": 7.0, "D": 7.0})
        add_cross_sectional_ranks(frame, ("x",))
        assert set(frame.column("x_xrank").values()) == {0.5}

    def test_single_value_is_half(self):
        frame, d = self._frame({"A": 3.0, "B": None})
        add_cross_sectional_ranks(frame, ("x",))
        assert frame.column("x_xrank") == {(d, "A"): 0.5}

    def test_matches_sort_oracle(self):
        rng = np.random.default_rng(21)
        vals = {f"T{i}": float(v) for i, v in enumerate(rng.normal(size=11))}
        frame, d = self._frame(vals)
        add_cross_sectional_ranks(frame, ("x",))
        ranks = oracles.rank_with_ties(list(vals.values()))
        m = len(vals)
        for (t, r) in zip(vals, ranks):
            assert frame.column("x_xrank")[(d, t)] == pytest.approx(
                (r - 1) / (m - 1), abs=1e-12
            )

    def test_absent_inputs_yield_absent_ranks(self):
        frame, d = self._frame({"A": 1.0, "B": 2.0, "C": None})
        add_cross_sectional_ranks(frame, ("x",))
        assert (d, "C") not in frame.column("x_xrank")

    def test_range_zero_one(self):
        rng = np.random.default_rng(4)
        vals = {f"T{i}": float(v) for i, v in enumerate(rng.normal(size=30))}
        frame, d = self._frame(vals)
        add_cross_sectional_ranks(frame, ("x",))
        for v in frame.column("x_xrank").values():
            assert 0.0 <= v <= 1.0


class TestMarketContext:
    def test_mean_broadcast(self):
        from wfeval.features import FeatureFrame

        d = date(2020, 1, 6)
        frame = FeatureFrame(("A", "B"), (d,))
        frame.set("mom_5", d, "A", 0.01)
        frame.set("mom_5", d, "B", 0.03)
        add_market_context(frame, ("mom_5",))
        col = frame.column("mkt_mean_mom_5")
        assert col[(d, "A")] == pytest.approx(0.02)
        assert col[(d, "B")] == pytest.approx(0.02)

    def test_single_ticker_context_is_own_value(self):
        from wfeval.features import FeatureFrame

        d = date(2020, 1, 6)
        frame = FeatureFrame(("A",), (d,))
        frame.set("vol_20", d, "A", 0.015)
        add_market_context(frame, ("vol_20",))
        assert frame.column("mkt_mean_vol_20")[(d, "A")] == 0.015

    def test_matches_mean_oracle(self):
        from wfeval.features import FeatureFrame

        rng = np.random.default_rng(9)
        d = date(2020, 1, 6)
        tickers = tuple(f"T{i}" for i in range(21))
        frame = FeatureFrame(tickers, (d,))
        vals = rng.normal(size=21)
        for t, v in zip(tickers, vals):
            frame.set("mom_20", d, t, float(v))
        add_market_context(frame, ("mom_20",))
        expected = sum(vals) / len(vals)
        assert frame.column("mkt_mean_mom_20")[(d, "T0")] == pytest.approx(
            expected, abs=1e-12
        )


class TestStandardize:
    def _frame_one_ticker(self, train_vals, test_vals):
        from wfeval.features import FeatureFrame

        from conftest import weekday_calendar

        cal = weekday_calendar(date(2020, 1, 1), len(train_vals) + len(test_vals))
        frame = FeatureFrame(("A",), tuple(cal))
        for d, v in zip(cal, list(train_vals) + list(test_vals)):
            if v is not None:
                frame.set("x", d, "A", float(v))
        train_end = cal[len(train_vals) - 1]
        return frame, cal, train_end

    def test_train_slice_unit_variance(self):
        frame, cal, train_end = self._frame_one_ticker([1, 2, 3], [])
        stz = fit_standardizer(frame, cal[0], train_end)
        out = apply_standardizer(frame, stz)
        got = [out.column("x")[(d, "A")] for d in cal[:3]]
        assert got == pytest.approx([-1.0, 0.0, 1.0], abs=1e-12)

    def test_constant_training_column_absent(self):
        frame, cal, train_end = self._frame_one_ticker([5, 5, 5], [7])
        stz = fit_standardizer(frame, cal[0], train_end)
        out = apply_standardizer(frame, stz)
        assert out.column("x") == {}
        assert ("A", "x") in stz.excluded

    def test_out_of_sample_application(self):
        frame, cal, train_end = self._frame_one_ticker([1, 2, 3], [4])
        stz = fit_standardizer(frame, cal[0], train_end)
        out = apply_standardizer(frame, stz)
        assert out.column("x")[(cal[3], "A")] == pytest.approx(2.0, abs=1e-12)

    def test_insufficient_training_data_absent(self):
        frame, cal, train_end = self._frame_one_ticker([1], [2, 3])
        stz = fit_standardizer(frame, cal[0], train_end)
        out = apply_standardizer(frame, stz)
        assert out.column("x") == {}

    def test_fit_reads_only_training_dates(self):
        frame, cal, train_end = self._frame_one_ticker([1, 2, 3, 4], [5, 6])
        rec = AccessRecorder()
        fit_standardizer(frame, cal[0], train_end, recorder=rec)
        assert rec.reads > 0
        assert rec.max_date <= train_end

    def test_passthrough_columns_untouched(self):
        frame, cal, train_end = self._frame_one_ticker([1, 2, 3], [])
        frame.set("x_xrank", cal[0], "A", 0.25)
        frame.set("mkt_mean_mom_5", cal[0], "A", 0.77)
        stz = fit_standardizer(frame, cal[0], train_end)
        out = apply_standardizer(frame, stz)
        assert out.column("x_xrank")[(cal[0], "A")] == 0.25
        assert out.column("mkt_mean_mom_5")[(cal[0], "A")] == 0.77


class TestRichBlock:
    def test_gate_is_deterministic_in_universe_size(self):
        policy = FeatureBlockPolicy()
        cols_small = policy.columns_for(11)
        cols_big = policy.columns_for(21)
        assert "mom_60" not in cols_small
        assert "mom_60" in cols_big
        assert "int_mom_5__rsi_14" in cols_big
        assert policy.columns_for(21) == policy.columns_for(36)[:]

    def test_skew_kurt_moments(self):
        rng = np.random.default_rng(2)
        closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.01, 40)))
        sk = skewness_values(closes, 20)[-1]
        ku = kurtosis_values(closes, 20)[-1]
        rets = closes[1:] / closes[:-1] - 1.0
        w = rets[-20:]
        m = w.mean()
        m2 = np.mean((w - m) ** 2)
        assert sk == pytest.approx(np.mean((w - m) ** 3) / m2**1.5, abs=1e-12)
        assert ku == pytest.approx(np.mean((w - m) ** 4) / m2**2 - 3.0, abs=1e-12)

    def test_obv_cumulative(self):
        closes = np.array([100.0, 101.0, 100.5, 102.0])
        vols = np.array([10.0, 20.0, 30.0, 40.0])
        out = obv_values(closes, vols)
        assert out[0] == 0.0
        assert out[1] == 20.0
        assert out[2] == -10.0
        assert out[3] == 30.0

    def test_rolling_beta_recovers_slope(self):
        rng = np.random.default_rng(8)
        market = rng.normal(0, 0.01, 120)
        ticker = 1.5 * market  # exact beta of 1.5, no noise
        beta = rolling_beta_values(ticker, market, 60)
        assert beta[-1] == pytest.approx(1.5, abs=1e-10)

    def test_interactions_product_of_standardized(self):
        panel = random_panel(21, 260, seed=13)
        frame, _ = build_feature_frame(
            panel, panel.tickers, panel.calendar[150], panel.calendar[-1],
            panel.calendar[150], panel.calendar[200],
        )
        inter = frame.column("int_mom_5__rsi_14")
        assert inter
        for key, v in list(inter.items())[:20]:
            a = frame.column("mom_5").get(key)
            b = frame.column("rsi_14").get(key)
            assert a is not None and b is not None
            assert v == pytest.approx(a * b, abs=0.0)


class TestFrameProperties:
    def test_per_ticker_features_independent_of_universe(self):
        panel = random_panel(8, 120, seed=17)
        start, end = panel.calendar[60], panel.calendar[-1]
        t_end = panel.calendar[90]
        small = build_scalar_features(panel, panel.tickers[:3], start, end, FeatureBlockPolicy())
        big = build_scalar_features(panel, panel.tickers, start, end, FeatureBlockPolicy())
        for col in ("mom_5", "vol_20", "rsi_14", "macd_hist"):
            sub = small.column(col)
            full = big.column(col)
            assert sub
            for key, v in sub.items():
                assert full[key] == v

    def test_snapshot_columns_match_policy(self):
        panel = random_panel(5, 140, seed=19)
        frame, _ = build_feature_frame(
            panel, panel.tickers, panel.calendar[80], panel.calendar[-1],
            panel.calendar[80], panel.calendar[120],
        )
        assert frame.column_names() == FeatureBlockPolicy().columns_for(5)

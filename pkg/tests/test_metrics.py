from datetime import date

import numpy as np
import pytest

from wfeval.metrics import (
    DateMetrics,
    aggregate_ranking_loss,
    date_metrics,
    pooled_mse,
    spearman_ic,
)

import oracles


class TestSpearmanIc:
    def test_perfect_ranking(self):
        scores = {"A": 0.1, "B": 0.2, "C": 0.3}
        assert spearman_ic(scores, scores) == pytest.approx(1.0, abs=1e-12)

    def test_reversal(self):
        scores = {"A": 0.1, "B": 0.2, "C": 0.3}
        realized = {t: -v for t, v in scores.items()}
        assert spearman_ic(scores, realized) == pytest.approx(-1.0, abs=1e-12)

    def test_matches_rank_then_pearson_oracle(self):
        rng = np.random.default_rng(0)
        tickers = [f"T{i}" for i in range(21)]
        scores = {t: float(v) for t, v in zip(tickers, rng.normal(size=21))}
        realized = {t: float(v) for t, v in zip(tickers, rng.normal(size=21))}
        expected = oracles.spearman_oracle(
            [scores[t] for t in tickers], [realized[t] for t in tickers]
        )
        assert spearman_ic(scores, realized) == pytest.approx(expected, abs=1e-12)

    def test_needs_three_pairs(self):
        assert spearman_ic({"A": 1.0, "B": 2.0}, {"A": 1.0, "B": 2.0}) is None

    def test_zero_rank_variance_absent(self):
        scores = {"A": 1.0, "B": 1.0, "C": 1.0}
        realized = {"A": 0.1, "B": 0.2, "C": 0.3}
        assert spearman_ic(scores, realized) is None

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(1)
        tickers = [f"T{i}" for i in range(15)]
        scores = {t: float(v) for t, v in zip(tickers, rng.normal(size=15))}
        realized = {t: float(v) for t, v in zip(tickers, rng.normal(size=15))}
        base = spearman_ic(scores, realized)
        warped = {t: float(np.exp(3.0 * v) + 7.0) for t, v in scores.items()}
        assert spearman_ic(warped, realized) == pytest.approx(base, abs=1e-12)

    def test_pairs_restricted_to_common_tickers(self):
        scores = {"A": 1.0, "B": 2.0, "C": 3.0, "Z": 9.0}
        realized = {"A": 1.0, "B": 2.0, "C": 3.0, "Y": -5.0}
        assert spearman_ic(scores, realized) == pytest.approx(1.0, abs=1e-12)


class TestAggregateRankingLoss:
    def test_perfect_dates_zero_loss(self):
        mean, half = aggregate_ranking_loss([1.0, 1.0, 1.0])
        assert mean == 0.0
        assert half == 0.0

    def test_hand_arithmetic(self):
        mean, half = aggregate_ranking_loss([0.1, -0.1])
        assert mean == pytest.approx(1.0, abs=1e-15)
        sd = oracles.stdev_oracle([0.9, 1.1])
        assert half == pytest.approx(1.96 * sd / np.sqrt(2), abs=1e-12)

    def test_single_date_no_ci(self):
        mean, half = aggregate_ranking_loss([0.5])
        assert mean == 0.5
        assert half is None

    def test_empty(self):
        assert aggregate_ranking_loss([]) == (None, None)

    def test_random_scores_loss_near_one(self):
        rng = np.random.default_rng(2)
        ics = []
        for _ in range(300):
            s = {f"T{i}": float(v) for i, v in enumerate(rng.normal(size=20))}
            r = {f"T{i}": float(v) for i, v in enumerate(rng.normal(size=20))}
            ic = spearman_ic(s, r)
            ics.append(ic)
        mean, half = aggregate_ranking_loss(ics)
        assert abs(mean - 1.0) <= half

    def test_mean_identity(self):
        ics = [0.3, -0.2, 0.05]
        mean, _ = aggregate_ranking_loss(ics)
        assert mean == pytest.approx(1.0 - float(np.mean(ics)), abs=1e-15)


class TestMse:
    def _metric(self, day, scores, realized):
        return date_metrics(day, "m", scores, realized)

    def test_identity_zero(self):
        scores = {"A": 0.01, "B": -0.02}
        m = self._metric(date(2022, 1, 3), scores, dict(scores))
        assert pooled_mse([m]) == 0.0

    def test_constant_score_hand_value(self):
        c = 0.01
        realized = {"A": 0.0, "B": 0.02, "C": -0.01}
        m = self._metric(date(2022, 1, 3), {t: c for t in realized}, realized)
        expected = ((c - 0.0) ** 2 + (c - 0.02) ** 2 + (c + 0.01) ** 2) / 3
        assert pooled_mse([m]) == pytest.approx(expected, abs=1e-15)

    def test_pooling_weights_by_observation(self):
        m1 = self._metric(date(2022, 1, 3), {"A": 0.1}, {"A": 0.0})
        m2 = self._metric(
            date(2022, 1, 4), {"A": 0.0, "B": 0.0}, {"A": 0.0, "B": 0.0}
        )
        # 0.01 from one obs + 0 from two obs over 3 total
        assert pooled_mse([m1, m2]) == pytest.approx(0.01 / 3, abs=1e-15)

    def test_empty(self):
        assert pooled_mse([]) is None


class TestDateMetrics:
    def test_fields(self):
        m = date_metrics(
            date(2022, 1, 3), "m", {"A": 0.1, "B": 0.2, "C": 0.3},
            {"A": 0.05, "B": 0.1, "C": 0.2},
        )
        assert m.n_pairs == 3
        assert m.ic == pytest.approx(1.0, abs=1e-12)
        assert m.ranking_loss == pytest.approx(0.0, abs=1e-12)
        assert m.mse == pytest.approx(
            ((0.1 - 0.05) ** 2 + (0.2 - 0.1) ** 2 + (0.3 - 0.2) ** 2) / 3
        )

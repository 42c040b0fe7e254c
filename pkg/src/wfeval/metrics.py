"""Per-date ranking metrics (Spearman IC), window aggregation with 95% CIs,
and pooled MSE."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date as Date

import numpy as np

from .features import average_ranks

logger = logging.getLogger(__name__)

MIN_IC_NAMES = 3
Z_95 = 1.96


@dataclass
class DateMetrics:
    """One model's metrics for one test date."""

    date: Date
    model: str
    ic: float | None
    n_pairs: int
    sq_err_sum: float
    n_obs: int

    @property
    def mse(self) -> float | None:
        return self.sq_err_sum / self.n_obs if self.n_obs else None

    @property
    def ranking_loss(self) -> float | None:
        return None if self.ic is None else 1.0 - self.ic


def pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sa = a.std(ddof=1)
    sb = b.std(ddof=1)
    if sa <= 0 or sb <= 0:
        return None
    cov = float(np.mean((a - a.mean()) * (b - b.mean()))) * len(a) / (len(a) - 1)
    return cov / (sa * sb)


def spearman_ic(scores: dict[str, float], realized: dict[str, float]) -> float | None:
    """Pearson correlation of average-tie ranks of paired observations.

    Needs >= 3 paired names; zero variance in either rank vector yields None.
    """
    common = sorted(set(scores) & set(realized))
    if len(common) < MIN_IC_NAMES:
        return None
    s = np.array([scores[t] for t in common])
    r = np.array([realized[t] for t in common])
    ic = pearson(average_ranks(s), average_ranks(r))
    if ic is None:
        logger.debug("IC undefined: zero rank variance over %d names", len(common))
    return ic


def date_metrics(
    day: Date,
    model: str,
    scores: dict[str, float],
    realized: dict[str, float],
) -> DateMetrics:
    common = sorted(set(scores) & set(realized))
    sq = sum((scores[t] - realized[t]) ** 2 for t in common)
    return DateMetrics(
        date=day,
        model=model,
        ic=spearman_ic(scores, realized),
        n_pairs=len(common),
        sq_err_sum=float(sq),
        n_obs=len(common),
    )


def aggregate_ranking_loss(
    ics: list[float],
) -> tuple[float | None, float | None]:
    """(mean 1-IC, 95% CI half-width) over valid dates.

    CI uses the normal approximation 1.96 * stdev / sqrt(n); absent when
    fewer than 2 valid dates.
    """
    if not ics:
        return None, None
    losses = np.array([1.0 - ic for ic in ics])
    mean = float(losses.mean())
    if len(losses) < 2:
        return mean, None
    half = Z_95 * float(losses.std(ddof=1)) / np.sqrt(len(losses))
    return mean, half


def pooled_mse(metrics: list[DateMetrics]) -> float | None:
    """MSE over all scored (date, ticker) pairs; invalid dates already excluded."""
    total = sum(m.sq_err_sum for m in metrics)
    count = sum(m.n_obs for m in metrics)
    return total / count if count else None

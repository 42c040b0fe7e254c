"""Per-date score calibration: z-score, rescale to training return scale,
winsorize. Blending with a partner model is a separate final step.

The pipeline order is fixed (zscore -> rescale -> winsorize) and recorded
in the output frame's provenance so downstream checks can prove a `cal`
stage was never produced any other way.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date as Date

import numpy as np

from .errors import CoverageError
from .models import ScoreFrame

logger = logging.getLogger(__name__)

CAL_PIPELINE = ("zscore", "rescale", "winsorize")
SIGMA_DATE_EPSILON = 1e-8


@dataclass(frozen=True)
class TrainTargetStats:
    """Mean/std of realized k-day returns over the training rows the models saw."""

    mean: float
    std: float

    @property
    def usable(self) -> bool:
        return self.std > 0.0


@dataclass(frozen=True)
class CalibrationConfig:
    winsor_lower: float = 5.0
    winsor_upper: float = 95.0
    sigma_epsilon: float = SIGMA_DATE_EPSILON
    blend_weight: float = 0.5
    blend_partner: str = "ridge"

    def __post_init__(self) -> None:
        if not 0.0 <= self.winsor_lower < self.winsor_upper <= 100.0:
            raise ValueError(
                f"winsor percentiles must satisfy 0 <= lower < upper <= 100, "
                f"got {self.winsor_lower}/{self.winsor_upper}"
            )
        if self.sigma_epsilon <= 0:
            raise ValueError("sigma_epsilon must be > 0")
        if not 0.0 <= self.blend_weight <= 1.0:
            raise ValueError(f"blend weight must be in [0, 1], got {self.blend_weight}")


def zscore_by_date(scores: np.ndarray, epsilon: float = SIGMA_DATE_EPSILON) -> np.ndarray:
    """Cross-sectional z-scores with sample std (N-1). Degenerate dates
    (one score, or std < epsilon) map to all zeros."""
    scores = np.asarray(scores, dtype=float)
    if len(scores) < 2:
        return np.zeros(len(scores))
    mu = scores.mean()
    sigma = scores.std(ddof=1)
    if sigma < epsilon:
        return np.zeros(len(scores))
    return (scores - mu) / sigma


def rescale_to_train(z: np.ndarray, stats: TrainTargetStats) -> np.ndarray:
    """Affine map z * sigma_train + mu_train back to the return scale."""
    if not stats.usable:
        raise ValueError("training target std must be > 0 to rescale")
    return np.asarray(z, dtype=float) * stats.std + stats.mean


def winsorize_by_date(
    values: np.ndarray, lower_pct: float = 5.0, upper_pct: float = 95.0
) -> np.ndarray:
    """Clip to the date's [P_lower, P_upper] (linear-interpolation percentiles)."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return values
    lo = np.percentile(values, lower_pct, method="linear")
    hi = np.percentile(values, upper_pct, method="linear")
    return np.clip(values, lo, hi)


def calibrate_frame(
    raw: ScoreFrame,
    stats: TrainTargetStats,
    config: CalibrationConfig | None = None,
) -> ScoreFrame | None:
    """raw -> cal via the fixed per-date pipeline. Returns None (calibration
    disabled, logged) when the training target std is not positive."""
    config = config or CalibrationConfig()
    if raw.stage != "raw":
        raise ValueError(
            f"calibration takes a raw frame; got stage {raw.stage!r} for {raw.model}"
        )
    if not stats.usable:
        logger.warning(
            "calibration disabled for %s: training target std not positive", raw.model
        )
        return None
    out = ScoreFrame(
        model=raw.model,
        stage="cal",
        provenance=CAL_PIPELINE,
        invalid_dates=raw.invalid_dates,
    )
    for day in raw.dates():
        per_date = sorted(raw.by_date(day).items())
        tickers = [t for t, _ in per_date]
        vec = np.array([v for _, v in per_date])
        z = zscore_by_date(vec, config.sigma_epsilon)
        rescaled = rescale_to_train(z, stats)
        clipped = winsorize_by_date(rescaled, config.winsor_lower, config.winsor_upper)
        for t, v in zip(tickers, clipped):
            out.values[(day, t)] = float(v)
    return out


def blend(primary: ScoreFrame, partner: ScoreFrame, weight: float) -> ScoreFrame:
    """w * primary + (1 - w) * partner per (date, ticker).

    Both frames must cover exactly the same keys and be on the return scale.
    """
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"blend weight must be in [0, 1], got {weight}")
    if primary.stage != "cal":
        raise ValueError(
            f"blend takes a calibrated primary frame; got stage {primary.stage!r}"
        )
    missing_in_partner = sorted(set(primary.values) - set(partner.values))
    missing_in_primary = sorted(set(partner.values) - set(primary.values))
    if missing_in_partner or missing_in_primary:
        raise CoverageError(
            f"blend coverage mismatch: {len(missing_in_partner)} keys absent from "
            f"partner (first: {missing_in_partner[:3]}), {len(missing_in_primary)} "
            f"absent from primary (first: {missing_in_primary[:3]})"
        )
    out = ScoreFrame(
        model=primary.model,
        stage="cal_blend",
        provenance=primary.provenance + ("blend",),
        invalid_dates=primary.invalid_dates,
    )
    for key, v in primary.values.items():
        out.values[key] = weight * v + (1.0 - weight) * partner.values[key]
    return out

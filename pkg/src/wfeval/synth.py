"""Synthetic daily equity panels with a planted, configurable signal.

Next-day returns follow r = sum_j beta_j * feature_j(t) + eps, where the
features are computed from the simulated path so far, so a forecaster that
recovers the betas genuinely predicts. Ground-truth betas and generator
parameters are written to a sidecar for oracle checks. Heavy-tail mode draws
innovations from a Student-t(3) scaled to the configured noise level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date as Date, timedelta
from pathlib import Path

import numpy as np

from .features import (
    drawdown_values,
    momentum_values,
    one_day_returns,
    volatility_values,
)

logger = logging.getLogger(__name__)

T_DOF = 3.0
WARMUP_DAYS = 30

# features the generator can plant signal on
SIGNAL_FEATURES = ("mom_2", "mom_5", "mom_10", "mom_20", "rev_5", "vol_20", "drawdown_20")


@dataclass
class SynthSpec:
    tickers: int = 12
    months: int = 54
    start: Date = Date(2019, 1, 1)
    seed: int = 7
    noise: float = 0.01
    heavy_tail: bool = False
    betas: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in self.betas:
            if name not in SIGNAL_FEATURES:
                raise ValueError(
                    f"cannot plant signal on {name!r}; choose from {SIGNAL_FEATURES}"
                )


def trading_calendar(start: Date, months: int) -> list[Date]:
    """Weekday calendar covering `months` whole calendar months from `start`."""
    end_year = start.year + (start.month - 1 + months) // 12
    end_month = (start.month - 1 + months) % 12 + 1
    out = []
    d = start
    while (d.year, d.month) < (end_year, end_month):
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def _feature_value(name: str, closes: np.ndarray) -> float:
    """Current value of one plantable signal feature (nan if too early)."""
    if name.startswith("mom_"):
        n = int(name.split("_")[1])
        return momentum_values(closes, n)[-1]
    if name == "rev_5":
        return -momentum_values(closes, 5)[-1]
    if name == "vol_20":
        return volatility_values(closes, 20)[-1]
    if name == "drawdown_20":
        return drawdown_values(closes, 20)[-1]
    raise ValueError(name)


def generate_panel(spec: SynthSpec) -> tuple[list[Date], list[str], np.ndarray, np.ndarray]:
    """(calendar, tickers, closes[T,N], volumes[T,N]) for the spec."""
    calendar = trading_calendar(spec.start, spec.months)
    n_days = len(calendar)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    tickers = [f"S{idx:03d}" for idx in range(spec.tickers)]

    # persistent per-ticker liquidity levels make the volume ranking meaningful
    base_volume = rng.lognormal(mean=11.0, sigma=1.0, size=spec.tickers)

    closes = np.empty((n_days, spec.tickers))
    volumes = np.empty((n_days, spec.tickers))
    closes[0] = 100.0 * np.exp(rng.normal(0.0, 0.2, size=spec.tickers))
    volumes[0] = base_volume * rng.lognormal(0.0, 0.25, size=spec.tickers)

    betas = dict(spec.betas)
    for t in range(1, n_days):
        if spec.heavy_tail:
            eps = rng.standard_t(T_DOF, size=spec.tickers) * spec.noise / np.sqrt(
                T_DOF / (T_DOF - 2.0)
            )
        else:
            eps = rng.normal(0.0, spec.noise, size=spec.tickers)
        drift = np.zeros(spec.tickers)
        if betas and t > WARMUP_DAYS:
            for j in range(spec.tickers):
                path = closes[: t, j]
                for name, beta in betas.items():
                    v = _feature_value(name, path)
                    if not np.isnan(v):
                        drift[j] += beta * v
        rets = np.clip(drift + eps, -0.5, 1.0)
        closes[t] = closes[t - 1] * (1.0 + rets)
        volumes[t] = base_volume * rng.lognormal(0.0, 0.25, size=spec.tickers)
    return calendar, tickers, closes, volumes


def write_panel(spec: SynthSpec, out_path: str | Path, delimiter: str = "\t") -> Path:
    """Generate and write the panel plus a ground-truth sidecar.

    The panel file has columns ticker, date, close, volume; the sidecar
    (<out>.truth.txt) records the planted betas, noise scale and seed.
    """
    calendar, tickers, closes, volumes = generate_panel(spec)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(delimiter.join(("ticker", "date", "close", "volume")) + "\n")
        for j, ticker in enumerate(tickers):
            for i, day in enumerate(calendar):
                fh.write(
                    delimiter.join(
                        (
                            ticker,
                            day.isoformat(),
                            repr(float(closes[i, j])),
                            repr(float(round(volumes[i, j], 2))),
                        )
                    )
                    + "\n"
                )
    sidecar = out_path.with_suffix(out_path.suffix + ".truth.txt")
    with open(sidecar, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"seed={spec.seed}\n")
        fh.write(f"tickers={spec.tickers}\n")
        fh.write(f"months={spec.months}\n")
        fh.write(f"start={spec.start.isoformat()}\n")
        fh.write(f"noise={spec.noise!r}\n")
        fh.write(f"heavy_tail={str(spec.heavy_tail).lower()}\n")
        for name in sorted(spec.betas):
            fh.write(f"beta.{name}={spec.betas[name]!r}\n")
    logger.info("wrote synthetic panel %s (%d x %d)", out_path, len(calendar), len(tickers))
    return out_path

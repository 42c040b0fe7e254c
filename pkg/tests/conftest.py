import datetime
from datetime import date

import numpy as np
import pytest

from wfeval.market_data import Bar, PricePanel


def weekday_calendar(start: date, n_days: int) -> list[date]:
    out = []
    d = start
    while len(out) < n_days:
        if d.weekday() < 5:
            out.append(d)
        d += datetime.timedelta(days=1)
    return out


def panel_from_closes(
    closes_by_ticker: dict[str, list[float]],
    start: date = date(2020, 1, 1),
    volumes_by_ticker: dict[str, list[float]] | None = None,
) -> PricePanel:
    """Build a panel from per-ticker close paths on a shared weekday calendar."""
    n = max(len(v) for v in closes_by_ticker.values())
    cal = weekday_calendar(start, n)
    bars = []
    for ticker, closes in closes_by_ticker.items():
        vols = (volumes_by_ticker or {}).get(ticker, [1000.0] * len(closes))
        for i, c in enumerate(closes):
            bars.append((ticker, Bar(date=cal[i], close=float(c), volume=float(vols[i]))))
    return PricePanel(bars)


def random_panel(
    tickers: int,
    n_days: int,
    seed: int = 0,
    start: date = date(2018, 1, 1),
    sigma: float = 0.01,
) -> PricePanel:
    rng = np.random.default_rng(seed)
    cal = weekday_calendar(start, n_days)
    bars = []
    for j in range(tickers):
        name = f"T{j:02d}"
        base_vol = float(rng.lognormal(8.0, 0.5))
        px = 100.0 * float(np.exp(rng.normal(0, 0.2)))
        for d in cal:
            px *= 1.0 + float(rng.normal(0, sigma))
            bars.append(
                (name, Bar(date=d, close=px, volume=base_vol * float(rng.lognormal(0, 0.2))))
            )
    return PricePanel(bars)


@pytest.fixture
def tiny_panel() -> PricePanel:
    return panel_from_closes(
        {
            "AAA": [100, 101, 102, 103, 104, 105, 106, 107, 108, 109],
            "BBB": [50, 50.5, 51, 50, 49, 49.5, 50.5, 51.5, 52, 51],
            "CCC": [200, 198, 202, 205, 203, 204, 206, 208, 207, 209],
        }
    )

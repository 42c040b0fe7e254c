"""Daily bar panel, forward returns, walk-forward schedule, universe selection.

The panel is immutable after load and shared across window evaluations.
All dated reads can be instrumented with an AccessRecorder so leakage
checks can prove that fit-time operations never touch test-window dates.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import date as Date

import numpy as np

from .errors import ConfigError, DataError, ScheduleError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("ticker", "date", "close", "volume")

# Tickers missing more than this fraction of training dates are dropped
# before liquidity ranking (keeps spiky illiquid names out of the universe).
MAX_MISSING_FRACTION = 0.10


class AccessRecorder:
    """Collects the dated reads made against a panel or frame.

    Only the maximum date touched and a read count are kept; that is
    enough to prove "no read at or beyond test_start" for a fit phase.
    """

    __slots__ = ("reads", "max_date")

    def __init__(self) -> None:
        self.reads = 0
        self.max_date: Date | None = None

    def note(self, day: Date) -> None:
        self.reads += 1
        if self.max_date is None or day > self.max_date:
            self.max_date = day

    def violations(self, limit: Date) -> int:
        """Number of recorded phases touching dates >= limit (0 or 1 here)."""
        return int(self.max_date is not None and self.max_date >= limit)


@dataclass(frozen=True)
class Bar:
    """One daily bar. close > 0, volume >= 0."""

    date: Date
    close: float
    volume: float
    open: float | None = None
    high: float | None = None
    low: float | None = None


class PricePanel:
    """Immutable (ticker, date) -> Bar store aligned on a trading calendar."""

    def __init__(self, bars: list[Bar | tuple[str, Bar]] | dict[str, list[Bar]]):
        if isinstance(bars, dict):
            grouped = {t: list(bs) for t, bs in bars.items()}
        else:
            grouped = {}
            for ticker, bar in bars:
                grouped.setdefault(ticker, []).append(bar)
        self._dates: dict[str, tuple[Date, ...]] = {}
        self._closes: dict[str, np.ndarray] = {}
        self._volumes: dict[str, np.ndarray] = {}
        self._index: dict[str, dict[Date, int]] = {}
        cal: set[Date] = set()
        for ticker, bs in grouped.items():
            bs.sort(key=lambda b: b.date)
            ds = tuple(b.date for b in bs)
            for a, b in zip(ds, ds[1:]):
                if a == b:
                    raise DataError(f"duplicate date {a} for ticker {ticker}")
            self._dates[ticker] = ds
            self._closes[ticker] = np.array([b.close for b in bs], dtype=float)
            self._volumes[ticker] = np.array([b.volume for b in bs], dtype=float)
            self._index[ticker] = {d: i for i, d in enumerate(ds)}
            cal.update(ds)
        self.tickers: tuple[str, ...] = tuple(sorted(grouped))
        self.calendar: tuple[Date, ...] = tuple(sorted(cal))
        self._cal_index = {d: i for i, d in enumerate(self.calendar)}
        self._recorder: AccessRecorder | None = None

    # -- instrumentation ----------------------------------------------------

    def attach_recorder(self, recorder: AccessRecorder) -> None:
        self._recorder = recorder

    def detach_recorder(self) -> None:
        self._recorder = None

    def _note(self, day: Date) -> None:
        if self._recorder is not None:
            self._recorder.note(day)

    # -- reads ---------------------------------------------------------------

    def has(self, ticker: str, day: Date) -> bool:
        return day in self._index.get(ticker, {})

    def close(self, ticker: str, day: Date) -> float | None:
        i = self._index.get(ticker, {}).get(day)
        if i is None:
            return None
        self._note(day)
        return float(self._closes[ticker][i])

    def volume(self, ticker: str, day: Date) -> float | None:
        i = self._index.get(ticker, {}).get(day)
        if i is None:
            return None
        self._note(day)
        return float(self._volumes[ticker][i])

    def ticker_dates(self, ticker: str) -> tuple[Date, ...]:
        return self._dates.get(ticker, ())

    def series_until(
        self, ticker: str, end: Date
    ) -> tuple[tuple[Date, ...], np.ndarray, np.ndarray]:
        """(dates, closes, volumes) for all of a ticker's bars with date <= end."""
        ds = self._dates.get(ticker, ())
        n = 0
        for d in ds:
            if d > end:
                break
            n += 1
        if n:
            self._note(ds[n - 1])
        return ds[:n], self._closes[ticker][:n], self._volumes[ticker][:n]

    def n_bars(self) -> int:
        return sum(len(d) for d in self._dates.values())

    def calendar_offset(self, day: Date, k: int) -> Date | None:
        """The trading date k steps after `day` on the panel calendar."""
        i = self._cal_index.get(day)
        if i is None or i + k >= len(self.calendar):
            return None
        return self.calendar[i + k]


class ReturnFrame:
    """Forward k-day returns r(t -> t+k) keyed by (ticker, date t).

    Each entry also remembers the date t+k it depends on, so instrumented
    reads report the *last* date the value uses, not just t.
    """

    def __init__(self, k: int, values: dict[tuple[str, Date], tuple[float, Date]]):
        self.k = k
        self._values = values
        self._recorder: AccessRecorder | None = None

    def attach_recorder(self, recorder: AccessRecorder) -> None:
        self._recorder = recorder

    def detach_recorder(self) -> None:
        self._recorder = None

    def get(self, ticker: str, day: Date) -> float | None:
        entry = self._values.get((ticker, day))
        if entry is None:
            return None
        value, end_date = entry
        if self._recorder is not None:
            self._recorder.note(end_date)
        return value

    def end_date(self, ticker: str, day: Date) -> Date | None:
        entry = self._values.get((ticker, day))
        return None if entry is None else entry[1]

    def has(self, ticker: str, day: Date) -> bool:
        return (ticker, day) in self._values

    def __len__(self) -> int:
        return len(self._values)


@dataclass
class WalkForwardWindow:
    """One chronological train/test split. train_end < test_start always."""

    train_start: Date
    train_end: Date
    test_start: Date
    test_end: Date
    universe: tuple[str, ...] = ()

    def window_id(self) -> str:
        return self.test_start.isoformat()


def load_panel(
    path: str,
    column_map: dict[str, str] | None = None,
    delimiter: str = ",",
) -> PricePanel:
    """Load a delimited bar file into a PricePanel.

    Args:
        path: delimited text file with a header row, one row per (ticker, date).
        column_map: maps the logical names ticker/date/close/volume to the
            file's header names. Defaults to identity.
        delimiter: field separator ("," or "\\t").

    Raises:
        ConfigError: a required column cannot be resolved via the map.
        DataError: unparsable row, non-positive close, negative volume, or
            duplicate (ticker, date) — the message names the offending line.
    """
    colmap = dict(column_map or {})
    for logical in REQUIRED_COLUMNS:
        colmap.setdefault(logical, logical)

    bars: list[tuple[str, Bar]] = []
    seen: set[tuple[str, Date]] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        positions = {}
        for logical in REQUIRED_COLUMNS:
            name = colmap[logical]
            if name not in header:
                raise ConfigError(
                    f"{path}: column {name!r} (mapped from col.{logical}) "
                    f"not found in header {header}"
                )
            positions[logical] = header.index(name)

        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                ticker = row[positions["ticker"]].strip()
                day = Date.fromisoformat(row[positions["date"]].strip())
                close = float(row[positions["close"]])
                volume = float(row[positions["volume"]])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: line {lineno}: unparsable row ({exc})") from None
            if not ticker:
                raise DataError(f"{path}: line {lineno}: empty ticker")
            if not np.isfinite(close) or close <= 0:
                raise DataError(f"{path}: line {lineno}: non-positive close {close}")
            if not np.isfinite(volume) or volume < 0:
                raise DataError(f"{path}: line {lineno}: negative volume {volume}")
            key = (ticker, day)
            if key in seen:
                raise DataError(f"{path}: line {lineno}: duplicate (ticker, date) {key}")
            seen.add(key)
            bars.append((ticker, Bar(date=day, close=close, volume=volume)))

    panel = PricePanel(bars)
    logger.info(
        "loaded panel %s: %d tickers, %d dates, %d bars",
        path, len(panel.tickers), len(panel.calendar), panel.n_bars(),
    )
    return panel


def forward_returns(panel: PricePanel, k: int) -> ReturnFrame:
    """r(t -> t+k) = close(t+k)/close(t) - 1, stepping k trading days on the
    panel calendar. Entries are absent (not zero) when either close is missing."""
    if k < 1:
        raise ValueError(f"horizon k must be >= 1, got {k}")
    values: dict[tuple[str, Date], tuple[float, Date]] = {}
    n_cal = len(panel.calendar)
    for ticker in panel.tickers:
        idx = panel._index[ticker]
        closes = panel._closes[ticker]
        for day, i in idx.items():
            ci = panel._cal_index[day]
            if ci + k >= n_cal:
                continue
            fwd_day = panel.calendar[ci + k]
            j = idx.get(fwd_day)
            if j is None:
                continue
            values[(ticker, day)] = (float(closes[j] / closes[i] - 1.0), fwd_day)
    return ReturnFrame(k, values)


def select_universe(
    panel: PricePanel,
    train_start: Date,
    train_end: Date,
    size: int,
    warnings: list[str] | None = None,
) -> tuple[str, ...]:
    """Top-`size` tickers by average daily share volume over the training window.

    Only dates in [train_start, train_end] are consulted. Tickers missing more
    than 10% of the training dates are excluded before ranking. Ties break
    lexicographically. If fewer than `size` tickers qualify, the truncated
    universe is returned and a warning is appended to `warnings`.
    """
    if size < 1:
        raise ValueError(f"universe size must be >= 1, got {size}")
    window_dates = [d for d in panel.calendar if train_start <= d <= train_end]
    if not window_dates:
        raise DataError(
            f"no trading dates in training window {train_start}..{train_end}"
        )
    n_dates = len(window_dates)
    ranked: list[tuple[float, str]] = []
    for ticker in panel.tickers:
        vols = []
        for d in window_dates:
            v = panel.volume(ticker, d)
            if v is not None:
                vols.append(v)
        if not vols:
            continue
        missing = 1.0 - len(vols) / n_dates
        if missing > MAX_MISSING_FRACTION:
            continue
        ranked.append((float(np.mean(vols)), ticker))
    # descending volume, ascending ticker on ties
    ranked.sort(key=lambda pair: (-pair[0], pair[1]))
    universe = tuple(t for _, t in ranked[:size])
    if len(universe) < size:
        msg = (
            f"universe truncated: requested {size}, only {len(universe)} "
            f"tickers qualify in {train_start}..{train_end}"
        )
        logger.warning(msg)
        if warnings is not None:
            warnings.append(msg)
    return universe


def _month_of(day: Date) -> tuple[int, int]:
    return (day.year, day.month)


def build_schedule(
    calendar: tuple[Date, ...] | list[Date],
    train_months: int = 48,
    test_months: int = 1,
) -> list[WalkForwardWindow]:
    """Rolling calendar-month windows advancing by test_months.

    A window's train_end is the last trading date of its final training month;
    test_start is the first trading date of the following month, so
    train_end < test_start holds by construction.
    """
    if train_months < 1 or test_months < 1:
        raise ValueError("train_months and test_months must be >= 1")
    months: list[tuple[int, int]] = []
    by_month: dict[tuple[int, int], list[Date]] = {}
    for d in sorted(calendar):
        m = _month_of(d)
        if m not in by_month:
            by_month[m] = []
            months.append(m)
        by_month[m].append(d)
    required = train_months + test_months
    if len(months) < required:
        raise ScheduleError(
            f"insufficient history: {len(months)} months available, "
            f"{required} required ({train_months} train + {test_months} test)"
        )
    windows: list[WalkForwardWindow] = []
    start = 0
    while start + required <= len(months):
        train_block = months[start : start + train_months]
        test_block = months[start + train_months : start + required]
        windows.append(
            WalkForwardWindow(
                train_start=by_month[train_block[0]][0],
                train_end=by_month[train_block[-1]][-1],
                test_start=by_month[test_block[0]][0],
                test_end=by_month[test_block[-1]][-1],
            )
        )
        start += test_months
    return windows

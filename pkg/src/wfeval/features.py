"""Per-ticker indicators, cross-sectional ranks, market context, and
leak-free per-ticker standardization.

Scalar indicators are computed from each ticker's own bar history (values
at date t use only bars at or before t). Cross-sectional columns are
computed per date over the universe. Standardization statistics are fitted
on the training slice only and applied forward.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date as Date

import numpy as np

from .market_data import AccessRecorder, PricePanel

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-12

CORE_SCALARS = (
    "mom_2", "mom_5", "mom_10", "mom_20",
    "vol_5", "vol_20",
    "rev_5", "volchg_5",
    "drawdown_20",
    "rsi_14", "macd", "macd_signal", "macd_hist",
)
RICH_SCALARS = (
    "mom_60", "mom_120", "vol_60", "volchg_20",
    "ret1_skew_20", "ret1_kurt_20",
    "beta_mkt_60", "obv_like",
)
INTERACTIONS = (
    ("int_mom_5__rsi_14", "mom_5", "rsi_14"),
    ("int_macd_hist__vol_20", "macd_hist", "vol_20"),
    ("int_drawdown_20__mom_20", "drawdown_20", "mom_20"),
)
DEFAULT_XRANK_COLUMNS = ("mom_5", "mom_20", "vol_20")
CONTEXT_COLUMNS = ("mom_5", "mom_20", "vol_20")


@dataclass(frozen=True)
class FeatureBlockPolicy:
    """Which columns are emitted for a given universe size.

    The rich block switches on at `rich_min_universe` names; the emitted
    column set is a deterministic function of U.
    """

    xrank_columns: tuple[str, ...] = DEFAULT_XRANK_COLUMNS
    rich_min_universe: int = 21

    def rich_enabled(self, universe_size: int) -> bool:
        return universe_size >= self.rich_min_universe

    def scalar_columns(self, universe_size: int) -> tuple[str, ...]:
        cols = CORE_SCALARS
        if self.rich_enabled(universe_size):
            cols = cols + RICH_SCALARS
        return cols

    def columns_for(self, universe_size: int) -> tuple[str, ...]:
        """Full emitted column set (sorted) for universe size U."""
        cols = list(self.scalar_columns(universe_size))
        cols += [f"{c}_xrank" for c in self.xrank_columns]
        cols += [f"mkt_mean_{c}" for c in CONTEXT_COLUMNS]
        if self.rich_enabled(universe_size):
            cols += [name for name, _, _ in INTERACTIONS]
        return tuple(sorted(cols))


class FeatureFrame:
    """(date, ticker, column) -> value with explicit absence.

    Absent cells simply have no entry; they are never imputed as zero.
    Reads can be instrumented through an AccessRecorder.
    """

    def __init__(self, tickers: tuple[str, ...], dates: tuple[Date, ...]):
        self.tickers = tuple(tickers)
        self.dates = tuple(dates)
        self._columns: dict[str, dict[tuple[Date, str], float]] = {}
        self._recorder: AccessRecorder | None = None

    def attach_recorder(self, recorder: AccessRecorder) -> None:
        self._recorder = recorder

    def detach_recorder(self) -> None:
        self._recorder = None

    def column_names(self) -> tuple[str, ...]:
        return tuple(sorted(self._columns))

    def set_column(self, name: str, values: dict[tuple[Date, str], float]) -> None:
        self._columns[name] = values

    def set(self, name: str, day: Date, ticker: str, value: float) -> None:
        self._columns.setdefault(name, {})[(day, ticker)] = value

    def get(self, name: str, day: Date, ticker: str) -> float | None:
        col = self._columns.get(name)
        if col is None:
            return None
        v = col.get((day, ticker))
        if v is not None and self._recorder is not None:
            self._recorder.note(day)
        return v

    def present(self, name: str, day: Date, ticker: str) -> bool:
        return (day, ticker) in self._columns.get(name, {})

    def column(self, name: str) -> dict[tuple[Date, str], float]:
        return self._columns.get(name, {})

    def row(self, day: Date, ticker: str) -> dict[str, float]:
        """All present values at one (date, ticker), keyed by column."""
        out = {}
        for name, col in self._columns.items():
            v = col.get((day, ticker))
            if v is not None:
                out[name] = v
        if out and self._recorder is not None:
            self._recorder.note(day)
        return out


# -- per-ticker indicator arrays (nan marks absence) -------------------------


def momentum_values(closes: np.ndarray, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"momentum window must be >= 1, got {n}")
    out = np.full(len(closes), np.nan)
    if len(closes) > n:
        out[n:] = closes[n:] / closes[:-n] - 1.0
    return out


def one_day_returns(closes: np.ndarray) -> np.ndarray:
    out = np.full(len(closes), np.nan)
    if len(closes) > 1:
        out[1:] = closes[1:] / closes[:-1] - 1.0
    return out


def volatility_values(closes: np.ndarray, n: int) -> np.ndarray:
    """Sample stdev (ddof=1) of the trailing n one-day returns."""
    if n < 2:
        raise ValueError(f"volatility window must be >= 2, got {n}")
    rets = one_day_returns(closes)
    out = np.full(len(closes), np.nan)
    for i in range(n, len(closes)):
        out[i] = np.std(rets[i - n + 1 : i + 1], ddof=1)
    return out


def volume_change_values(volumes: np.ndarray, n: int) -> np.ndarray:
    out = np.full(len(volumes), np.nan)
    for i in range(n, len(volumes)):
        prev = volumes[i - n]
        if prev > 0:
            out[i] = volumes[i] / prev - 1.0
    return out


def drawdown_values(closes: np.ndarray, n: int = 20) -> np.ndarray:
    """close / trailing n-day max (incl. today) - 1; window truncates at start."""
    out = np.full(len(closes), np.nan)
    for i in range(len(closes)):
        lo = max(0, i - n + 1)
        out[i] = closes[i] / np.max(closes[lo : i + 1]) - 1.0
    return out


def rsi_values(closes: np.ndarray, n: int = 14) -> np.ndarray:
    """Wilder RSI: simple first averages, then (prev*(n-1) + current)/n.

    Flat-price windows (zero average gain and loss) read 50.
    """
    out = np.full(len(closes), np.nan)
    if len(closes) <= n:
        return out
    deltas = np.diff(closes)
    gains = np.where(deltas > 0, deltas, 0.0)
    losses = np.where(deltas < 0, -deltas, 0.0)
    avg_gain = float(np.mean(gains[:n]))
    avg_loss = float(np.mean(losses[:n]))
    out[n] = _rsi_from_averages(avg_gain, avg_loss)
    for i in range(n + 1, len(closes)):
        avg_gain = (avg_gain * (n - 1) + gains[i - 1]) / n
        avg_loss = (avg_loss * (n - 1) + losses[i - 1]) / n
        out[i] = _rsi_from_averages(avg_gain, avg_loss)
    return out


def _rsi_from_averages(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0.0 and avg_gain == 0.0:
        return 50.0
    if avg_loss == 0.0:
        return 100.0
    if avg_gain == 0.0:
        return 0.0
    rs = avg_gain / avg_loss
    return 100.0 - 100.0 / (1.0 + rs)


def ema(values: np.ndarray, n: int) -> np.ndarray:
    """EMA with multiplier 2/(n+1), seeded at the first observation."""
    out = np.empty(len(values))
    if len(values) == 0:
        return out
    alpha = 2.0 / (n + 1.0)
    out[0] = values[0]
    for i in range(1, len(values)):
        out[i] = alpha * values[i] + (1.0 - alpha) * out[i - 1]
    return out


def macd_values(closes: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(macd, signal, hist) = (EMA12 - EMA26, EMA9 of macd, macd - signal)."""
    macd = ema(closes, 12) - ema(closes, 26)
    signal = ema(macd, 9)
    return macd, signal, macd - signal


def skewness_values(closes: np.ndarray, n: int = 20) -> np.ndarray:
    """Moment skewness (m3 / m2^1.5) of the trailing n one-day returns."""
    rets = one_day_returns(closes)
    out = np.full(len(closes), np.nan)
    for i in range(n, len(closes)):
        w = rets[i - n + 1 : i + 1]
        m2 = np.mean((w - np.mean(w)) ** 2)
        if m2 > SIGMA_FLOOR:
            out[i] = np.mean((w - np.mean(w)) ** 3) / m2 ** 1.5
    return out


def kurtosis_values(closes: np.ndarray, n: int = 20) -> np.ndarray:
    """Excess moment kurtosis (m4 / m2^2 - 3) of the trailing n one-day returns."""
    rets = one_day_returns(closes)
    out = np.full(len(closes), np.nan)
    for i in range(n, len(closes)):
        w = rets[i - n + 1 : i + 1]
        m2 = np.mean((w - np.mean(w)) ** 2)
        if m2 > SIGMA_FLOOR:
            out[i] = np.mean((w - np.mean(w)) ** 4) / m2**2 - 3.0
    return out


def obv_values(closes: np.ndarray, volumes: np.ndarray) -> np.ndarray:
    """Cumulative sign(1-day return) * volume. Standardized later like any scalar."""
    out = np.full(len(closes), np.nan)
    if len(closes) == 0:
        return out
    acc = 0.0
    out[0] = 0.0
    for i in range(1, len(closes)):
        acc += float(np.sign(closes[i] - closes[i - 1])) * volumes[i]
        out[i] = acc
    return out


def rolling_beta_values(
    returns: np.ndarray, market_returns: np.ndarray, n: int = 60
) -> np.ndarray:
    """OLS slope of ticker returns on market returns over the trailing n days."""
    out = np.full(len(returns), np.nan)
    for i in range(len(returns)):
        lo = i - n + 1
        if lo < 0:
            continue
        r = returns[lo : i + 1]
        m = market_returns[lo : i + 1]
        mask = ~(np.isnan(r) | np.isnan(m))
        if mask.sum() < n:
            continue
        r, m = r[mask], m[mask]
        var = np.var(m)
        if var > SIGMA_FLOOR:
            out[i] = float(np.cov(r, m, ddof=0)[0, 1] / var)
    return out


# -- panel-level column construction -----------------------------------------


def _indicator_arrays(
    closes: np.ndarray, volumes: np.ndarray, rich: bool
) -> dict[str, np.ndarray]:
    mom5 = momentum_values(closes, 5)
    macd, signal, hist = macd_values(closes)
    cols = {
        "mom_2": momentum_values(closes, 2),
        "mom_5": mom5,
        "mom_10": momentum_values(closes, 10),
        "mom_20": momentum_values(closes, 20),
        "vol_5": volatility_values(closes, 5),
        "vol_20": volatility_values(closes, 20),
        "rev_5": -mom5,
        "volchg_5": volume_change_values(volumes, 5),
        "drawdown_20": drawdown_values(closes, 20),
        "rsi_14": rsi_values(closes, 14),
        "macd": macd,
        "macd_signal": signal,
        "macd_hist": hist,
    }
    if rich:
        cols.update(
            {
                "mom_60": momentum_values(closes, 60),
                "mom_120": momentum_values(closes, 120),
                "vol_60": volatility_values(closes, 60),
                "volchg_20": volume_change_values(volumes, 20),
                "ret1_skew_20": skewness_values(closes, 20),
                "ret1_kurt_20": kurtosis_values(closes, 20),
                "obv_like": obv_values(closes, volumes),
            }
        )
    return cols


def build_scalar_features(
    panel: PricePanel,
    universe: tuple[str, ...],
    start: Date,
    end: Date,
    policy: FeatureBlockPolicy,
) -> FeatureFrame:
    """Raw per-ticker scalar columns for dates in [start, end].

    Indicator warmup uses the ticker's history before `start`; nothing after
    `end` is read.
    """
    dates = tuple(d for d in panel.calendar if start <= d <= end)
    frame = FeatureFrame(tuple(universe), dates)
    rich = policy.rich_enabled(len(universe))

    per_ticker: dict[str, tuple[tuple[Date, ...], dict[str, np.ndarray]]] = {}
    for ticker in universe:
        t_dates, closes, volumes = panel.series_until(ticker, end)
        per_ticker[ticker] = (t_dates, _indicator_arrays(closes, volumes, rich))

    if rich:
        # equal-weight universe mean 1-day return per calendar date
        all_dates = tuple(d for d in panel.calendar if d <= end)
        date_pos = {d: i for i, d in enumerate(all_dates)}
        sums = np.zeros(len(all_dates))
        counts = np.zeros(len(all_dates))
        rets_by_ticker: dict[str, np.ndarray] = {}
        for ticker in universe:
            t_dates = per_ticker[ticker][0]
            closes = panel.series_until(ticker, end)[1]
            rets = one_day_returns(closes)
            rets_by_ticker[ticker] = rets
            for i, d in enumerate(t_dates):
                if not np.isnan(rets[i]):
                    p = date_pos[d]
                    sums[p] += rets[i]
                    counts[p] += 1
        mkt = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
        for ticker in universe:
            t_dates, arrays = per_ticker[ticker]
            aligned_mkt = np.array(
                [mkt[date_pos[d]] for d in t_dates]) if t_dates else np.array([])
            arrays["beta_mkt_60"] = rolling_beta_values(
                rets_by_ticker[ticker], aligned_mkt, 60
            )

    emitted = set(policy.scalar_columns(len(universe)))
    for ticker in universe:
        t_dates, arrays = per_ticker[ticker]
        for name, arr in arrays.items():
            if name not in emitted:
                continue
            col = frame._columns.setdefault(name, {})
            for i, d in enumerate(t_dates):
                if d >= start and not np.isnan(arr[i]):
                    col[(d, ticker)] = float(arr[i])
    return frame


def average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..m with ties sharing the average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for p in range(i, j + 1):
            ranks[order[p]] = avg
        i = j + 1
    return ranks


def add_cross_sectional_ranks(frame: FeatureFrame, columns: tuple[str, ...]) -> None:
    """Per-date percentile ranks in [0,1]: (rank-1)/(m-1); a lone value reads 0.5."""
    for name in columns:
        src = frame.column(name)
        out: dict[tuple[Date, str], float] = {}
        by_date: dict[Date, list[tuple[str, float]]] = {}
        for (d, t), v in src.items():
            by_date.setdefault(d, []).append((t, v))
        for d, pairs in by_date.items():
            pairs.sort()
            if len(pairs) == 1:
                out[(d, pairs[0][0])] = 0.5
                continue
            vals = np.array([v for _, v in pairs])
            ranks = average_ranks(vals)
            m = len(pairs)
            for (t, _), r in zip(pairs, ranks):
                out[(d, t)] = (r - 1.0) / (m - 1.0)
        frame.set_column(f"{name}_xrank", out)


def add_market_context(frame: FeatureFrame, columns: tuple[str, ...] = CONTEXT_COLUMNS) -> None:
    """Per-date cross-sectional mean of each column, broadcast to every ticker."""
    for name in columns:
        src = frame.column(name)
        by_date: dict[Date, list[float]] = {}
        for (d, _), v in src.items():
            by_date.setdefault(d, []).append(v)
        out: dict[tuple[Date, str], float] = {}
        for d, vals in by_date.items():
            mean = float(np.mean(vals))
            for ticker in frame.tickers:
                out[(d, ticker)] = mean
        frame.set_column(f"mkt_mean_{name}", out)


# -- standardization ----------------------------------------------------------


@dataclass
class Standardizer:
    """Per-(ticker, column) train-window mean/std for scalar columns."""

    stats: dict[tuple[str, str], tuple[float, float]]
    excluded: set[tuple[str, str]] = field(default_factory=set)
    train_start: Date | None = None
    train_end: Date | None = None


def passthrough_column(name: str) -> bool:
    """Columns that skip per-ticker standardization."""
    return name.endswith("_xrank") or name.startswith("mkt_mean_") or name.startswith("int_")


def fit_standardizer(
    frame: FeatureFrame,
    train_start: Date,
    train_end: Date,
    recorder: AccessRecorder | None = None,
) -> Standardizer:
    """Fit per-ticker mean/std on the training slice only.

    Columns with fewer than 2 training values or train std < 1e-12 for a
    ticker are excluded (the column stays absent for that ticker, never
    zero-filled).
    """
    if recorder is not None:
        frame.attach_recorder(recorder)
    try:
        stats: dict[tuple[str, str], tuple[float, float]] = {}
        excluded: set[tuple[str, str]] = set()
        for name in frame.column_names():
            if passthrough_column(name):
                continue
            per_ticker: dict[str, list[float]] = {}
            for (d, t), _ in frame.column(name).items():
                if train_start <= d <= train_end:
                    v = frame.get(name, d, t)
                    per_ticker.setdefault(t, []).append(v)
            for ticker in frame.tickers:
                vals = per_ticker.get(ticker, [])
                if len(vals) < 2:
                    excluded.add((ticker, name))
                    continue
                mu = float(np.mean(vals))
                sigma = float(np.std(vals, ddof=1))
                if sigma < SIGMA_FLOOR:
                    excluded.add((ticker, name))
                    continue
                stats[(ticker, name)] = (mu, sigma)
        if excluded:
            logger.info("standardizer: %d (ticker, column) pairs excluded", len(excluded))
        return Standardizer(stats, excluded, train_start, train_end)
    finally:
        if recorder is not None:
            frame.detach_recorder()


def apply_standardizer(frame: FeatureFrame, standardizer: Standardizer) -> FeatureFrame:
    """z = (x - mu_train) / sigma_train on every date; passthrough columns copied."""
    out = FeatureFrame(frame.tickers, frame.dates)
    for name in frame.column_names():
        src = frame.column(name)
        if passthrough_column(name):
            out.set_column(name, dict(src))
            continue
        col: dict[tuple[Date, str], float] = {}
        for (d, t), v in src.items():
            st = standardizer.stats.get((t, name))
            if st is None:
                continue
            mu, sigma = st
            col[(d, t)] = (v - mu) / sigma
        out.set_column(name, col)
    return out


def add_interactions(frame: FeatureFrame) -> None:
    """Products of standardized pairs; present only where both factors are."""
    for name, left, right in INTERACTIONS:
        a = frame.column(left)
        b = frame.column(right)
        out = {}
        for key, va in a.items():
            vb = b.get(key)
            if vb is not None:
                out[key] = va * vb
        frame.set_column(name, out)


def build_feature_frame(
    panel: PricePanel,
    universe: tuple[str, ...],
    window_start: Date,
    window_end: Date,
    train_start: Date,
    train_end: Date,
    policy: FeatureBlockPolicy | None = None,
    recorder: AccessRecorder | None = None,
) -> tuple[FeatureFrame, Standardizer]:
    """Full per-window feature pipeline.

    Raw scalars -> cross-sectional ranks and market context on the raw values
    -> per-ticker standardization fitted on [train_start, train_end] ->
    interaction products of standardized pairs (rich block only).
    """
    policy = policy or FeatureBlockPolicy()
    raw = build_scalar_features(panel, universe, window_start, window_end, policy)
    add_cross_sectional_ranks(raw, policy.xrank_columns)
    add_market_context(raw)
    standardizer = fit_standardizer(raw, train_start, train_end, recorder=recorder)
    frame = apply_standardizer(raw, standardizer)
    if policy.rich_enabled(len(universe)):
        add_interactions(frame)
    return frame, standardizer

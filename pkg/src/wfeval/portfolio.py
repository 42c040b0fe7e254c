"""Equal-weight long/short construction, turnover caps, and cost-adjusted
daily P&L.

Daily accounting: on day t the book formed at t-1 earns that day's returns,
pays one-way trading costs on the day-t rebalance, and pays borrow on the
short notional carried into the day:

    net_t = sum_i w[t-1,i] * r[t,i]
            - turnover_t * cost_bps / 10000
            - borrow_bps / 10000 * sum_i max(0, -w[t-1,i])

The first day is charged from a zero book (entering costs are real). Weights
under an active cap drift toward the target; no re-normalization to full
gross exposure is applied afterwards.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date as Date

import numpy as np

logger = logging.getLogger(__name__)

ANNUALIZATION = math.sqrt(252.0)


@dataclass(frozen=True)
class PortfolioConfig:
    p_long: float = 0.2
    p_short: float = 0.2
    turnover_cap: float = 1.0  # max one-way turnover per day
    cost_bps: float = 15.0  # one-way transaction cost, basis points
    borrow_bps: float = 5.0  # per-day borrow on short notional, basis points

    def __post_init__(self) -> None:
        for name, frac in (("p_long", self.p_long), ("p_short", self.p_short)):
            if not 0.0 < frac <= 0.5:
                raise ValueError(f"{name} must be in (0, 0.5], got {frac}")
        if self.p_long + self.p_short > 1.0:
            raise ValueError("p_long + p_short must not exceed 1")
        if self.turnover_cap <= 0:
            raise ValueError("turnover cap must be > 0")
        if self.cost_bps < 0 or self.borrow_bps < 0:
            raise ValueError("costs must be >= 0")


@dataclass
class DailyPosition:
    date: Date
    weights: dict[str, float]
    turnover: float = 0.0
    n_long: int = 0
    n_short: int = 0


@dataclass
class DailyPnl:
    date: Date
    gross: float
    trade_cost: float
    borrow_cost: float
    net: float
    turnover: float
    short_notional: float  # borrow base carried into the day


@dataclass
class BacktestResult:
    model: str
    days: list[DailyPnl] = field(default_factory=list)
    skipped_dates: list[Date] = field(default_factory=list)

    @property
    def mean_daily_turnover(self) -> float:
        return float(np.mean([d.turnover for d in self.days])) if self.days else 0.0

    @property
    def cumulative_net(self) -> float:
        return float(np.sum([d.net for d in self.days]))

    def sharpe(self) -> float | None:
        return sharpe_ratio([d.net for d in self.days])


def sharpe_ratio(daily: list[float]) -> float | None:
    """Annualized mean/std of daily net returns; None when variance is zero."""
    if len(daily) < 2:
        return None
    arr = np.asarray(daily, dtype=float)
    sd = arr.std(ddof=1)
    if sd <= 0:
        return None
    return float(arr.mean() / sd * ANNUALIZATION)


def form_weights(
    scores: dict[str, float], config: PortfolioConfig, day: Date
) -> DailyPosition | None:
    """Equal-weight top p_long long / bottom p_short short by score.

    k = max(1, floor(p * N)); cutoff ties break lexicographically by ticker.
    Returns None (date skipped, logged) when every score is identical, since
    ranking is undefined there.
    """
    n = len(scores)
    if n < 2:
        return None
    values = list(scores.values())
    if max(values) == min(values):
        logger.info("form_weights: %s skipped, all scores equal", day)
        return None
    k_long = max(1, int(math.floor(config.p_long * n)))
    k_short = max(1, int(math.floor(config.p_short * n)))
    by_desc = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    by_asc = sorted(scores.items(), key=lambda kv: (kv[1], kv[0]))
    longs = [t for t, _ in by_desc[:k_long]]
    shorts = [t for t, _ in by_asc[:k_short]]
    weights = {t: 0.0 for t in scores}
    for t in longs:
        weights[t] = 1.0 / k_long
    for t in shorts:
        weights[t] = -1.0 / k_short
    return DailyPosition(date=day, weights=weights, n_long=k_long, n_short=k_short)


def apply_turnover_cap(
    target: DailyPosition, previous: dict[str, float], cap: float
) -> DailyPosition:
    """Scale the rebalance toward the target so one-way turnover <= cap.

    If the desired turnover exceeds the cap, each weight moves along the
    segment previous -> target by alpha = cap / desired, making the realized
    turnover exactly the cap.
    """
    if cap <= 0:
        raise ValueError("cap must be > 0")
    names = sorted(set(target.weights) | set(previous))
    deltas = {t: target.weights.get(t, 0.0) - previous.get(t, 0.0) for t in names}
    desired = sum(abs(d) for d in deltas.values())
    if desired <= cap:
        weights = {t: target.weights.get(t, 0.0) for t in names}
        turnover = desired
    else:
        alpha = cap / desired
        weights = {t: previous.get(t, 0.0) + alpha * deltas[t] for t in names}
        turnover = cap
    return DailyPosition(
        date=target.date,
        weights=weights,
        turnover=turnover,
        n_long=target.n_long,
        n_short=target.n_short,
    )


def daily_net_pnl(
    prev_weights: dict[str, float],
    returns: dict[str, float],
    turnover: float,
    config: PortfolioConfig,
    day: Date,
) -> DailyPnl:
    """One day of cost-adjusted P&L. A held name with no return that day
    contributes zero (logged)."""
    gross = 0.0
    for ticker, w in prev_weights.items():
        if w == 0.0:
            continue
        r = returns.get(ticker)
        if r is None:
            logger.debug("pnl %s: missing return for held %s, using 0", day, ticker)
            r = 0.0
        gross += w * r
    short_notional = sum(max(0.0, -w) for w in prev_weights.values())
    trade_cost = turnover * config.cost_bps / 10_000.0
    borrow_cost = config.borrow_bps / 10_000.0 * short_notional
    return DailyPnl(
        date=day,
        gross=gross,
        trade_cost=trade_cost,
        borrow_cost=borrow_cost,
        net=gross - trade_cost - borrow_cost,
        turnover=turnover,
        short_notional=short_notional,
    )


def backtest(
    scores_by_date: dict[Date, dict[str, float]],
    returns_by_date: dict[Date, dict[str, float]],
    config: PortfolioConfig,
    model: str = "model",
) -> BacktestResult:
    """Sequential daily fold: earn on yesterday's book, rebalance under the
    cap toward today's target, charge costs.

    Dates without usable scores carry the previous book unchanged (zero
    turnover; borrow still accrues).
    """
    result = BacktestResult(model=model)
    prev: dict[str, float] = {}
    for day in sorted(scores_by_date):
        target = form_weights(scores_by_date.get(day, {}), config, day)
        if target is None:
            position = DailyPosition(date=day, weights=dict(prev), turnover=0.0)
            result.skipped_dates.append(day)
        else:
            position = apply_turnover_cap(target, prev, config.turnover_cap)
        pnl = daily_net_pnl(
            prev, returns_by_date.get(day, {}), position.turnover, config, day
        )
        result.days.append(pnl)
        prev = position.weights
    return result


PERTURBATION_GRID = (
    ("base", 1.0, 1.0),
    ("cost-50", 0.5, 1.0),
    ("cost+50", 1.5, 1.0),
    ("borrow-50", 1.0, 0.5),
    ("borrow+50", 1.0, 1.5),
)


def perturbed_sharpe(
    days: list[DailyPnl], config: PortfolioConfig, cost_scale: float, borrow_scale: float
) -> float | None:
    """Recompute net Sharpe under scaled costs from the retained per-day
    turnover and short notional (exact, no approximation)."""
    net = [
        d.gross
        - d.turnover * config.cost_bps * cost_scale / 10_000.0
        - d.short_notional * config.borrow_bps * borrow_scale / 10_000.0
        for d in days
    ]
    return sharpe_ratio(net)


def cost_sensitivity(
    per_model_days: dict[str, list[DailyPnl]], config: PortfolioConfig
) -> dict[str, dict[str, float | None]]:
    """Net Sharpe per (model, perturbation) for the +/-50% cost grid."""
    out: dict[str, dict[str, float | None]] = {}
    for model, days in per_model_days.items():
        out[model] = {
            label: perturbed_sharpe(days, config, cs, bs)
            for label, cs, bs in PERTURBATION_GRID
        }
    return out

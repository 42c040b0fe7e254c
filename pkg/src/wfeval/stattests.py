"""Forecast-comparison tests: Diebold-Mariano with a Bartlett-kernel HAC
variance, the Pesaran-Timmermann sign test, and Hansen's SPA test under a
stationary bootstrap.

All tests are deterministic given the bootstrap seed, and all p-values lie
in [0, 1]. Compared series must share an identical date index (callers
inner-join valid dates before calling in here).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

MIN_TEST_OBS = 10


@dataclass
class TestRow:
    """One report row: (horizon, universe, pair-or-base, statistic, p-value)."""

    horizon: int
    universe: int
    label: str
    statistic: float
    p_value: float
    degenerate: bool = False
    excluded: tuple[str, ...] = ()


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def bartlett_long_run_variance(d: np.ndarray, lags: int) -> float:
    """gamma_0 + 2 * sum_j (1 - j/(lags+1)) * gamma_j of the demeaned series."""
    n = len(d)
    x = d - d.mean()
    gamma0 = float(np.dot(x, x)) / n
    acc = gamma0
    for j in range(1, min(lags, n - 1) + 1):
        gamma_j = float(np.dot(x[j:], x[:-j])) / n
        acc += 2.0 * (1.0 - j / (lags + 1.0)) * gamma_j
    return max(acc, 0.0)


def dm_test(
    loss_a: np.ndarray, loss_b: np.ndarray, hac_lags: int = 0
) -> tuple[float, float, bool]:
    """Diebold-Mariano test of equal predictive accuracy.

    d_t = loss_a - loss_b, DM = mean(d) / sqrt(LRV/n), two-sided normal p.
    Returns (statistic, p_value, degenerate). Identical series give (0, 1)
    and a nonzero mean with zero long-run variance gives p = 0, both flagged
    degenerate.
    """
    loss_a = np.asarray(loss_a, dtype=float)
    loss_b = np.asarray(loss_b, dtype=float)
    if loss_a.shape != loss_b.shape:
        raise ValueError(f"shape mismatch {loss_a.shape} vs {loss_b.shape}")
    n = len(loss_a)
    if n < MIN_TEST_OBS:
        raise ValueError(f"DM needs >= {MIN_TEST_OBS} aligned observations, got {n}")
    d = loss_a - loss_b
    mean = float(d.mean())
    if np.all(d == 0.0):
        return 0.0, 1.0, True
    lrv = bartlett_long_run_variance(d, hac_lags)
    if lrv <= 0.0:
        return (math.inf if mean > 0 else -math.inf), 0.0, True
    stat = mean / math.sqrt(lrv / n)
    p = 2.0 * (1.0 - norm_cdf(abs(stat)))
    return stat, p, False


def pt_test(
    forecast: np.ndarray, realized: np.ndarray
) -> tuple[float | None, float | None, bool]:
    """Pesaran-Timmermann test of directional accuracy (upper-tail p).

    Signs are "up" when a value is > 0. Returns (stat, p, degenerate);
    degenerate when either sign series is one-class or the variance term
    is not positive.
    """
    forecast = np.asarray(forecast, dtype=float)
    realized = np.asarray(realized, dtype=float)
    if forecast.shape != realized.shape:
        raise ValueError(f"shape mismatch {forecast.shape} vs {realized.shape}")
    n = len(forecast)
    if n < MIN_TEST_OBS:
        raise ValueError(f"PT needs >= {MIN_TEST_OBS} observations, got {n}")
    f_up = forecast > 0
    y_up = realized > 0
    px = float(f_up.mean())
    py = float(y_up.mean())
    if px in (0.0, 1.0) or py in (0.0, 1.0):
        return None, None, True
    p_hat = float((f_up == y_up).mean())
    p_star = py * px + (1.0 - py) * (1.0 - px)
    var_hat = p_star * (1.0 - p_star) / n
    var_star = (
        (2.0 * py - 1.0) ** 2 * px * (1.0 - px)
        + (2.0 * px - 1.0) ** 2 * py * (1.0 - py)
        + 4.0 * px * py * (1.0 - px) * (1.0 - py) / n
    ) / n
    denom = var_hat - var_star
    if denom <= 0.0:
        return None, None, True
    stat = (p_hat - p_star) / math.sqrt(denom)
    return stat, 1.0 - norm_cdf(stat), False


def stationary_bootstrap_indices(
    n: int, mean_block_length: float, replications: int, seed: int
) -> np.ndarray:
    """Politis-Romano stationary bootstrap index matrix (replications x n).

    Geometric block lengths with continuation probability 1 - 1/L and
    wrap-around continuation; L = 1 degenerates to i.i.d. resampling.
    """
    if n < 2:
        raise ValueError(f"series length must be >= 2, got {n}")
    if mean_block_length < 1:
        raise ValueError(f"mean block length must be >= 1, got {mean_block_length}")
    rng = np.random.Generator(np.random.PCG64(seed))
    restart_prob = 1.0 / mean_block_length
    restarts = rng.random((replications, n)) < restart_prob
    restarts[:, 0] = True
    starts = rng.integers(0, n, size=(replications, n))
    cols = np.arange(n)
    # index of the most recent restart at or before each column
    last_restart = np.maximum.accumulate(np.where(restarts, cols, -1), axis=1)
    rows = np.arange(replications)[:, None]
    base = starts[rows, last_restart]
    offset = cols - last_restart
    return (base + offset) % n


@dataclass
class SpaResult:
    t_obs: float
    p_value: float
    excluded: tuple[str, ...] = ()
    means: dict[str, float] = field(default_factory=dict)


def spa_test(
    benchmark: np.ndarray,
    candidates: dict[str, np.ndarray],
    replications: int = 1000,
    mean_block_length: float = 5.0,
    seed: int = 0,
) -> SpaResult:
    """Hansen's SPA ("reality check" with studentization and consistent
    recentering) of whether any candidate beats the benchmark.

    Relative performance d_k,t = loss_bench,t - loss_k,t (positive means the
    candidate is better). t_obs = max_k sqrt(n) * mean(d_k) / omega_k with
    omega_k^2 the stationary-bootstrap variance of sqrt(n) * mean(d_k). The
    bootstrap null recenters each candidate's mean to zero unless it is below
    -sqrt(omega_k^2 * 2 log log n / n), in which case the (clearly worse)
    candidate keeps its own center. Candidates with zero variance are
    excluded and reported.
    """
    if not candidates:
        raise ValueError("SPA needs at least one candidate series")
    benchmark = np.asarray(benchmark, dtype=float)
    n = len(benchmark)
    if n < MIN_TEST_OBS:
        raise ValueError(f"SPA needs >= {MIN_TEST_OBS} observations, got {n}")
    names = sorted(candidates)
    d_rows = []
    for name in names:
        series = np.asarray(candidates[name], dtype=float)
        if series.shape != benchmark.shape:
            raise ValueError(f"candidate {name}: shape mismatch")
        d_rows.append(benchmark - series)
    D = np.vstack(d_rows)  # (K, n)

    idx = stationary_bootstrap_indices(n, mean_block_length, replications, seed)
    boot_means = D[:, idx].mean(axis=2)  # (K, replications)
    omega2 = n * boot_means.var(axis=1)

    keep = omega2 > 0.0
    excluded = tuple(name for name, k in zip(names, keep) if not k)
    if excluded:
        logger.warning("SPA: excluded zero-variance candidates %s", list(excluded))
    if not np.any(keep):
        return SpaResult(t_obs=0.0, p_value=1.0, excluded=excluded)

    d_bar = D.mean(axis=1)
    omega = np.sqrt(omega2[keep])
    d_kept = d_bar[keep]
    t_stats = math.sqrt(n) * d_kept / omega
    t_obs = float(np.max(t_stats))

    threshold = -np.sqrt(omega2[keep] * 2.0 * math.log(math.log(n)) / n)
    center = np.where(d_kept < threshold, d_kept, 0.0)
    z = (
        math.sqrt(n)
        * (boot_means[keep] - d_kept[:, None] + center[:, None])
        / omega[:, None]
    )
    t_boot = np.maximum(z.max(axis=0), 0.0)
    p = float(np.mean(t_boot >= t_obs))
    return SpaResult(
        t_obs=t_obs,
        p_value=p,
        excluded=excluded,
        means={name: float(m) for name, m in zip(names, d_bar)},
    )

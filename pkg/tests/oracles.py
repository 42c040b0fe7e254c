"""Independent brute-force oracles used to cross-check the library.

These are deliberately written as plain step-by-step loops from the
definitions, sharing no code with the package implementations they verify.
"""

import math


def rank_with_ties(values):
    """Average ranks 1..n computed by scanning the sorted copy."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for p in range(i, j + 1):
            ranks[order[p]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def pearson_oracle(a, b):
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)


def spearman_oracle(a, b):
    return pearson_oracle(rank_with_ties(a), rank_with_ties(b))


def stdev_oracle(values, ddof=1):
    n = len(values)
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (n - ddof))


def rsi_oracle(closes, period=14):
    """Step-by-step Wilder recursion; returns the RSI at the last close."""
    gains, losses = [], []
    for prev, cur in zip(closes, closes[1:]):
        change = cur - prev
        gains.append(max(change, 0.0))
        losses.append(max(-change, 0.0))
    avg_gain = sum(gains[:period]) / period
    avg_loss = sum(losses[:period]) / period
    for i in range(period, len(gains)):
        avg_gain = (avg_gain * (period - 1) + gains[i]) / period
        avg_loss = (avg_loss * (period - 1) + losses[i]) / period
    if avg_gain == 0.0 and avg_loss == 0.0:
        return 50.0
    if avg_loss == 0.0:
        return 100.0
    if avg_gain == 0.0:
        return 0.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


def ema_oracle(values, period):
    alpha = 2.0 / (period + 1.0)
    out = [values[0]]
    for v in values[1:]:
        out.append(alpha * v + (1.0 - alpha) * out[-1])
    return out


def macd_oracle(closes):
    e12 = ema_oracle(closes, 12)
    e26 = ema_oracle(closes, 26)
    macd = [a - b for a, b in zip(e12, e26)]
    signal = ema_oracle(macd, 9)
    hist = [a - b for a, b in zip(macd, signal)]
    return macd, signal, hist


def percentile_oracle(values, q):
    """Linear-interpolation percentile: h = (n-1)q/100 between order stats."""
    xs = sorted(values)
    h = (len(xs) - 1) * q / 100.0
    lo = math.floor(h)
    hi = math.ceil(h)
    if lo == hi:
        return xs[int(h)]
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def phi(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def dm_oracle(loss_a, loss_b, lags):
    """Textbook DM: Bartlett long-run variance computed by explicit loops."""
    n = len(loss_a)
    d = [a - b for a, b in zip(loss_a, loss_b)]
    mean = sum(d) / n
    centered = [x - mean for x in d]
    gamma0 = sum(x * x for x in centered) / n
    lrv = gamma0
    for j in range(1, lags + 1):
        gamma_j = sum(centered[i] * centered[i - j] for i in range(j, n)) / n
        lrv += 2.0 * (1.0 - j / (lags + 1.0)) * gamma_j
    stat = mean / math.sqrt(lrv / n)
    p = 2.0 * (1.0 - phi(abs(stat)))
    return stat, p


def pt_oracle(forecast, realized):
    """Plug-in PT statistic from the 2x2 construction."""
    n = len(forecast)
    fx = [1.0 if f > 0 else 0.0 for f in forecast]
    fy = [1.0 if y > 0 else 0.0 for y in realized]
    px = sum(fx) / n
    py = sum(fy) / n
    hits = sum(1.0 for a, b in zip(fx, fy) if a == b) / n
    p_star = py * px + (1 - py) * (1 - px)
    v_hat = p_star * (1 - p_star) / n
    v_star = (
        (2 * py - 1) ** 2 * px * (1 - px)
        + (2 * px - 1) ** 2 * py * (1 - py)
        + 4 * px * py * (1 - px) * (1 - py) / n
    ) / n
    stat = (hits - p_star) / math.sqrt(v_hat - v_star)
    return stat, 1.0 - phi(stat)


def net_pnl_oracle(weights_prev, returns, turnover, cost_bps, borrow_bps):
    """Single-day cost-adjusted P&L computed term by term."""
    gross = 0.0
    for ticker, w in weights_prev.items():
        gross += w * returns.get(ticker, 0.0)
    short_notional = 0.0
    for w in weights_prev.values():
        if w < 0:
            short_notional += -w
    return gross - turnover * cost_bps / 10000.0 - borrow_bps / 10000.0 * short_notional


def backtest_oracle(dates, scores, returns, p_long, p_short, cap, cost_bps, borrow_bps):
    """Straight-line day-by-day recomputation of the full backtest."""
    prev = {}
    out = []
    for day in dates:
        day_scores = scores.get(day, {})
        n = len(day_scores)
        target = {}
        if n >= 2 and len(set(day_scores.values())) > 1:
            k_long = max(1, math.floor(p_long * n))
            k_short = max(1, math.floor(p_short * n))
            longs = sorted(day_scores, key=lambda t: (-day_scores[t], t))[:k_long]
            shorts = sorted(day_scores, key=lambda t: (day_scores[t], t))[:k_short]
            target = {t: 0.0 for t in day_scores}
            for t in longs:
                target[t] = 1.0 / k_long
            for t in shorts:
                target[t] = -1.0 / k_short
        else:
            target = dict(prev)
        names = set(target) | set(prev)
        deltas = {t: target.get(t, 0.0) - prev.get(t, 0.0) for t in names}
        desired = sum(abs(d) for d in deltas.values())
        if desired <= cap:
            new = {t: target.get(t, 0.0) for t in names}
            turnover = desired
        else:
            alpha = cap / desired
            new = {t: prev.get(t, 0.0) + alpha * deltas[t] for t in names}
            turnover = cap
        net = net_pnl_oracle(prev, returns.get(day, {}), turnover, cost_bps, borrow_bps)
        out.append(net)
        prev = new
    return out


def ols_slope_oracle(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    num = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    den = sum((x - mx) ** 2 for x in xs)
    return num / den

"""Walk-forward orchestrator: universe selection, features, model fits,
forecasts, calibration, metrics, and backtests per (universe size, window).

Every fit-time phase (universe selection, standardizer fitting, training-row
assembly, training-target stats) runs under an access recorder, and the
maximum date each phase touched is checked against test_start and written to
the manifest. All randomness derives from (run seed, window id, model name),
so reruns with a warm forecast cache are byte-identical.
"""

from __future__ import annotations

import logging
import traceback
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path

import numpy as np

from .calibration import TrainTargetStats, blend, calibrate_frame
from .config import RunConfig, format_kv
from .errors import WfevalError
from .features import build_feature_frame
from .llm_gateway import (
    STATUS_OK,
    CacheKey,
    MockTransport,
    ReplayTransport,
    HttpTransport,
    ResponseCache,
    build_bundle,
    forecast_date,
)
from .market_data import (
    AccessRecorder,
    PricePanel,
    ReturnFrame,
    WalkForwardWindow,
    build_schedule,
    forward_returns,
    load_panel,
    select_universe,
)
from .metrics import DateMetrics, aggregate_ranking_loss, date_metrics, pooled_mse
from .models import (
    ForecasterSpec,
    ScoreFrame,
    build_training_set,
    derive_seed,
    fit_random_forest,
    fit_ridge,
    mock_scores,
    parse_mock_rule,
    predict,
)
from .portfolio import BacktestResult, backtest

logger = logging.getLogger(__name__)

FIT_PHASES = ("universe_selection", "standardizer_fit", "training_rows", "target_stats")


@dataclass
class LeakageCheck:
    phase: str
    reads: int
    max_date: Date | None
    limit: Date

    @property
    def ok(self) -> bool:
        return self.max_date is None or self.max_date < self.limit


@dataclass
class WindowOutcome:
    key: str  # "u<U>_<test_start>"
    universe_size: int
    window: WalkForwardWindow
    metrics: dict[str, list[DateMetrics]] = field(default_factory=dict)
    backtests: dict[str, BacktestResult] = field(default_factory=dict)
    invalid_dates: dict[str, int] = field(default_factory=dict)
    leakage: list[LeakageCheck] = field(default_factory=list)
    failed: bool = False
    error: str = ""


@dataclass
class RunResult:
    run_dir: Path
    outcomes: list[WindowOutcome]
    warnings: list[str] = field(default_factory=list)

    @property
    def failed_windows(self) -> list[WindowOutcome]:
        return [o for o in self.outcomes if o.failed]

    def leakage_violations(self) -> int:
        return sum(
            1 for o in self.outcomes for c in o.leakage if not c.ok
        )


def _fmt(value) -> str:
    """Deterministic cell rendering: shortest round-trip for floats."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_tsv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def make_transport(config: RunConfig, returns: ReturnFrame, seed: int):
    tc = config.transport
    if tc.kind == "mock":
        rule = parse_mock_rule(tc.mock_rule)

        def scorer(day, k, feats):
            if rule.name == "echo_feature":
                return {
                    t: f[rule.column] for t, f in feats.items() if rule.column in f
                }
            if rule.name == "constant":
                return {t: rule.constant for t in feats}
            return mock_scores(rule, day, tuple(feats), None, returns, seed)

        return MockTransport(scorer)
    if tc.kind == "replay":
        return ReplayTransport()
    return HttpTransport(
        url=tc.url,
        body_template=tc.body_template,
        response_path=tc.response_path,
        auth_env=tc.auth_env or None,
    )


def one_day_return_map(panel: PricePanel) -> dict[Date, dict[str, float]]:
    """Realized 1-day returns keyed by the day they accrue on."""
    out: dict[Date, dict[str, float]] = {}
    for prev, day in zip(panel.calendar, panel.calendar[1:]):
        per = {}
        for ticker in panel.tickers:
            c0 = panel.close(ticker, prev)
            c1 = panel.close(ticker, day)
            if c0 is not None and c1 is not None:
                per[ticker] = c1 / c0 - 1.0
        out[day] = per
    return out


def evaluate_window(
    panel: PricePanel,
    returns: ReturnFrame,
    day_returns: dict[Date, dict[str, float]],
    window: WalkForwardWindow,
    universe_size: int,
    config: RunConfig,
    cache: ResponseCache | None,
    run_dir: Path,
    warnings: list[str],
) -> WindowOutcome:
    key = f"u{universe_size}_{window.test_start.isoformat()}"
    outcome = WindowOutcome(key=key, universe_size=universe_size, window=window)
    wdir = run_dir / "windows" / key

    # -- universe selection (instrumented) --
    rec = AccessRecorder()
    panel.attach_recorder(rec)
    try:
        universe = select_universe(
            panel, window.train_start, window.train_end, universe_size, warnings
        )
    finally:
        panel.detach_recorder()
    outcome.leakage.append(
        LeakageCheck("universe_selection", rec.reads, rec.max_date, window.test_start)
    )
    if not universe:
        raise WfevalError(f"{key}: no tickers qualify for the universe")
    window = WalkForwardWindow(
        window.train_start, window.train_end, window.test_start, window.test_end,
        universe=universe,
    )
    outcome.window = window

    # -- features (standardizer fitted on the train slice, instrumented) --
    rec = AccessRecorder()
    frame, _ = build_feature_frame(
        panel,
        universe,
        window.train_start,
        window.test_end,
        window.train_start,
        window.train_end,
        policy=config.features,
        recorder=rec,
    )
    outcome.leakage.append(
        LeakageCheck("standardizer_fit", rec.reads, rec.max_date, window.test_start)
    )

    # -- training rows (instrumented) --
    columns = config.features.columns_for(len(universe))
    rec = AccessRecorder()
    train = build_training_set(
        frame, returns, universe, window.train_start, window.train_end, columns,
        recorder=rec,
    )
    outcome.leakage.append(
        LeakageCheck("training_rows", rec.reads, rec.max_date, window.test_start)
    )

    # -- training target stats (instrumented re-read of the same rows) --
    rec = AccessRecorder()
    returns.attach_recorder(rec)
    try:
        targets = [returns.get(t, d) for d, t in train.rows]
    finally:
        returns.detach_recorder()
    outcome.leakage.append(
        LeakageCheck("target_stats", rec.reads, rec.max_date, window.test_start)
    )
    if len(targets) >= 2:
        stats = TrainTargetStats(float(np.mean(targets)), float(np.std(targets, ddof=1)))
    else:
        stats = TrainTargetStats(0.0, 0.0)

    test_dates = [d for d in frame.dates if window.test_start <= d <= window.test_end]
    test_rows = [(d, t) for d in test_dates for t in universe]

    # -- forecasts --
    frames: dict[str, ScoreFrame] = {}
    invalid: dict[str, set[Date]] = {}
    for name, spec in config.models.items():
        model_seed = derive_seed(config.seed, key, name)
        if spec.kind in ("ridge", "random_forest"):
            frames[name] = _fit_and_predict(spec, train, frame, test_rows, model_seed)
            invalid[name] = set()
        elif spec.kind == "mock":
            rule = parse_mock_rule(spec.params.get("rule", "constant:0.0"))
            rho_key = f"rho_u{universe_size}"
            if rule.name == "noisy_oracle" and rho_key in spec.params:
                rule.rho = float(spec.params[rho_key])
            sf = ScoreFrame(model=name, stage="raw")
            for d in test_dates:
                for t, s in mock_scores(rule, d, universe, frame, returns, model_seed).items():
                    sf.values[(d, t)] = s
            frames[name] = sf
            invalid[name] = set()
        else:  # llm_direct / tllm via the gateway
            transport = make_transport(config, returns, model_seed)
            sf = ScoreFrame(model=name, stage="raw")
            bad_dates: set[Date] = set()
            sig = CacheKey.universe_signature(universe)
            for d in test_dates:
                feats = {t: frame.row(d, t) for t in universe}
                bundle = build_bundle(
                    spec.kind, feats, universe, d, config.horizon,
                    effort=spec.params.get("effort", "high"),
                )
                ck = CacheKey(name, config.horizon, sig, d)
                resp = forecast_date(
                    ck, bundle, cache, transport,
                    params={"budget": spec.budget, "model_id": spec.model_id},
                )
                if resp.status == STATUS_OK:
                    for t, s in resp.scores.items():
                        sf.values[(d, t)] = s
                else:
                    bad_dates.add(d)
            sf.invalid_dates = frozenset(bad_dates)
            frames[name] = sf
            invalid[name] = bad_dates
            if bad_dates:
                logger.warning("%s: %d invalid dates for %s", key, len(bad_dates), name)

    # -- calibration and blending --
    labeled: dict[str, ScoreFrame] = dict(frames)
    for name in config.calibrate_models:
        cal = calibrate_frame(frames[name], stats, config.calibration)
        if cal is None:
            warnings.append(f"{key}: calibration disabled for {name} (sigma_train <= 0)")
            continue
        cal.model = f"{name}_cal"
        labeled[cal.model] = cal
        invalid[cal.model] = set(invalid.get(name, set()))
        if name in config.blend_models:
            partner = frames.get(config.calibration.blend_partner)
            if partner is None:
                warnings.append(f"{key}: blend partner missing for {name}")
                continue
            common = set(cal.values) & set(partner.values)
            cal_sub = ScoreFrame(cal.model, "cal", {k: cal.values[k] for k in common},
                                 cal.provenance, cal.invalid_dates)
            partner_sub = ScoreFrame(partner.model, partner.stage,
                                     {k: partner.values[k] for k in common})
            blended = blend(cal_sub, partner_sub, config.calibration.blend_weight)
            blended.model = f"{name}_cal_blend"
            labeled[blended.model] = blended
            invalid[blended.model] = set(invalid.get(name, set()))

    # -- metrics and backtests --
    for label in sorted(labeled):
        sf = labeled[label]
        bad = invalid.get(label, set())
        per_date: list[DateMetrics] = []
        scores_by_date: dict[Date, dict[str, float]] = {}
        for d in test_dates:
            if d in bad:
                scores_by_date[d] = {}
                continue
            scores = sf.by_date(d)
            scores_by_date[d] = scores
            if not scores:
                continue
            realized = {
                t: returns.get(t, d) for t in scores if returns.has(t, d)
            }
            per_date.append(date_metrics(d, label, scores, realized))
        outcome.metrics[label] = per_date
        outcome.invalid_dates[label] = len(bad)
        rets = {d: day_returns.get(d, {}) for d in test_dates}
        outcome.backtests[label] = backtest(
            scores_by_date, rets, config.portfolio, model=label
        )

    realized_rows = []
    for d in test_dates:
        for t in universe:
            if returns.has(t, d):
                realized_rows.append([d.isoformat(), t, returns.get(t, d)])

    _write_window_files(wdir, frame, labeled, outcome, test_dates, universe, realized_rows)
    return outcome


def _fit_and_predict(
    spec: ForecasterSpec,
    train,
    frame,
    test_rows,
    seed: int,
) -> ScoreFrame:
    if spec.kind == "ridge":
        model = fit_ridge(train, lam=float(spec.params.get("lambda", 10.0)))
    else:
        model = fit_random_forest(
            train,
            trees=int(spec.params.get("trees", 200)),
            max_depth=int(spec.params.get("max_depth", 6)),
            min_leaf=int(spec.params.get("min_leaf", 10)),
            features_per_split=float(spec.params.get("features_per_split", 1.0 / 3.0)),
            seed=seed,
        )
    return predict(model, frame, test_rows, model_label=spec.name)


def _write_window_files(
    wdir: Path,
    frame,
    labeled: dict[str, ScoreFrame],
    outcome: WindowOutcome,
    test_dates: list[Date],
    universe: tuple[str, ...],
    realized_rows: list[list],
) -> None:
    write_tsv(wdir / "realized.tsv", ["date", "ticker", "return"], realized_rows)

    columns = list(frame.column_names())
    rows = []
    for d in test_dates:
        for t in universe:
            row = [d.isoformat(), t]
            for c in columns:
                row.append(frame.get(c, d, t))
            rows.append(row)
    write_tsv(wdir / "features.tsv", ["date", "ticker"] + columns, rows)

    for label in sorted(labeled):
        sf = labeled[label]
        rows = [
            [d.isoformat(), t, v]
            for (d, t), v in sorted(sf.values.items())
        ]
        # labels already end in _cal / _cal_blend; only raw needs a suffix
        suffix = "_raw" if sf.stage == "raw" else ""
        write_tsv(
            wdir / f"scores_{label}{suffix}.tsv", ["date", "ticker", "score"], rows
        )

    rows = []
    for label in sorted(outcome.metrics):
        for m in outcome.metrics[label]:
            rows.append(
                [label, m.date.isoformat(), m.ic, m.n_pairs, m.sq_err_sum, m.n_obs]
            )
    write_tsv(
        wdir / "metrics.tsv",
        ["model", "date", "ic", "n_pairs", "sq_err_sum", "n_obs"],
        rows,
    )

    rows = []
    for label in sorted(outcome.backtests):
        for d in outcome.backtests[label].days:
            rows.append(
                [
                    label,
                    d.date.isoformat(),
                    d.gross,
                    d.trade_cost,
                    d.borrow_cost,
                    d.net,
                    d.turnover,
                    d.short_notional,
                ]
            )
    write_tsv(
        wdir / "backtest.tsv",
        ["model", "date", "gross", "trade_cost", "borrow_cost", "net", "turnover",
         "short_notional"],
        rows,
    )

    rows = []
    for label in sorted(outcome.metrics):
        ms = outcome.metrics[label]
        ics = [m.ic for m in ms if m.ic is not None]
        mean_loss, ci = aggregate_ranking_loss(ics)
        mse = pooled_mse(ms)
        bt = outcome.backtests[label]
        rows.append(
            [
                label,
                len(ms),
                len(ics),
                outcome.invalid_dates.get(label, 0),
                mean_loss,
                ci,
                mse,
                bt.sharpe(),
                bt.mean_daily_turnover,
            ]
        )
    write_tsv(
        wdir / "summary.tsv",
        ["model", "dates", "valid_dates", "invalid_dates", "mean_loss", "ci_half",
         "mse", "sharpe", "mean_turnover"],
        rows,
    )


def run_walkforward(config: RunConfig) -> RunResult:
    """Execute the full pipeline for every configured universe size and window."""
    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    warnings: list[str] = []

    panel = load_panel(config.data_path, config.column_map, config.delimiter)
    returns = forward_returns(panel, config.horizon)
    day_returns = one_day_return_map(panel)
    schedule = build_schedule(panel.calendar, config.train_months, config.test_months)
    cache = ResponseCache(config.cache_dir or run_dir / "cache")

    outcomes: list[WindowOutcome] = []
    for u in config.universe_sizes:
        for window in schedule:
            key = f"u{u}_{window.test_start.isoformat()}"
            try:
                outcome = evaluate_window(
                    panel, returns, day_returns, window, u, config, cache,
                    run_dir, warnings,
                )
            except Exception as exc:  # noqa: BLE001 - window failures must not kill the run
                logger.error("window %s failed: %s", key, exc)
                logger.debug("%s", traceback.format_exc())
                outcome = WindowOutcome(
                    key=key, universe_size=u, window=window, failed=True,
                    error=f"{type(exc).__name__}: {exc}",
                )
            outcomes.append(outcome)

    result = RunResult(run_dir=run_dir, outcomes=outcomes, warnings=warnings)
    _write_manifest(run_dir, config, result)
    return result


def _write_manifest(run_dir: Path, config: RunConfig, result: RunResult) -> None:
    pairs: dict[str, str] = {}
    for k, v in config.raw.items():
        pairs[f"config.{k}"] = v
    pairs["run.seed"] = str(config.seed)
    pairs["note.liquidity"] = "mean_daily_share_volume"
    pairs["note.blend"] = (
        f"non_paper_convention,w={config.calibration.blend_weight!r},"
        f"partner={config.calibration.blend_partner}"
    )
    pairs["note.seed_derivation"] = "sha256(run_seed|window_id|model)"
    for o in result.outcomes:
        w = o.window
        pairs[f"schedule.{o.key}"] = (
            f"{w.train_start}..{w.train_end}|{w.test_start}..{w.test_end}"
        )
        if o.failed:
            pairs[f"failed.{o.key}"] = o.error
            continue
        pairs[f"universe.{o.key}"] = ",".join(w.universe)
        for model, count in sorted(o.invalid_dates.items()):
            if count:
                pairs[f"invalid_dates.{o.key}.{model}"] = str(count)
        for check in o.leakage:
            status = "ok" if check.ok else "VIOLATION"
            max_str = check.max_date.isoformat() if check.max_date else "none"
            pairs[f"leakage.{o.key}.{check.phase}"] = (
                f"{status},max={max_str},reads={check.reads}"
            )
    pairs["leakage.violations"] = str(result.leakage_violations())
    pairs["windows.total"] = str(len(result.outcomes))
    pairs["windows.failed"] = str(len(result.failed_windows))
    for i, msg in enumerate(result.warnings):
        pairs[f"warning.{i:03d}"] = msg
    (run_dir / "manifest.txt").write_text(format_kv(pairs), encoding="utf-8")

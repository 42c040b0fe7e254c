"""Report tables (DM, PT, SPA, cost sensitivity) and the four loss figures,
all derived purely from a completed run directory.

Every figure also writes its underlying numbers to a sidecar TSV so each
plotted value traces to a stored file. Missing window outputs are listed in
reports/gaps.txt and the rest of the report is still produced.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path

import numpy as np

from .config import parse_kv_file
from .engine import write_tsv
from .metrics import aggregate_ranking_loss
from .models import derive_seed
from .portfolio import sharpe_ratio
from .stattests import dm_test, pt_test, spa_test
from . import svgfig

logger = logging.getLogger(__name__)

DM_HEADER = ["horizon", "universe", "pair", "DM", "p"]
PT_HEADER = ["horizon", "universe", "pair", "PT", "p"]
SPA_HEADER = ["horizon", "universe", "base", "t_obs", "p"]
COST_HEADER = ["Model", "Base Net Sharpe", "Rank"]


@dataclass
class RunView:
    """Everything a report needs, parsed back out of a run directory."""

    run_dir: Path
    config: dict[str, str]
    horizon: int
    universe_sizes: list[int]
    base_model: str
    seed: int
    window_keys: dict[int, list[str]]  # universe -> ordered window keys
    failed: list[str]
    # (universe, model) -> {date: value}
    ic_loss: dict[tuple[int, str], dict[Date, float]] = field(default_factory=dict)
    mse: dict[tuple[int, str], dict[Date, float]] = field(default_factory=dict)
    window_mean_loss: dict[tuple[int, str], list[float]] = field(default_factory=dict)
    models: list[str] = field(default_factory=list)
    gaps: list[str] = field(default_factory=list)

    def cfg(self, key: str, default: str = "") -> str:
        return self.config.get(key, default)

    def cfg_float(self, key: str, default: float) -> float:
        try:
            return float(self.config[key])
        except (KeyError, ValueError):
            return default


def load_run(run_dir: str | Path) -> RunView:
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.txt"
    manifest = parse_kv_file(manifest_path)
    config = {
        k[len("config."):]: v for k, v in manifest.items() if k.startswith("config.")
    }
    sizes = sorted(
        {
            int(k.split(".")[1].split("_")[0][1:])
            for k in manifest
            if k.startswith("schedule.u")
        }
    )
    failed = sorted(
        k[len("failed."):] for k in manifest if k.startswith("failed.")
    )
    window_keys: dict[int, list[str]] = {u: [] for u in sizes}
    for k in sorted(manifest):
        if k.startswith("schedule.u"):
            wkey = k[len("schedule."):]
            u = int(wkey.split("_")[0][1:])
            window_keys[u].append(wkey)

    view = RunView(
        run_dir=run_dir,
        config=config,
        horizon=int(config.get("horizon.k", "1")),
        universe_sizes=sizes,
        base_model=config.get("stats.base_model", "ridge"),
        seed=int(manifest.get("run.seed", "0")),
        window_keys=window_keys,
        failed=failed,
    )
    view.gaps.extend(f"window {k} failed: {manifest['failed.' + k]}" for k in failed)

    models: set[str] = set()
    for u in sizes:
        for wkey in window_keys[u]:
            if wkey in failed:
                continue
            mpath = run_dir / "windows" / wkey / "metrics.tsv"
            if not mpath.exists():
                view.gaps.append(f"missing {mpath.relative_to(run_dir)}")
                continue
            window_ics: dict[str, list[float]] = {}
            for row in _read_tsv(mpath):
                model = row["model"]
                models.add(model)
                day = Date.fromisoformat(row["date"])
                if row["ic"]:
                    ic = float(row["ic"])
                    view.ic_loss.setdefault((u, model), {})[day] = 1.0 - ic
                    window_ics.setdefault(model, []).append(ic)
                n_obs = int(row["n_obs"])
                if n_obs:
                    view.mse.setdefault((u, model), {})[day] = (
                        float(row["sq_err_sum"]) / n_obs
                    )
            for model, ics in window_ics.items():
                mean_loss, _ = aggregate_ranking_loss(ics)
                view.window_mean_loss.setdefault((u, model), []).append(mean_loss)
    view.models = sorted(models)
    return view


def _read_tsv(path: Path) -> list[dict[str, str]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        return []
    header = lines[0].split("\t")
    return [dict(zip(header, line.split("\t"))) for line in lines[1:]]


# -- statistical tables -----------------------------------------------------------


def dm_table(view: RunView) -> list[list]:
    """DM on per-date MSE, every model vs the base, per universe size."""
    rows: list[list] = []
    base = view.base_model
    for u in view.universe_sizes:
        base_series = view.mse.get((u, base))
        if not base_series:
            view.gaps.append(f"dm: no base ({base}) MSE series for U={u}")
            continue
        for model in view.models:
            if model == base:
                continue
            series = view.mse.get((u, model))
            if not series:
                continue
            dates = sorted(set(base_series) & set(series))
            if len(dates) < 10:
                view.gaps.append(
                    f"dm: {model} vs {base} U={u}: only {len(dates)} shared dates"
                )
                continue
            a = np.array([series[d] for d in dates])
            b = np.array([base_series[d] for d in dates])
            stat, p, _ = dm_test(a, b, hac_lags=max(0, view.horizon - 1))
            rows.append([view.horizon, u, f"{model} vs {base}", stat, p])
    return rows


def pt_table(view: RunView) -> list[list]:
    """PT on pooled (date, ticker) forecast/realized sign pairs vs realized."""
    rows: list[list] = []
    for u in view.universe_sizes:
        for model in view.models:
            forecast, realized = _sign_pairs(view, u, model)
            if len(forecast) < 10:
                continue
            stat, p, degenerate = pt_test(np.array(forecast), np.array(realized))
            if degenerate:
                view.gaps.append(f"pt: degenerate for {model} U={u}")
                continue
            rows.append([view.horizon, u, model, stat, p])
    return rows


def _sign_pairs(view: RunView, u: int, model: str) -> tuple[list[float], list[float]]:
    forecast: list[float] = []
    realized: list[float] = []
    for wkey in view.window_keys.get(u, []):
        wdir = view.run_dir / "windows" / wkey
        realized_path = wdir / "realized.tsv"
        if not realized_path.exists():
            continue
        truth = {
            (row["date"], row["ticker"]): float(row["return"])
            for row in _read_tsv(realized_path)
        }
        score_path = wdir / f"scores_{model}_raw.tsv"
        if not score_path.exists():
            score_path = wdir / f"scores_{model}.tsv"
        if not score_path.exists():
            continue
        for row in _read_tsv(score_path):
            key = (row["date"], row["ticker"])
            if key in truth:
                forecast.append(float(row["score"]))
                realized.append(truth[key])
    return forecast, realized


def spa_table(view: RunView, replications: int, block_length: float) -> list[list]:
    """Hansen SPA on per-date ranking loss, all candidates vs the base."""
    rows: list[list] = []
    base = view.base_model
    for u in view.universe_sizes:
        base_series = view.ic_loss.get((u, base))
        if not base_series:
            view.gaps.append(f"spa: no base ({base}) loss series for U={u}")
            continue
        candidates = {
            m: view.ic_loss[(u, m)]
            for m in view.models
            if m != base and (u, m) in view.ic_loss
        }
        if not candidates:
            continue
        dates = set(base_series)
        for series in candidates.values():
            dates &= set(series)
        dates = sorted(dates)
        if len(dates) < 10:
            view.gaps.append(f"spa: U={u}: only {len(dates)} shared dates")
            continue
        bench = np.array([base_series[d] for d in dates])
        cand = {
            m: np.array([s[d] for d in dates]) for m, s in sorted(candidates.items())
        }
        result = spa_test(
            bench,
            cand,
            replications=replications,
            mean_block_length=block_length,
            seed=derive_seed(view.seed, "spa", u),
        )
        rows.append([view.horizon, u, base, result.t_obs, result.p_value])
    return rows


# -- cost sensitivity --------------------------------------------------------------


def _backtest_days(view: RunView) -> dict[tuple[int, str], list[dict[str, float]]]:
    out: dict[tuple[int, str], list[dict[str, float]]] = {}
    for u in view.universe_sizes:
        for wkey in view.window_keys.get(u, []):
            path = view.run_dir / "windows" / wkey / "backtest.tsv"
            if not path.exists():
                continue
            for row in _read_tsv(path):
                out.setdefault((u, row["model"]), []).append(
                    {k: float(v) for k, v in row.items() if k not in ("model", "date")}
                )
    return out


def cost_tables(view: RunView) -> tuple[list[list], list[list]]:
    """(rank table in the published layout, full perturbation detail).

    Per model: net Sharpe of the concatenated daily series per universe,
    averaged across universes. Perturbed Sharpes are exact recomputations
    from the retained per-day turnover and short notional.
    """
    cost_bps = view.cfg_float("portfolio.cost_bps", 15.0)
    borrow_bps = view.cfg_float("portfolio.borrow_bps", 5.0)
    days = _backtest_days(view)
    grid = (
        ("base", 1.0, 1.0),
        ("cost-50", 0.5, 1.0),
        ("cost+50", 1.5, 1.0),
        ("borrow-50", 1.0, 0.5),
        ("borrow+50", 1.0, 1.5),
    )
    per_model: dict[str, dict[str, list[float]]] = {}
    for (u, model), rows in sorted(days.items()):
        for label, cs, bs in grid:
            net = [
                r["gross"]
                - r["turnover"] * cost_bps * cs / 10_000.0
                - r["short_notional"] * borrow_bps * bs / 10_000.0
                for r in rows
            ]
            s = sharpe_ratio(net)
            if s is not None:
                per_model.setdefault(model, {}).setdefault(label, []).append(s)

    detail_rows: list[list] = []
    base_sharpe: dict[str, float] = {}
    for model in sorted(per_model):
        for label, _, _ in grid:
            values = per_model[model].get(label, [])
            mean = float(np.mean(values)) if values else None
            detail_rows.append([model, label, mean])
            if label == "base" and mean is not None:
                base_sharpe[model] = mean

    ranked = sorted(base_sharpe.items(), key=lambda kv: (-kv[1], kv[0]))
    rank_rows = [
        [model, f"{sharpe:.3f}", rank]
        for rank, (model, sharpe) in enumerate(ranked, start=1)
    ]
    return rank_rows, detail_rows


# -- figures -----------------------------------------------------------------------


def _loss_points(
    view: RunView, model: str, ci_mode: str
) -> tuple[list[int], list[float], list[float | None]]:
    xs, ys, errs = [], [], []
    for u in view.universe_sizes:
        if ci_mode == "windows":
            losses = view.window_mean_loss.get((u, model), [])
            if not losses:
                continue
            mean = float(np.mean(losses))
            if len(losses) >= 2:
                half = 1.96 * float(np.std(losses, ddof=1)) / np.sqrt(len(losses))
            else:
                half = None
        else:
            series = view.ic_loss.get((u, model))
            if not series:
                continue
            ics = [1.0 - loss for loss in series.values()]
            mean, half = aggregate_ranking_loss(ics)
        xs.append(u)
        ys.append(mean)
        errs.append(half)
    return xs, ys, errs


def ols_slope(xs: list[float], ys: list[float]) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def _resolve_report_models(view: RunView) -> tuple[str, str]:
    """(direct-style model, thinking-style model) for the overlay figures."""
    direct = view.cfg("report.direct_model")
    thinking = view.cfg("report.thinking_model")
    kinds = {
        name.split(".")[1]: view.config[name]
        for name in view.config
        if name.startswith("model.") and name.endswith(".kind")
    }
    if not direct:
        direct = next((m for m, k in sorted(kinds.items()) if k == "llm_direct"), "")
    if not thinking:
        thinking = next((m for m, k in sorted(kinds.items()) if k == "tllm"), "")
    return direct, thinking


def _budget_of(view: RunView, model: str) -> int:
    raw = view.cfg(f"model.{model}.budget")
    if raw:
        return int(raw)
    kind = view.cfg(f"model.{model}.kind")
    return 512 if kind == "tllm" else 0


def generate_reports(run_dir: str | Path) -> Path:
    """Emit reports/ under the run directory; returns the reports path."""
    view = load_run(run_dir)
    out = view.run_dir / "reports"
    out.mkdir(parents=True, exist_ok=True)
    ci_mode = view.cfg("stats.ci_mode", "dates")
    replications = int(view.cfg("stats.bootstrap_reps", "1000"))
    block_length = view.cfg_float("stats.block_length", 5.0)

    write_tsv(out / "dm_table.tsv", DM_HEADER, dm_table(view))
    write_tsv(out / "pt_table.tsv", PT_HEADER, pt_table(view))
    write_tsv(
        out / "spa_table.tsv", SPA_HEADER, spa_table(view, replications, block_length)
    )
    rank_rows, detail_rows = cost_tables(view)
    write_tsv(out / "cost_sensitivity.tsv", COST_HEADER, rank_rows)
    write_tsv(
        out / "cost_sensitivity_detail.tsv",
        ["model", "perturbation", "net_sharpe"],
        detail_rows,
    )

    # (a) all models: loss vs U with CI bars
    fig = svgfig.Figure("Ranking loss vs universe size", "universe size U", "1 - IC")
    data_rows = []
    all_x: list[float] = []
    all_y: list[float] = []
    for i, model in enumerate(view.models):
        xs, ys, errs = _loss_points(view, model, ci_mode)
        if not xs:
            continue
        for x, y, e in zip(xs, ys, errs):
            data_rows.append([model, x, y, e])
            all_x.append(x)
            all_y.append(y + (e or 0.0))
            all_y.append(y - (e or 0.0))
    if all_x:
        fig.set_ranges(all_x, all_y)
        for i, model in enumerate(view.models):
            xs, ys, errs = _loss_points(view, model, ci_mode)
            if xs:
                fig.line(xs, ys, svgfig.PALETTE[i % len(svgfig.PALETTE)], model, errs)
    (out / "fig_loss_vs_u_all.svg").write_text(fig.render(), encoding="utf-8")
    write_tsv(
        out / "fig_loss_vs_u_all_data.tsv",
        ["model", "universe", "mean_loss", "ci_half"],
        data_rows,
    )

    # (b) direct vs thinking overlay
    direct, thinking = _resolve_report_models(view)
    fig = svgfig.Figure("Direct vs thinking ranking loss", "universe size U", "1 - IC")
    pair_rows = []
    pts: dict[str, tuple[list[int], list[float], list[float | None]]] = {}
    for model in (direct, thinking):
        if model and (xs := _loss_points(view, model, ci_mode))[0]:
            pts[model] = xs
            for x, y, e in zip(*xs):
                pair_rows.append([model, x, y, e])
    if pts:
        xs_all = [x for v in pts.values() for x in v[0]]
        ys_all = [
            y + s * (e or 0.0)
            for v in pts.values()
            for y, e in zip(v[1], v[2])
            for s in (1, -1)
        ]
        fig.set_ranges(xs_all, ys_all)
        for i, (model, (xs, ys, errs)) in enumerate(sorted(pts.items())):
            fig.line(xs, ys, svgfig.PALETTE[i % len(svgfig.PALETTE)], model, errs)
    else:
        view.gaps.append("fig_direct_vs_thinking: no direct/thinking models resolved")
    (out / "fig_direct_vs_thinking.svg").write_text(fig.render(), encoding="utf-8")
    write_tsv(
        out / "fig_direct_vs_thinking_data.tsv",
        ["model", "universe", "mean_loss", "ci_half"],
        pair_rows,
    )

    # (c) heatmap of thinking-family loss over (U, budget)
    heat_models = [m for m in (thinking,) if m] or view.models[:1]
    budgets = sorted({_budget_of(view, m) for m in heat_models})
    heat_rows = []
    cells: list[list[float | None]] = []
    for u in view.universe_sizes:
        row: list[float | None] = []
        for b in budgets:
            vals = []
            for m in heat_models:
                if _budget_of(view, m) == b:
                    series = view.ic_loss.get((u, m))
                    if series:
                        mean, _ = aggregate_ranking_loss(
                            [1.0 - loss for loss in series.values()]
                        )
                        vals.append(mean)
            cell = float(np.mean(vals)) if vals else None
            row.append(cell)
            heat_rows.append([u, b, cell])
        cells.append(row)
    svg = svgfig.heatmap(
        "Thinking-model ranking loss by universe size",
        [f"U={u}" for u in view.universe_sizes],
        [f"B={b}" for b in budgets],
        cells,
        "token budget B",
        "universe size U",
    )
    (out / "fig_loss_heatmap.svg").write_text(svg, encoding="utf-8")
    write_tsv(
        out / "fig_loss_heatmap_data.tsv",
        ["universe", "budget", "mean_loss"],
        heat_rows,
    )

    # (d) thinking-model loss vs U with OLS slope annotation
    slope_model = thinking or (view.models[0] if view.models else "")
    fig = svgfig.Figure(
        f"Ranking loss vs universe size: {slope_model}", "universe size U", "1 - IC"
    )
    slope_rows = []
    slope = None
    if slope_model:
        xs, ys, errs = _loss_points(view, slope_model, ci_mode)
        if len(xs) >= 2:
            slope = ols_slope(xs, ys)
            fig.set_ranges(xs, [y + s * (e or 0.0) for y, e in zip(ys, errs) for s in (1, -1)])
            fig.line(xs, ys, svgfig.PALETTE[1], slope_model, errs)
            fig.annotate(f"slope={slope:+.6f} per unit U")
            for x, y, e in zip(xs, ys, errs):
                slope_rows.append([slope_model, x, y, e, slope])
        else:
            view.gaps.append(f"fig_loss_slope: not enough points for {slope_model}")
    (out / "fig_loss_slope.svg").write_text(fig.render(), encoding="utf-8")
    write_tsv(
        out / "fig_loss_slope_data.tsv",
        ["model", "universe", "mean_loss", "ci_half", "slope"],
        slope_rows,
    )

    gap_text = "".join(f"{g}\n" for g in sorted(set(view.gaps)))
    (out / "gaps.txt").write_text(gap_text, encoding="utf-8")
    logger.info("reports written to %s (%d gaps)", out, len(view.gaps))
    return out

"""Flat dotted-key configuration files and the validated run configuration.

Config files are diff-friendly `key=value` lines with `#` comments, e.g.

    data.path=panel.tsv
    universe.sizes=5,11,21,36
    model.ridge.kind=ridge
    model.ridge.lambda=10

Validation collects every problem before failing so a bad config reports
all its errors at once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path

from .calibration import CalibrationConfig
from .errors import ConfigError
from .features import DEFAULT_XRANK_COLUMNS, FeatureBlockPolicy
from .models import ForecasterSpec
from .portfolio import PortfolioConfig

logger = logging.getLogger(__name__)

DEFAULT_UNIVERSE_SIZES = (5, 11, 21, 36)


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Parse `key=value` lines; blank lines and `#` comments are skipped."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}: line {lineno}: expected key=value")
            key, _, value = stripped.partition("=")
            out[key.strip()] = value.strip()
    return out


def format_kv(pairs: dict[str, str]) -> str:
    return "".join(f"{k}={pairs[k]}\n" for k in sorted(pairs))


@dataclass
class StatsConfig:
    bootstrap_reps: int = 1000
    block_length: float = 5.0
    base_model: str = "ridge"
    dm_axis: str = "date"  # date (pooled per-date MSE) | observation
    ci_mode: str = "dates"  # dates | windows


@dataclass
class TransportConfig:
    kind: str = "mock"  # mock | replay | http
    mock_rule: str = "noisy_oracle:0.5"
    url: str = ""
    body_template: str = ""
    response_path: str = ""
    auth_env: str = ""


@dataclass
class RunConfig:
    data_path: str
    output_dir: str
    seed: int = 42
    horizon: int = 1
    train_months: int = 48
    test_months: int = 1
    universe_sizes: tuple[int, ...] = DEFAULT_UNIVERSE_SIZES
    delimiter: str = "\t"
    column_map: dict[str, str] = field(default_factory=dict)
    models: dict[str, ForecasterSpec] = field(default_factory=dict)
    calibrate_models: tuple[str, ...] = ()
    blend_models: tuple[str, ...] = ()
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    portfolio: PortfolioConfig = field(default_factory=PortfolioConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    transport: TransportConfig = field(default_factory=TransportConfig)
    features: FeatureBlockPolicy = field(default_factory=FeatureBlockPolicy)
    cache_dir: str = ""  # defaults to <output_dir>/cache
    report_direct_model: str = ""
    report_thinking_model: str = ""
    raw: dict[str, str] = field(default_factory=dict)


def _parse_delimiter(text: str) -> str:
    return {"tab": "\t", "comma": ",", "\\t": "\t", ",": ","}.get(text, text)


def load_run_config(path: str | Path) -> RunConfig:
    """Parse and validate a run config, reporting every error at once."""
    kv = parse_kv_file(path)
    errors: list[str] = []

    def need(key: str) -> str | None:
        if key not in kv:
            errors.append(f"missing required key {key}")
            return None
        return kv[key]

    def get_int(key: str, default: int) -> int:
        try:
            return int(kv.get(key, default))
        except ValueError:
            errors.append(f"{key} must be an integer, got {kv[key]!r}")
            return default

    def get_float(key: str, default: float) -> float:
        try:
            return float(kv.get(key, default))
        except ValueError:
            errors.append(f"{key} must be a number, got {kv[key]!r}")
            return default

    data_path = need("data.path")
    output_dir = need("run.output")
    seed = get_int("run.seed", 42)
    horizon = get_int("horizon.k", 1)
    if horizon < 1:
        errors.append("horizon.k must be >= 1")
    train_months = get_int("schedule.train_months", 48)
    test_months = get_int("schedule.test_months", 1)

    sizes: tuple[int, ...] = DEFAULT_UNIVERSE_SIZES
    if "universe.sizes" in kv:
        try:
            sizes = tuple(int(x) for x in kv["universe.sizes"].split(",") if x.strip())
        except ValueError:
            errors.append(f"universe.sizes must be comma-separated integers")
    if not sizes or any(s < 1 for s in sizes):
        errors.append("universe.sizes must contain positive integers")

    column_map = {}
    for logical in ("ticker", "date", "close", "volume"):
        if f"col.{logical}" in kv:
            column_map[logical] = kv[f"col.{logical}"]

    # model.<name>.<param> blocks
    model_params: dict[str, dict[str, str]] = {}
    for key, value in kv.items():
        if key.startswith("model."):
            parts = key.split(".")
            if len(parts) < 3:
                errors.append(f"malformed model key {key}")
                continue
            model_params.setdefault(parts[1], {})[".".join(parts[2:])] = value
    models: dict[str, ForecasterSpec] = {}
    for name, params in sorted(model_params.items()):
        kind = params.pop("kind", None)
        if kind is None:
            errors.append(f"model.{name}.kind is required")
            continue
        budget_default = 512 if kind == "tllm" else 0
        try:
            budget = int(params.pop("budget", budget_default))
            models[name] = ForecasterSpec(
                name=name,
                kind=kind,
                params=params,
                budget=budget,
                model_id=params.pop("model_id", name),
            )
        except (ConfigError, ValueError) as exc:
            errors.append(str(exc))
    if not models:
        errors.append("at least one model.<name>.kind entry is required")

    def name_list(key: str) -> tuple[str, ...]:
        names = tuple(x.strip() for x in kv.get(key, "").split(",") if x.strip())
        for n in names:
            if n not in models:
                errors.append(f"{key} names unknown model {n!r}")
        return names

    calibrate_models = name_list("calibration.models")
    blend_models = name_list("calibration.blend_models")

    try:
        calibration = CalibrationConfig(
            winsor_lower=get_float("calibration.winsor_lower", 5.0),
            winsor_upper=get_float("calibration.winsor_upper", 95.0),
            blend_weight=get_float("calibration.blend_weight", 0.5),
            blend_partner=kv.get("calibration.blend_partner", "ridge"),
        )
        if blend_models and calibration.blend_partner not in models:
            errors.append(
                f"calibration.blend_partner {calibration.blend_partner!r} is not a model"
            )
    except ValueError as exc:
        errors.append(str(exc))
        calibration = CalibrationConfig()

    try:
        portfolio = PortfolioConfig(
            p_long=get_float("portfolio.p_long", 0.2),
            p_short=get_float("portfolio.p_short", 0.2),
            turnover_cap=get_float("portfolio.turnover_cap", 1.0),
            cost_bps=get_float("portfolio.cost_bps", 15.0),
            borrow_bps=get_float("portfolio.borrow_bps", 5.0),
        )
    except ValueError as exc:
        errors.append(str(exc))
        portfolio = PortfolioConfig()

    stats = StatsConfig(
        bootstrap_reps=get_int("stats.bootstrap_reps", 1000),
        block_length=get_float("stats.block_length", 5.0),
        base_model=kv.get("stats.base_model", "ridge"),
        dm_axis=kv.get("stats.dm_axis", "date"),
        ci_mode=kv.get("stats.ci_mode", "dates"),
    )
    if stats.base_model not in models:
        errors.append(f"stats.base_model {stats.base_model!r} is not a configured model")
    if stats.dm_axis not in ("date", "observation"):
        errors.append("stats.dm_axis must be 'date' or 'observation'")
    if stats.ci_mode not in ("dates", "windows"):
        errors.append("stats.ci_mode must be 'dates' or 'windows'")

    transport = TransportConfig(
        kind=kv.get("transport.kind", "mock"),
        mock_rule=kv.get("transport.mock_rule", "noisy_oracle:0.5"),
        url=kv.get("transport.url", ""),
        body_template=kv.get("transport.body_template", ""),
        response_path=kv.get("transport.response_path", ""),
        auth_env=kv.get("transport.auth_env", ""),
    )
    if transport.kind not in ("mock", "replay", "http"):
        errors.append("transport.kind must be mock, replay, or http")
    if transport.kind == "http" and not transport.url:
        errors.append("transport.url is required for transport.kind=http")

    xrank_cols = DEFAULT_XRANK_COLUMNS
    if "features.xrank_columns" in kv:
        xrank_cols = tuple(
            x.strip() for x in kv["features.xrank_columns"].split(",") if x.strip()
        )
    features = FeatureBlockPolicy(
        xrank_columns=xrank_cols,
        rich_min_universe=get_int("features.rich_gate_u", 21),
    )

    if data_path is not None and not Path(data_path).exists():
        errors.append(f"data.path does not exist: {data_path}")

    if errors:
        raise ConfigError(
            "invalid run config:\n" + "\n".join(f"  - {e}" for e in errors)
        )

    return RunConfig(
        data_path=data_path,
        output_dir=output_dir,
        seed=seed,
        horizon=horizon,
        train_months=train_months,
        test_months=test_months,
        universe_sizes=sizes,
        delimiter=_parse_delimiter(kv.get("data.delimiter", "tab")),
        column_map=column_map,
        models=models,
        calibrate_models=calibrate_models,
        blend_models=blend_models,
        calibration=calibration,
        portfolio=portfolio,
        stats=stats,
        transport=transport,
        features=features,
        cache_dir=kv.get("cache.dir", ""),
        report_direct_model=kv.get("report.direct_model", ""),
        report_thinking_model=kv.get("report.thinking_model", ""),
        raw=kv,
    )


def load_synth_spec(path: str | Path):
    """Parse a synthetic-panel spec file (synth.* keys)."""
    from .synth import SynthSpec

    kv = parse_kv_file(path)
    betas = {}
    for key, value in kv.items():
        if key.startswith("synth.beta."):
            betas[key[len("synth.beta."):]] = float(value)
    try:
        return SynthSpec(
            tickers=int(kv.get("synth.tickers", 12)),
            months=int(kv.get("synth.months", 54)),
            start=Date.fromisoformat(kv.get("synth.start", "2019-01-01")),
            seed=int(kv.get("synth.seed", 7)),
            noise=float(kv.get("synth.noise", 0.01)),
            heavy_tail=kv.get("synth.heavy_tail", "false").lower() in ("1", "true", "yes"),
            betas=betas,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None

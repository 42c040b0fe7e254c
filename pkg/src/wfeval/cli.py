"""Command-line entry points.

    wfeval run <config>        execute the walk-forward pipeline
    wfeval report <run-dir>    emit tables and figures from a completed run
    wfeval synth <spec> <out>  generate a synthetic panel + ground-truth sidecar
    wfeval verify <run-dir>    re-check invariants on stored run outputs

Exit code 0 means success (for `run`: no window failed fatally).
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import date as Date
from pathlib import Path

from .config import load_run_config, load_synth_spec, parse_kv_file
from .engine import run_walkforward
from .errors import ConfigError, WfevalError
from .reports import generate_reports
from .synth import write_panel

logger = logging.getLogger(__name__)


def cmd_run(config_path: str) -> int:
    try:
        config = load_run_config(config_path)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    result = run_walkforward(config)
    ok = len(result.outcomes) - len(result.failed_windows)
    print(f"run complete: {ok}/{len(result.outcomes)} windows ok -> {result.run_dir}")
    for outcome in result.failed_windows:
        print(f"  FAILED {outcome.key}: {outcome.error}", file=sys.stderr)
    if result.leakage_violations():
        print(f"  LEAKAGE VIOLATIONS: {result.leakage_violations()}", file=sys.stderr)
        return 1
    return 1 if result.failed_windows else 0


def cmd_report(run_dir: str) -> int:
    try:
        out = generate_reports(run_dir)
    except (WfevalError, OSError) as exc:
        print(f"report failed: {exc}", file=sys.stderr)
        return 1
    print(f"reports written to {out}")
    gaps = (out / "gaps.txt").read_text(encoding="utf-8").strip()
    if gaps:
        print("gaps:")
        for line in gaps.split("\n"):
            print(f"  {line}")
    return 0


def cmd_synth(spec_path: str, out_path: str) -> int:
    try:
        spec = load_synth_spec(spec_path)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    path = write_panel(spec, out_path)
    print(f"synthetic panel written to {path}")
    return 0


def cmd_verify(run_dir: str) -> int:
    """Re-check stored-run invariants; prints one line per check."""
    root = Path(run_dir)
    problems: list[str] = []

    manifest_path = root / "manifest.txt"
    if not manifest_path.exists():
        print(f"verify failed: {manifest_path} missing", file=sys.stderr)
        return 1
    manifest = parse_kv_file(manifest_path)

    # chronology: every window strictly train_end < test_start
    bad_chrono = 0
    for key, value in manifest.items():
        if not key.startswith("schedule."):
            continue
        train_part, test_part = value.split("|")
        train_end = Date.fromisoformat(train_part.split("..")[1])
        test_start = Date.fromisoformat(test_part.split("..")[0])
        if not train_end < test_start:
            bad_chrono += 1
    _check(problems, "chronology", bad_chrono == 0, f"{bad_chrono} windows violate")

    leak_bad = sum(
        1
        for key, value in manifest.items()
        if key.startswith("leakage.") and key != "leakage.violations"
        and not value.startswith("ok")
    )
    _check(problems, "leakage", leak_bad == 0, f"{leak_bad} phases flagged")

    # backtest identity: net = gross - trade_cost - borrow_cost
    mismatches = 0
    rows_checked = 0
    for path in sorted(root.glob("windows/*/backtest.tsv")):
        lines = path.read_text(encoding="utf-8").splitlines()
        header = lines[0].split("\t")
        for line in lines[1:]:
            row = dict(zip(header, line.split("\t")))
            rows_checked += 1
            net = float(row["gross"]) - float(row["trade_cost"]) - float(row["borrow_cost"])
            if abs(net - float(row["net"])) > 1e-12:
                mismatches += 1
    _check(
        problems, "pnl-identity", mismatches == 0,
        f"{mismatches}/{rows_checked} rows mismatch",
    )

    # summary consistency: mean_loss recomputable from per-date metrics
    summary_bad = 0
    for path in sorted(root.glob("windows/*/summary.tsv")):
        metrics_path = path.parent / "metrics.tsv"
        per_model: dict[str, list[float]] = {}
        lines = metrics_path.read_text(encoding="utf-8").splitlines()
        header = lines[0].split("\t")
        for line in lines[1:]:
            row = dict(zip(header, line.split("\t")))
            if row["ic"]:
                per_model.setdefault(row["model"], []).append(float(row["ic"]))
        lines = path.read_text(encoding="utf-8").splitlines()
        header = lines[0].split("\t")
        for line in lines[1:]:
            row = dict(zip(header, line.split("\t")))
            ics = per_model.get(row["model"], [])
            if not row["mean_loss"]:
                continue
            expected = 1.0 - sum(ics) / len(ics) if ics else None
            if expected is None or abs(expected - float(row["mean_loss"])) > 1e-9:
                summary_bad += 1
    _check(problems, "summary-consistency", summary_bad == 0, f"{summary_bad} rows drift")

    if problems:
        for p in problems:
            print(f"verify FAIL: {p}", file=sys.stderr)
        return 1
    print("verify ok")
    return 0


def _check(problems: list[str], name: str, ok: bool, detail: str) -> None:
    print(f"  [{'ok' if ok else 'FAIL'}] {name}" + ("" if ok else f": {detail}"))
    if not ok:
        problems.append(f"{name}: {detail}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="wfeval",
        description="Walk-forward evaluation engine for cross-sectional forecasters",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the pipeline from a config file")
    p_run.add_argument("config")

    p_report = sub.add_parser("report", help="emit tables and figures for a run")
    p_report.add_argument("run_dir")

    p_synth = sub.add_parser("synth", help="generate a synthetic panel")
    p_synth.add_argument("spec")
    p_synth.add_argument("out")

    p_verify = sub.add_parser("verify", help="re-check invariants on a run directory")
    p_verify.add_argument("run_dir")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "report":
        return cmd_report(args.run_dir)
    if args.command == "synth":
        return cmd_synth(args.spec, args.out)
    return cmd_verify(args.run_dir)


if __name__ == "__main__":
    sys.exit(main())

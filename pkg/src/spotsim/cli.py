"""Operator entry point: validate configs, run scenarios, sweep, rebuild reports.

Exit codes: 0 success, 2 invalid configuration, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
from pathlib import Path

from . import metrics, trace as trace_io
from .engine import run_scenario
from .rng import sweep_seed
from .scenario import ScenarioError, load_scenario, parse_override_value

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3

OUTPUT_DIR_ENV = "SPOTSIM_OUT"


def _parse_sets(pairs: list[str]) -> dict:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ScenarioError([f"--set {pair!r}: expected key=value"])
        key, _, value = pair.partition("=")
        overrides[key] = parse_override_value(value)
    return overrides


def _parse_sweeps(pairs: list[str]) -> dict[str, list]:
    axes = {}
    for pair in pairs:
        if "=" not in pair:
            raise ScenarioError([f"--sweep {pair!r}: expected key=v1,v2,..."])
        key, _, values = pair.partition("=")
        axes[key] = [parse_override_value(v) for v in values.split(",")]
    return axes


def _report_json(report: metrics.MetricsReport) -> str:
    return json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"


def _summary_line(report: metrics.MetricsReport) -> str:
    cost = report.cost_per_core_hour
    preempted = report.preempted_job_fraction
    eff = report.cpu_efficiency
    return ("cost/core-hour {} | preempted jobs {} | cpu efficiency {}".format(
        f"${cost:.4f}" if cost is not None else "n/a",
        f"{100 * preempted:.1f}%" if preempted is not None else "n/a",
        f"{100 * eff:.1f}%" if eff is not None else "n/a"))


def _write_run_outputs(out_dir: Path, run_trace: list[dict],
                       report: metrics.MetricsReport) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_io.write_trace(out_dir / "trace.jsonl", run_trace)
    (out_dir / "report.json").write_text(_report_json(report), encoding="utf-8")
    metrics.write_series_csv(report, out_dir / "series.csv")
    metrics.write_accounting_csv(run_trace, out_dir / "accounting.csv")


def cmd_validate(args: argparse.Namespace) -> int:
    load_scenario(args.scenario, overrides=_parse_sets(args.set), seed=args.seed)
    print("ok")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario, overrides=_parse_sets(args.set),
                             seed=args.seed)
    result = run_scenario(scenario)
    report = metrics.build_report(result.trace)
    _write_run_outputs(Path(args.out), result.trace, report)
    print(_summary_line(report))
    return EXIT_OK


def _sweep_points(axes: dict[str, list]) -> list[dict]:
    points = [{}]
    for key in sorted(axes):
        points = [{**point, key: value} for point in points for value in axes[key]]
    return points


def _run_sweep_point(scenario_path: str | None, base_overrides: dict,
                     point: dict, base_seed: int) -> dict:
    overrides = {**base_overrides, **point}
    seed = sweep_seed(base_seed, point)
    scenario = load_scenario(scenario_path, overrides=overrides, seed=seed)
    result = run_scenario(scenario)
    report = metrics.build_report(result.trace)
    row = {key: point[key] for key in sorted(point)}
    row.update({
        "seed": seed,
        "cost_per_core_hour": report.cost_per_core_hour,
        "preempted_job_fraction": report.preempted_job_fraction,
        "cpu_efficiency": report.cpu_efficiency,
        "completed_jobs": report.jobs["completed"],
        "failed_jobs": report.jobs["failed_final"],
        "invoice_total_usd": report.invoice.to_json_dict()["total"],
    })
    return row


def cmd_sweep(args: argparse.Namespace) -> int:
    axes = _parse_sweeps(args.sweep)
    if not axes:
        raise ScenarioError(["--sweep: at least one axis required"])
    base_overrides = _parse_sets(args.set)
    base_scenario = load_scenario(args.scenario, overrides=base_overrides,
                                  seed=args.seed)
    base_seed = base_scenario.seed
    points = _sweep_points(axes)

    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_run_sweep_point,
                                 [args.scenario] * len(points),
                                 [base_overrides] * len(points),
                                 points,
                                 [base_seed] * len(points)))
    else:
        rows = [_run_sweep_point(args.scenario, base_overrides, point, base_seed)
                for point in points]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sweep_path = out_dir / "sweep.csv"
    with open(sweep_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {sweep_path} ({len(rows)} runs)")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    records = trace_io.read_trace(args.trace)
    report = metrics.build_report(records)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(_report_json(report), encoding="utf-8")
    print(_summary_line(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spotsim",
        description="Discrete-event simulator and cost engine for elastic "
                    "spot-market batch provisioning.")
    default_out = os.environ.get(OUTPUT_DIR_ENV, "out")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_out=True):
        p.add_argument("--scenario", default=None,
                       help="scenario YAML path (default: packaged scenario)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="config override, repeatable (e.g. bid.fraction=0.5)")
        if with_out:
            p.add_argument("--out", default=default_out,
                           help=f"output directory (default ${OUTPUT_DIR_ENV} or ./out)")

    p_validate = sub.add_parser("validate", help="check a scenario file")
    common(p_validate, with_out=False)
    p_validate.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="run one scenario")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    common(p_sweep)
    p_sweep.add_argument("--sweep", action="append", default=[],
                         metavar="KEY=V1,V2,...", help="sweep axis, repeatable")
    p_sweep.add_argument("--workers", type=int, default=1,
                         help="concurrent sweep workers")
    p_sweep.set_defaults(func=cmd_sweep)

    p_report = sub.add_parser("report", help="rebuild report.json from a trace")
    p_report.add_argument("--trace", required=True, help="trace.jsonl path")
    p_report.add_argument("--out", default=default_out)
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        for violation in exc.violations:
            print(f"invalid: {violation}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # runtime failure, distinct from config errors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

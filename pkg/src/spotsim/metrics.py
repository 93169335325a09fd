"""Run-report aggregation: every field is a pure function of the event trace.

Rebuilding a report from a persisted trace reproduces the original byte for
byte. The summary formulas also work standalone on externally supplied
totals, so formula correctness is testable without running a simulation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import billing, cost_model, provisioner, scheduler
from .billing import Invoice, PricingTable, UsageRecord
from .money import to_usd, usd

SECONDS_PER_HOUR = 3600
PILOT_DEATH_REASONS = (provisioner.REASON_PREEMPTED, provisioner.REASON_IDLE_TIMEOUT,
                       provisioner.REASON_MAX_LIFETIME)


def efficiency_summary(wall_all_hours: float, wall_final_hours: float,
                       cpu_final_hours: float) -> dict:
    """CPU efficiency and preemption inefficiency from wall/CPU totals."""
    out = {"cpu_efficiency": None, "preemption_inefficiency": None}
    if wall_final_hours > 0:
        out["cpu_efficiency"] = cpu_final_hours / wall_final_hours
    if wall_all_hours > 0:
        out["preemption_inefficiency"] = 1.0 - wall_final_hours / wall_all_hours
    return out


def unit_cost_per_core_hour(total_usd: float, wall_hours: float) -> float:
    if wall_hours <= 0:
        raise ValueError("wall hours must be > 0")
    return total_usd / wall_hours


@dataclass
class MetricsReport:
    schema_version: int
    seed: int
    duration_seconds: int
    jobs: dict
    preemption_histogram: dict
    preempted_job_fraction: float | None
    wall_all_attempts_hours: float
    wall_final_attempts_hours: float
    cpu_final_attempts_hours: float
    cpu_efficiency: float | None
    preemption_inefficiency: float | None
    cost_per_core_hour: float | None
    invoice: Invoice
    per_sample: dict
    instances: dict
    alarms: int
    truncated_requests: int
    unfulfilled_requests: int
    series_bucket_seconds: int
    core_count_series: list
    total_core_seconds: int
    placement: dict | None = None

    def to_json_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "duration_seconds": self.duration_seconds,
            "jobs": self.jobs,
            "preemption_histogram": self.preemption_histogram,
            "preempted_job_fraction": self.preempted_job_fraction,
            "times": {
                "wall_all_attempts_hours": self.wall_all_attempts_hours,
                "wall_final_attempts_hours": self.wall_final_attempts_hours,
                "cpu_final_attempts_hours": self.cpu_final_attempts_hours,
                "cpu_efficiency": self.cpu_efficiency,
                "preemption_inefficiency": self.preemption_inefficiency,
            },
            "cost_per_core_hour": self.cost_per_core_hour,
            "invoice": self.invoice.to_json_dict(),
            "per_sample": self.per_sample,
            "instances": self.instances,
            "alarms": self.alarms,
            "requests": {
                "truncated": self.truncated_requests,
                "unfulfilled": self.unfulfilled_requests,
            },
            "series_bucket_seconds": self.series_bucket_seconds,
            "core_count_series": self.core_count_series,
            "total_core_seconds": self.total_core_seconds,
            "placement": self.placement,
        }


@dataclass
class _JobAgg:
    sample: str
    preempts: int = 0
    starts: int = 0
    state: str = scheduler.JOB_IDLE
    final_wall: int = 0


def _core_series(intervals: Sequence[tuple[int, int, int]], duration: int,
                 bucket: int) -> tuple[list, int]:
    """Time-weighted average running cores per bucket plus total core-seconds."""
    n_buckets = max(1, math.ceil(duration / bucket))
    core_seconds = [0] * n_buckets
    total = 0
    for start, end, cores in intervals:
        end = min(end, duration)
        if end <= start:
            continue
        total += (end - start) * cores
        first = start // bucket
        last = (end - 1) // bucket
        for k in range(first, last + 1):
            lo = max(start, k * bucket)
            hi = min(end, (k + 1) * bucket)
            core_seconds[k] += (hi - lo) * cores
    series = []
    for k in range(n_buckets):
        width = min(duration, (k + 1) * bucket) - k * bucket
        series.append([k * bucket, core_seconds[k] / width if width else 0.0])
    return series, total


def build_report(trace: Sequence[dict]) -> MetricsReport:
    """Fold an event trace into the run report."""
    if not trace or trace[0].get("ev") != "run_start":
        raise ValueError("trace must begin with a run_start record")
    head = trace[0]
    scenario = head["scenario"]
    duration = scenario["duration_seconds"]
    pricing = PricingTable.from_config(scenario["pricing"])
    wl = scenario["workload"]
    samples = {record["name"]: record for record in wl["samples"]}
    region_of_market = {}
    for record in scenario["markets"]:
        market_id = f"{record['region']}{record['zone']}:{record['instance_type']}"
        region_of_market[market_id] = record["region"]

    jobs: dict[int, _JobAgg] = {}
    submitted_by_sample: dict[str, int] = {name: 0 for name in samples}
    completed_by_sample: dict[str, int] = {name: 0 for name in samples}
    failed_by_sample: dict[str, int] = {name: 0 for name in samples}
    completed_wall_by_sample: dict[str, int] = {name: 0 for name in samples}
    wall_all = 0
    wall_final = 0
    cpu_final = 0
    attempts = 0
    egress_kb = 0.0
    get_requests = 0
    remote_reads_gb = 0.0
    running_end = 0
    idle_end = 0

    inst_market: dict[int, str] = {}
    inst_launch: dict[int, tuple[int, int]] = {}  # id -> (launch t, cores)
    intervals: list[tuple[int, int, int]] = []
    usage_records: list[UsageRecord] = []
    terminations: dict[str, int] = {reason: 0 for reason in provisioner.TERMINATION_REASONS}
    exposure_seconds = 0
    alarms = 0
    truncated = 0
    unfulfilled = 0

    stage_in = wl["io_mode"] == "stage_in"
    reads_per_attempt = wl["input_files_per_job"] if stage_in else wl["reads_per_job"]
    cross_region_reads = (scenario["storage"]["placement"] == "single_region"
                          and wl["input_gb_per_job"] > 0)

    for record in trace:
        kind = record["ev"]
        if kind == "submit":
            jobs[record["job"]] = _JobAgg(sample=record["sample"])
            submitted_by_sample[record["sample"]] += 1
        elif kind == "start":
            job = jobs[record["job"]]
            job.starts += 1
            job.state = scheduler.JOB_RUNNING
            attempts += 1
            get_requests += reads_per_attempt
            if cross_region_reads:
                market_id = inst_market[record["inst"]]
                if region_of_market[market_id] != scenario["storage"]["data_region"]:
                    remote_reads_gb += wl["input_gb_per_job"]
        elif kind == "attempt_end":
            job = jobs[record["job"]]
            wall_all += record["wall"]
            outcome = record["outcome"]
            if outcome == scheduler.OUTCOME_COMPLETED:
                job.state = scheduler.JOB_COMPLETED
                job.final_wall = record["wall"]
                wall_final += record["wall"]
                cpu_final += record["cpu"]
                completed_by_sample[job.sample] += 1
                completed_wall_by_sample[job.sample] += record["wall"]
                egress_kb += record["staged_kb"]
            elif outcome == scheduler.OUTCOME_FAILED_FINAL:
                job.state = scheduler.JOB_FAILED
                wall_final += record["wall"]
                cpu_final += record["cpu"]
                failed_by_sample[job.sample] += 1
            else:
                job.state = scheduler.JOB_IDLE
        elif kind == "job_requeue":
            job = jobs[record["job"]]
            wall_all += record["wall_partial"]
            if record["reason"] == "preempted":
                job.preempts += 1
            job.state = scheduler.JOB_IDLE
        elif kind == "fulfill":
            inst_market[record["inst"]] = record["market"]
            inst_launch[record["inst"]] = (record["t"], record["cores"])
        elif kind == "terminate":
            launch_t, cores = inst_launch[record["inst"]]
            intervals.append((launch_t, record["t"], cores))
            terminations[record["reason"]] += 1
            exposure_seconds += record["t"] - launch_t
            usage_records.append(UsageRecord(
                instance_id=record["inst"], market_id=record["market"],
                launch_time=launch_t, termination_time=record["t"],
                termination_reason=record["reason"],
                hourly_prices_musd=record["hourly_prices_musd"]))
        elif kind == "probe":
            if record["alarm"]:
                alarms += 1
        elif kind == "cycle":
            truncated += record.get("truncated", 0)
            unfulfilled += sum(record["requested"].values()) - \
                sum(record["fulfilled"].values())
        elif kind == "run_end":
            running_end = record["jobs_running"]
            idle_end = record["jobs_idle"]

    # histogram over jobs that reached a terminal state
    bins = {"0": 0, "1": 0, ">1": 0}
    terminal = 0
    for job in jobs.values():
        if job.state in (scheduler.JOB_COMPLETED, scheduler.JOB_FAILED):
            terminal += 1
            if job.preempts == 0:
                bins["0"] += 1
            elif job.preempts == 1:
                bins["1"] += 1
            else:
                bins[">1"] += 1
    histogram = {key: {"count": count,
                       "fraction": count / terminal if terminal else None}
                 for key, count in bins.items()}
    preempted_fraction = (bins["1"] + bins[">1"]) / terminal if terminal else None

    wall_all_hours = wall_all / SECONDS_PER_HOUR
    wall_final_hours = wall_final / SECONDS_PER_HOUR
    cpu_final_hours = cpu_final / SECONDS_PER_HOUR
    summary = efficiency_summary(wall_all_hours, wall_final_hours, cpu_final_hours)

    cache_musd = provisioner.cache_tier_cost(
        scenario["cache_tier"]["zones"], scenario["cache_tier"]["servers_per_zone"],
        usd(scenario["cache_tier"]["price_usd_per_hour"]), duration)
    n_regions = len(set(region_of_market.values()))
    copies = n_regions if scenario["storage"]["placement"] == "replicate" else 1
    storage_gb_months = scenario["storage"]["dataset_gb"] * copies * \
        duration / billing.SECONDS_PER_MONTH
    invoice = billing.build_invoice(
        period_seconds=duration, records=usage_records,
        egress_gb=egress_kb / 1e6, get_count=get_requests,
        remote_reads_gb=remote_reads_gb, cache_tier_musd=cache_musd,
        storage_gb_months=storage_gb_months, table=pricing)

    cost_core_hour = None
    if wall_all_hours > 0:
        cost_core_hour = unit_cost_per_core_hour(to_usd(invoice.total_musd),
                                                 wall_all_hours)

    per_sample = {}
    for name, record in samples.items():
        terminal_n = completed_by_sample[name] + failed_by_sample[name]
        per_sample[name] = {
            "jobs_submitted": submitted_by_sample[name],
            "completed": completed_by_sample[name],
            "failed_final": failed_by_sample[name],
            "events": completed_by_sample[name] * record["events_per_job"],
            "failure_rate": failed_by_sample[name] / terminal_n if terminal_n else None,
            "mean_job_seconds": (completed_wall_by_sample[name] / completed_by_sample[name]
                                 if completed_by_sample[name] else None),
            "cost_per_100_events": (cost_model.cost_per_100_events(
                record["time_per_event_seconds"], cost_core_hour)
                if cost_core_hour is not None else None),
        }

    # Mean pilot lifetime uses the censoring-corrected estimator: total
    # provisioned hours over cause-terminated count; end-of-run admin
    # terminations contribute exposure, not lifetimes.
    deaths = sum(terminations[reason] for reason in PILOT_DEATH_REASONS)
    exposure_hours = exposure_seconds / SECONDS_PER_HOUR
    mean_pilot = exposure_hours / deaths if deaths else None
    mean_job = wall_all_hours / attempts if attempts else None
    ratio = mean_pilot / mean_job if mean_pilot and mean_job else None

    bucket = scenario["report"]["series_bucket_seconds"]
    series, total_core_seconds = _core_series(intervals, duration, bucket)

    placement = None
    if cost_core_hour is not None:
        cm = scenario["cost_model"]
        decision = cost_model.placement_decision(
            demand_cores=len(jobs),
            onprem_free_cores=cm["onprem_free_cores"],
            quote=cost_model.CloudQuote(cost_core_hour, cm["cloud_uncertainty_fraction"]),
            onprem=cost_model.OnPremParams(cm["onprem_cost_per_core_hour"],
                                           cm["onprem_uncertainty_fraction"],
                                           cm["onprem_utilization"]),
            premium_multiplier=cm["premium_multiplier"],
            data_intensity_gb_per_core_hour=(egress_kb / 1e6) / wall_all_hours,
            egress_usd_per_gb=scenario["pricing"]["egress_tier1_usd_per_gb"],
            egress_waiver_fraction=scenario["pricing"]["egress_waiver_fraction"],
            cloud_score=cost_model.BenchmarkScore(cm["cloud_benchmark_events_per_second"]),
            onprem_score=cost_model.BenchmarkScore(cm["onprem_benchmark_events_per_second"]))
        placement = decision.rationale

    completed_total = sum(completed_by_sample.values())
    failed_total = sum(failed_by_sample.values())
    return MetricsReport(
        schema_version=head["schema_version"],
        seed=head["seed"],
        duration_seconds=duration,
        jobs={
            "submitted": len(jobs),
            "completed": completed_total,
            "failed_final": failed_total,
            "running_end": running_end,
            "idle_end": idle_end,
            "attempts": attempts,
        },
        preemption_histogram=histogram,
        preempted_job_fraction=preempted_fraction,
        wall_all_attempts_hours=wall_all_hours,
        wall_final_attempts_hours=wall_final_hours,
        cpu_final_attempts_hours=cpu_final_hours,
        cpu_efficiency=summary["cpu_efficiency"],
        preemption_inefficiency=summary["preemption_inefficiency"],
        cost_per_core_hour=cost_core_hour,
        invoice=invoice,
        per_sample=per_sample,
        instances={
            "launched": len(inst_launch),
            "terminations_by_reason": terminations,
            "mean_pilot_lifetime_hours": mean_pilot,
            "mean_job_lifetime_hours": mean_job,
            "lifetime_ratio": ratio,
        },
        alarms=alarms,
        truncated_requests=truncated,
        unfulfilled_requests=unfulfilled,
        series_bucket_seconds=bucket,
        core_count_series=series,
        total_core_seconds=total_core_seconds,
        placement=placement,
    )


def emit_series(report: MetricsReport, bucket: int) -> list:
    """Core-count rows at the requested cadence.

    The cadence must be a multiple of the report's native bucket; averages
    are re-weighted exactly, so the series integral is preserved.
    """
    native = report.series_bucket_seconds
    if bucket == native:
        return [list(row) for row in report.core_count_series]
    if bucket <= 0 or bucket % native:
        raise ValueError(f"bucket must be a positive multiple of {native}")
    step = bucket // native
    duration = report.duration_seconds
    rows = []
    series = report.core_count_series
    for i in range(0, len(series), step):
        chunk = series[i:i + step]
        weighted = 0.0
        width_total = 0
        for t, value in chunk:
            width = min(duration, t + native) - t
            weighted += value * width
            width_total += width
        rows.append([series[i][0], weighted / width_total if width_total else 0.0])
    return rows


def write_series_csv(report: MetricsReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t_seconds", "running_cores"])
        for t, cores in report.core_count_series:
            writer.writerow([t, f"{cores:.6f}"])


def write_accounting_csv(trace: Sequence[dict], path: str | Path) -> None:
    """Hourly probe log: one row per probe per market."""
    reasons = list(provisioner.TERMINATION_REASONS)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t_seconds", "market_id", "running", "spot_price_usd"] + reasons)
        for record in trace:
            if record.get("ev") != "probe":
                continue
            for market_id, row in record["markets"].items():
                terms = record["terminations"].get(market_id, {})
                writer.writerow(
                    [record["t"], market_id, row["running"],
                     f"{to_usd(row['price_musd']):.6f}"] +
                    [terms.get(reason, 0) for reason in reasons])

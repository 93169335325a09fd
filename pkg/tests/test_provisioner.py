"""Bids, demand distribution, provider limits, cache tier, pilot lifecycle."""

from __future__ import annotations

import pytest

from spotsim.money import usd
from spotsim.provisioner import (BidStrategy, IllegalTransition, Instance,
                                 InstanceState, PilotPolicy, ProviderLimits,
                                 ResourceEntry, cache_tier_cost, compute_bid,
                                 compute_demand, truncate_requests)
from spotsim.engine import run_scenario
from spotsim.metrics import build_report
from spotsim.scenario import scenario_from_dict

from conftest import tiny_scenario_dict

DEFAULT_STRATEGY = BidStrategy()


# -- compute_bid -----------------------------------------------------------------


def test_bid_quarter_of_on_demand_m3_xlarge():
    assert compute_bid(DEFAULT_STRATEGY, usd(0.266)) == usd(0.0665)


def test_bid_quarter_of_on_demand_c3_xlarge():
    assert compute_bid(DEFAULT_STRATEGY, usd(0.21)) == usd(0.0525)


def test_bid_half_fraction():
    assert compute_bid(BidStrategy(fraction=0.5), usd(0.10)) == usd(0.05)


def test_bid_fraction_one_is_invalid():
    assert BidStrategy(fraction=1.0).violations()
    assert BidStrategy(fraction=0.0).violations()
    assert not DEFAULT_STRATEGY.violations()


def test_bid_rounds_to_four_decimals():
    # 0.33 * 0.1234 = 0.0407220; price granularity keeps 4 decimals
    assert compute_bid(BidStrategy(fraction=0.33), usd(0.1234)) == usd(0.0407)


# -- compute_demand ----------------------------------------------------------------


def _entries(*pairs):
    return [ResourceEntry(market_id=mid, max_instances=cap) for mid, cap in pairs]


def test_demand_zero_idle_jobs_is_all_zero():
    entries = _entries(("a", 10), ("b", 10))
    cores = {"a": 4, "b": 8}
    assert compute_demand(0, entries, cores) == {"a": 0, "b": 0}


def test_demand_even_core_split_two_entries():
    # 80 single-core jobs over a 4-core and an 8-core entry: 40 cores each
    entries = _entries(("a", 100), ("b", 100))
    cores = {"a": 4, "b": 8}
    assert compute_demand(80, entries, cores) == {"a": 10, "b": 5}


def test_demand_single_job_many_entries_gets_one_instance():
    entries = _entries(*[(f"m{i:03d}", 10) for i in range(120)])
    cores = {f"m{i:03d}": 4 for i in range(120)}
    demand = compute_demand(1, entries, cores)
    assert sum(demand.values()) == 1
    assert demand["m000"] == 1  # first entry in deterministic order


def test_demand_clamps_to_max_instances():
    entries = _entries(("a", 2), ("b", 100))
    cores = {"a": 4, "b": 4}
    demand = compute_demand(80, entries, cores)
    assert demand["a"] == 2
    # the uncovered share stays uncovered rather than silently vanishing
    assert demand["b"] >= 10


def test_demand_covers_target_cores():
    entries = _entries(("a", 50), ("b", 50), ("c", 50))
    cores = {"a": 4, "b": 8, "c": 4}
    demand = compute_demand(101, entries, cores)
    total = sum(demand[m] * cores[m] for m in demand)
    assert total >= 101
    assert total <= 101 + 8  # at most one extra instance of overshoot


def test_demand_rejects_negative_idle():
    with pytest.raises(ValueError):
        compute_demand(-1, _entries(("a", 1)), {"a": 4})


# -- provider limits ------------------------------------------------------------------


def test_truncate_requests_region_cap():
    limits = ProviderLimits(spot_requests_per_region=5, ebs_tb_per_region=300)
    demand = {"r1a:t": 4, "r1b:t": 4, "r2a:t": 4}
    region_of = {"r1a:t": "r1", "r1b:t": "r1", "r2a:t": "r2"}
    requests, truncated = truncate_requests(demand, region_of, limits, {}, 7.0)
    assert requests["r1a:t"] == 4
    assert requests["r1b:t"] == 1  # region r1 budget exhausted
    assert requests["r2a:t"] == 4
    assert truncated == 3


def test_truncate_requests_ebs_headroom():
    limits = ProviderLimits(spot_requests_per_region=1000, ebs_tb_per_region=0.1)
    # 100 GB allowance, 60 GB used: room for 5 more 7 GB root volumes
    requests, truncated = truncate_requests(
        {"r1a:t": 10}, {"r1a:t": "r1"}, limits, {"r1": 60.0}, 7.0)
    assert requests["r1a:t"] == 5
    assert truncated == 5


def test_pilot_policy_validation():
    assert PilotPolicy(max_lifetime=100, idle_timeout=200).violations()
    assert not PilotPolicy(max_lifetime=1000, idle_timeout=200).violations()


# -- cache tier --------------------------------------------------------------------


def test_cache_tier_cost_full_deployment():
    # 8 zones x 8 servers at $0.21/h for 100 hours
    assert cache_tier_cost(8, 8, usd(0.21), 100 * 3600) == usd(1344.0)


def test_cache_tier_cost_zero_zones():
    assert cache_tier_cost(0, 8, usd(0.21), 100 * 3600) == 0


def test_cache_tier_cost_single_server_hour():
    assert cache_tier_cost(1, 1, usd(0.21), 3600) == usd(0.21)


def test_cache_tier_rejects_negative_counts():
    with pytest.raises(ValueError):
        cache_tier_cost(-1, 1, usd(0.21), 3600)


# -- instance state machine ------------------------------------------------------------


def test_instance_lifecycle_legal_path():
    inst = Instance(1, "m", "r", 4, usd(0.1), 0)
    inst.transition(InstanceState.BOOTING)
    inst.transition(InstanceState.PILOT_RUNNING)
    inst.transition(InstanceState.PILOT_IDLE)
    inst.transition(InstanceState.PILOT_RUNNING)
    inst.transition(InstanceState.DRAINING)
    inst.terminate("preempted", 500)
    assert inst.termination_reason == "preempted"
    assert not inst.live


def test_instance_illegal_transition_raises():
    inst = Instance(1, "m", "r", 4, usd(0.1), 0)
    with pytest.raises(IllegalTransition):
        inst.transition(InstanceState.PILOT_IDLE)  # requested -> idle skips boot
    inst.transition(InstanceState.BOOTING)
    inst.terminate("admin", 5)
    with pytest.raises(IllegalTransition):
        inst.transition(InstanceState.PILOT_RUNNING)


def test_instance_unknown_termination_reason_rejected():
    inst = Instance(1, "m", "r", 4, usd(0.1), 0)
    with pytest.raises(ValueError):
        inst.terminate("because", 5)


# -- pilot lifecycle inside the engine ---------------------------------------------------


def test_no_job_starts_before_boot_delay(tiny_run):
    _, trace, _ = tiny_run
    boot_time = {}
    fulfill_time = {}
    for record in trace:
        if record["ev"] == "fulfill":
            fulfill_time[record["inst"]] = record["t"]
        elif record["ev"] == "boot":
            boot_time[record["inst"]] = record["t"]
            assert record["t"] == fulfill_time[record["inst"]] + 120
        elif record["ev"] == "start":
            assert record["t"] >= boot_time[record["inst"]]


def test_idle_pilot_terminates_after_idle_timeout():
    cfg = tiny_scenario_dict()
    cfg["duration_seconds"] = 8 * 3600
    # a workload that drains quickly, then pilots sit idle
    cfg["workload"]["samples"] = [
        {"name": "quick", "time_per_event_seconds": 5.0, "events_per_job": 360,
         "failure_prob": 0.0, "output_kb_per_event": 10.0,
         "runtime_dispersion": 0.0, "jobs": 60}]
    for market in cfg["markets"]:
        market["price_model"]["spike_rate"] = 0.0
        market["price_model"]["volatility"] = 0.0
    report = build_report(run_scenario(scenario_from_dict(cfg)).trace)
    reasons = report.instances["terminations_by_reason"]
    assert reasons["idle_timeout"] > 0
    assert reasons["preempted"] == 0


def test_idle_timeout_fires_exactly_after_configured_idle_time():
    cfg = tiny_scenario_dict()
    cfg["duration_seconds"] = 6 * 3600
    cfg["provisioner"] = {"pilot": {"max_lifetime_seconds": 5 * 3600,
                                    "idle_timeout_seconds": 900}}
    cfg["workload"]["samples"] = [
        {"name": "quick", "time_per_event_seconds": 5.0, "events_per_job": 360,
         "failure_prob": 0.0, "output_kb_per_event": 10.0,
         "runtime_dispersion": 0.0, "jobs": 30}]
    for market in cfg["markets"]:
        market["price_model"]["spike_rate"] = 0.0
        market["price_model"]["volatility"] = 0.0
    trace = run_scenario(scenario_from_dict(cfg)).trace

    # reconstruct when each pilot last went fully idle
    busy: dict[int, int] = {}
    went_idle: dict[int, int] = {}
    job_inst: dict[int, int] = {}
    checked = 0
    for record in trace:
        ev = record["ev"]
        if ev == "boot":
            busy[record["inst"]] = 0
            went_idle[record["inst"]] = record["t"]
        elif ev == "start":
            inst = record["inst"]
            job_inst[record["job"]] = inst
            busy[inst] += 1
            went_idle.pop(inst, None)
        elif ev == "attempt_end":
            inst = job_inst.pop(record["job"])
            busy[inst] -= 1
            if busy[inst] == 0:
                went_idle[inst] = record["t"]
        elif ev == "terminate" and record["reason"] == "idle_timeout":
            assert record["t"] == went_idle[record["inst"]] + 900
            checked += 1
    assert checked > 0


def test_max_lifetime_interrupt_requeues_job_as_restart_not_preemption():
    cfg = tiny_scenario_dict()
    cfg["duration_seconds"] = 10 * 3600
    cfg["markets"] = [cfg["markets"][0]]
    cfg["markets"][0]["base_capacity"] = 1
    cfg["markets"][0]["price_model"]["spike_rate"] = 0.0
    cfg["markets"][0]["price_model"]["volatility"] = 0.0
    cfg["provisioner"] = {"max_instances_per_entry": 1,
                          "pilot": {"max_lifetime_seconds": 2 * 3600,
                                    "idle_timeout_seconds": 1200}}
    # one job longer than the pilot's maximum lifetime
    cfg["workload"]["samples"] = [
        {"name": "marathon", "time_per_event_seconds": 100.0, "events_per_job": 180,
         "failure_prob": 0.0, "output_kb_per_event": 10.0,
         "runtime_dispersion": 0.0, "jobs": 1}]
    trace = run_scenario(scenario_from_dict(cfg)).trace
    report = build_report(trace)

    requeues = [r for r in trace if r["ev"] == "job_requeue"]
    assert any(r["reason"] == "max_lifetime" for r in requeues)
    assert report.instances["terminations_by_reason"]["max_lifetime"] >= 1
    # restarts are not preemptions: the histogram keeps the job in bin 0
    assert report.preemption_histogram["0"]["count"] == report.jobs["completed"] + \
        report.jobs["failed_final"]
    starts = [r for r in trace if r["ev"] == "start"]
    assert len(starts) >= 2  # the job restarted on a fresh instance


def test_max_instances_per_entry_caps_concurrent_instances(tiny_run):
    scenario, trace, _ = tiny_run
    cap = scenario.max_instances_per_entry
    live: dict[str, int] = {}
    for record in trace:
        if record["ev"] == "fulfill":
            live[record["market"]] = live.get(record["market"], 0) + 1
            assert live[record["market"]] <= cap
        elif record["ev"] == "terminate":
            live[record["market"]] -= 1

"""Shared fixtures: scenario builders and cached reference runs."""

from __future__ import annotations

import copy

import pytest

from spotsim.engine import run_scenario
from spotsim.metrics import build_report
from spotsim.scenario import default_scenario_dict, load_scenario, scenario_from_dict

TINY_BASE = {
    "schema_version": 1,
    "duration_seconds": 24 * 3600,
    "seed": 11,
    "markets": [
        {"region": "r1", "zone": "a", "instance_type": "quad", "cores": 4,
         "memory_gib": 8, "on_demand_price": 0.266, "base_capacity": 4,
         "price_model": {"floor_fraction": 0.04, "mean_fraction": 0.16,
                         "volatility": 0.08, "mean_reversion_rate": 0.7,
                         "spike_rate": 0.05, "spike_magnitude_fraction": 1.5},
         "capacity_profile": {"weekday_trough_fraction": 0.85,
                              "business_hours": [9, 17], "weekend_fraction": 1.0}},
        {"region": "r1", "zone": "b", "instance_type": "octo", "cores": 8,
         "memory_gib": 16, "on_demand_price": 0.532, "base_capacity": 4,
         "price_model": {"floor_fraction": 0.04, "mean_fraction": 0.16,
                         "volatility": 0.08, "mean_reversion_rate": 0.7,
                         "spike_rate": 0.02, "spike_magnitude_fraction": 1.5}},
        {"region": "r2", "zone": "a", "instance_type": "quad", "cores": 4,
         "memory_gib": 8, "on_demand_price": 0.266, "base_capacity": 4,
         "price_model": {"floor_fraction": 0.04, "mean_fraction": 0.16,
                         "volatility": 0.08, "mean_reversion_rate": 0.7,
                         "spike_rate": 0.04, "spike_magnitude_fraction": 1.5}},
    ],
    "cache_tier": {"zones": 1, "servers_per_zone": 1, "price_usd_per_hour": 0.21},
    "workload": {
        "io_mode": "stage_in",
        "samples": [
            {"name": "short", "time_per_event_seconds": 10.0, "events_per_job": 360,
             "failure_prob": 0.01, "output_kb_per_event": 58.0,
             "runtime_dispersion": 0.25, "jobs": 900},
            {"name": "long", "time_per_event_seconds": 30.0, "events_per_job": 360,
             "failure_prob": 0.005, "output_kb_per_event": 58.0,
             "runtime_dispersion": 0.25, "jobs": 300},
        ],
    },
    "storage": {"dataset_gb": 100.0, "placement": "replicate", "data_region": "r1"},
}


def tiny_scenario_dict() -> dict:
    """A fast three-market scenario; callers mutate the copy as needed."""
    return copy.deepcopy(TINY_BASE)


def make_scenario(cfg: dict):
    return scenario_from_dict(cfg)


@pytest.fixture(scope="session")
def tiny_run():
    """One cached run of the tiny scenario: (scenario, trace, report)."""
    scenario = scenario_from_dict(tiny_scenario_dict())
    trace = run_scenario(scenario).trace
    return scenario, trace, build_report(trace)


@pytest.fixture(scope="session")
def default_run():
    """One cached run of the shipped default calibration scenario."""
    scenario = load_scenario()
    trace = run_scenario(scenario).trace
    return scenario, trace, build_report(trace)


@pytest.fixture(scope="session")
def week_run():
    """Seven-day variant of the default scenario for diurnal analysis."""
    cfg = default_scenario_dict()
    cfg["duration_seconds"] = 7 * 86400
    for sample in cfg["workload"]["samples"]:
        sample["jobs"] = round(sample["jobs"] * 7 / 3)
    scenario = scenario_from_dict(cfg)
    trace = run_scenario(scenario).trace
    return scenario, trace, build_report(trace)

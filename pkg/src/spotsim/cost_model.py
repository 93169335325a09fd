"""On-premises vs cloud cost comparison and the burst placement rule.

These are comparison analytics in plain dollars per core-hour; uncertainty
fractions are carried through as reported spreads, not distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

SECONDS_PER_HOUR = 3600


@dataclass
class OnPremParams:
    cost_per_core_hour: float = 0.009
    uncertainty_fraction: float = 0.25
    utilization: float = 1.0

    def violations(self, prefix: str = "cost_model") -> list[str]:
        out = []
        if self.cost_per_core_hour <= 0:
            out.append(f"{prefix}.onprem_cost_per_core_hour: must be > 0")
        if not 0.0 < self.utilization <= 1.0:
            out.append(f"{prefix}.onprem_utilization: must be in (0, 1]")
        if self.uncertainty_fraction < 0:
            out.append(f"{prefix}.onprem_uncertainty_fraction: must be >= 0")
        return out


@dataclass
class BenchmarkScore:
    """Events per second per core on the reference simulation benchmark."""

    events_per_second_per_core: float

    def __post_init__(self):
        if self.events_per_second_per_core <= 0:
            raise ValueError("benchmark score must be > 0")


@dataclass
class CloudQuote:
    realized_cost_per_core_hour: float
    uncertainty_fraction: float = 0.0

    def __post_init__(self):
        if self.realized_cost_per_core_hour <= 0:
            raise ValueError("realized cost must be > 0")


def effective_onprem_cost(params: OnPremParams) -> float:
    """Cost per productive core-hour; lower utilization raises it."""
    return params.cost_per_core_hour / params.utilization


def benchmark_normalized_cost(cost_per_core_hour: float, score: BenchmarkScore) -> float:
    """Dollars per benchmark event, making heterogeneous cores comparable."""
    return cost_per_core_hour / (SECONDS_PER_HOUR * score.events_per_second_per_core)


def cost_per_100_events(time_per_event: float, cost_per_core_hour: float) -> float:
    """Dollars to process 100 events at a given core-hour rate."""
    if time_per_event < 0:
        raise ValueError("time per event must be >= 0")
    return time_per_event / SECONDS_PER_HOUR * cost_per_core_hour * 100.0


@dataclass
class PlacementDecision:
    onprem_cores: int
    cloud_cores: int
    rationale: dict


def placement_decision(demand_cores: int, onprem_free_cores: int,
                       quote: CloudQuote, onprem: OnPremParams,
                       premium_multiplier: float = 2.0,
                       data_intensity_gb_per_core_hour: float = 0.0,
                       egress_usd_per_gb: float = 0.09,
                       egress_waiver_fraction: float = 0.15,
                       cloud_score: BenchmarkScore | None = None,
                       onprem_score: BenchmarkScore | None = None) -> PlacementDecision:
    """Fill free on-prem cores first, then burst to cloud when affordable.

    The burst is approved when the benchmark-normalized cloud cost, with the
    projected per-core-hour egress charge (dropped when the waiver would
    apply), is at most premium_multiplier times the normalized on-prem cost.
    """
    if demand_cores < 0 or onprem_free_cores < 0:
        raise ValueError("core counts must be >= 0")
    if premium_multiplier <= 0:
        raise ValueError("premium multiplier must be > 0")

    onprem_cores = min(demand_cores, onprem_free_cores)
    remainder = demand_cores - onprem_cores

    cloud_cost = quote.realized_cost_per_core_hour
    egress_per_core_hour = data_intensity_gb_per_core_hour * egress_usd_per_gb
    egress_waived = egress_per_core_hour < egress_waiver_fraction * (
        cloud_cost + egress_per_core_hour)
    effective_cloud = cloud_cost if egress_waived else cloud_cost + egress_per_core_hour

    onprem_cost = effective_onprem_cost(onprem)
    if cloud_score is not None:
        cloud_norm = benchmark_normalized_cost(effective_cloud, cloud_score)
    else:
        cloud_norm = effective_cloud
    if onprem_score is not None:
        onprem_norm = benchmark_normalized_cost(onprem_cost, onprem_score)
    else:
        onprem_norm = onprem_cost

    approved = remainder > 0 and cloud_norm <= premium_multiplier * onprem_norm
    cloud_cores = remainder if approved else 0

    if remainder == 0:
        reason = "demand fits free on-premises cores"
    elif approved:
        reason = "normalized cloud cost within premium multiplier"
    else:
        reason = "normalized cloud cost exceeds premium multiplier"
    rationale = {
        "demand_cores": demand_cores,
        "onprem_free_cores": onprem_free_cores,
        "onprem_cores": onprem_cores,
        "cloud_cores": cloud_cores,
        "cloud_cost_per_core_hour": cloud_cost,
        "egress_per_core_hour": egress_per_core_hour,
        "egress_waived_in_projection": egress_waived,
        "effective_cloud_cost_per_core_hour": effective_cloud,
        "onprem_cost_per_core_hour": onprem_cost,
        "normalized_cloud_cost": cloud_norm,
        "normalized_onprem_cost": onprem_norm,
        "premium_multiplier": premium_multiplier,
        "burst_approved": approved,
        "reason": reason,
    }
    return PlacementDecision(onprem_cores, cloud_cores, rationale)

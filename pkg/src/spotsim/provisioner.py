"""Frontend/factory logic: bids, demand distribution, limits, pilot lifecycle.

Demand is split evenly on a per-core basis across resource entries, requests
are truncated to provider limits, and each fulfilled instance hosts one pilot
with one job slot per core.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

CORES_PER_JOB = 1

REASON_PREEMPTED = "preempted"
REASON_IDLE_TIMEOUT = "idle_timeout"
REASON_MAX_LIFETIME = "max_lifetime"
REASON_ADMIN = "admin"
TERMINATION_REASONS = (REASON_PREEMPTED, REASON_IDLE_TIMEOUT,
                       REASON_MAX_LIFETIME, REASON_ADMIN)


@dataclass
class BidStrategy:
    kind: str = "static_fraction"
    fraction: float = 0.25

    def violations(self, prefix: str = "bid") -> list[str]:
        out = []
        if self.kind != "static_fraction":
            out.append(f"{prefix}.kind: unknown strategy {self.kind!r}")
        if not 0.0 < self.fraction < 1.0:
            out.append(f"{prefix}.fraction: must be in (0, 1)")
        return out


@dataclass
class ResourceEntry:
    market_id: str
    max_instances: int
    ami_overhead_gb: float = 7.0

    def violations(self, prefix: str = "entry") -> list[str]:
        out = []
        if self.max_instances < 0:
            out.append(f"{prefix}.max_instances: must be >= 0")
        if self.ami_overhead_gb < 0:
            out.append(f"{prefix}.ami_overhead_gb: must be >= 0")
        return out


@dataclass
class PilotPolicy:
    max_lifetime: int = 48 * 3600
    idle_timeout: int = 1200

    def violations(self, prefix: str = "pilot") -> list[str]:
        if not self.max_lifetime > self.idle_timeout > 0:
            return [f"{prefix}: need max_lifetime > idle_timeout > 0"]
        return []


@dataclass
class ProviderLimits:
    spot_requests_per_region: int = 5500
    non_spot_instances: int = 20
    ebs_tb_per_region: float = 300.0

    def violations(self, prefix: str = "limits") -> list[str]:
        out = []
        if self.spot_requests_per_region < 0:
            out.append(f"{prefix}.spot_requests_per_region: must be >= 0")
        if self.non_spot_instances < 0:
            out.append(f"{prefix}.non_spot_instances: must be >= 0")
        if self.ebs_tb_per_region < 0:
            out.append(f"{prefix}.ebs_tb_per_region: must be >= 0")
        return out


def compute_bid(strategy: BidStrategy, on_demand_musd: int) -> int:
    """Bid as a fixed fraction of on-demand, at 4-decimal price granularity."""
    if strategy.kind != "static_fraction":
        raise ValueError(f"unknown bid strategy: {strategy.kind}")
    return round(strategy.fraction * on_demand_musd / 100) * 100


def compute_demand(idle_jobs: int, entries: Iterable[ResourceEntry],
                   cores_per_instance: Mapping[str, int]) -> dict[str, int]:
    """Distribute demand for idle_jobs single-core jobs across entries.

    Target cores are split evenly per entry; whole instances are then
    allocated largest-uncovered-share first (ties to the first entry in
    market_id order) until the target is covered or every entry is clamped
    at its max_instances.
    """
    if idle_jobs < 0:
        raise ValueError("idle_jobs must be >= 0")
    order = sorted(entries, key=lambda e: e.market_id)
    demand = {entry.market_id: 0 for entry in order}
    if idle_jobs == 0 or not order:
        return demand

    target_cores = idle_jobs * CORES_PER_JOB
    share = target_cores / len(order)
    covered = 0
    # [uncovered core share, entry, cores per instance]
    deficits = []
    for entry in order:
        cpi = cores_per_instance[entry.market_id]
        count = min(int(share // cpi), max(0, entry.max_instances))
        demand[entry.market_id] = count
        covered += count * cpi
        deficits.append([share - count * cpi, entry, cpi])

    while covered < target_cores:
        best = None
        for item in deficits:
            if demand[item[1].market_id] >= item[1].max_instances:
                continue
            if best is None or item[0] > best[0]:
                best = item
        if best is None:
            break
        demand[best[1].market_id] += 1
        covered += best[2]
        best[0] -= best[2]
    return demand


def truncate_requests(demand: Mapping[str, int], region_of: Mapping[str, str],
                      limits: ProviderLimits,
                      ebs_used_gb: Mapping[str, float],
                      ami_overhead_gb: float) -> tuple[dict[str, int], int]:
    """Apply per-region provider limits to a demand map.

    Caps the number of spot requests submitted per region and keeps
    projected EBS usage (root volumes) under the per-region allowance.
    Returns the truncated request map and the number of requests dropped.
    """
    requests: dict[str, int] = {}
    truncated = 0
    budget: dict[str, int] = {}
    for market_id in sorted(demand):
        count = demand[market_id]
        if count <= 0:
            requests[market_id] = 0
            continue
        region = region_of[market_id]
        if region not in budget:
            room = limits.spot_requests_per_region
            if ami_overhead_gb > 0:
                ebs_room_gb = limits.ebs_tb_per_region * 1000.0 - ebs_used_gb.get(region, 0.0)
                room = min(room, max(0, int(ebs_room_gb // ami_overhead_gb)))
            budget[region] = room
        granted = min(count, budget[region])
        budget[region] -= granted
        truncated += count - granted
        requests[market_id] = granted
    return requests, truncated


def cache_tier_cost(zones: int, servers_per_zone: int,
                    price_musd_per_hour: int, duration_seconds: int) -> int:
    """Flat on-demand cost of the cache tier over the scenario, in micro-USD."""
    if zones < 0 or servers_per_zone < 0:
        raise ValueError("cache tier counts must be >= 0")
    total = zones * servers_per_zone * price_musd_per_hour * duration_seconds
    quotient, remainder = divmod(total, 3600)
    return quotient + (1 if remainder * 2 >= 3600 else 0)


class InstanceState(str, Enum):
    REQUESTED = "requested"
    BOOTING = "booting"
    PILOT_RUNNING = "pilot_running"
    PILOT_IDLE = "pilot_idle"
    DRAINING = "draining"
    TERMINATED = "terminated"


_LEGAL_TRANSITIONS = {
    InstanceState.REQUESTED: {InstanceState.BOOTING, InstanceState.TERMINATED},
    InstanceState.BOOTING: {InstanceState.PILOT_RUNNING, InstanceState.DRAINING,
                            InstanceState.TERMINATED},
    InstanceState.PILOT_RUNNING: {InstanceState.PILOT_IDLE, InstanceState.DRAINING,
                                  InstanceState.TERMINATED},
    InstanceState.PILOT_IDLE: {InstanceState.PILOT_RUNNING, InstanceState.DRAINING,
                               InstanceState.TERMINATED},
    InstanceState.DRAINING: {InstanceState.TERMINATED},
    InstanceState.TERMINATED: set(),
}


class IllegalTransition(RuntimeError):
    """Raised on a lifecycle transition the state graph forbids (simulator bug)."""


@dataclass
class Instance:
    """A provisioned machine hosting one pilot with one slot per core."""

    instance_id: int
    market_id: str
    region: str
    cores: int
    bid_musd: int
    launch_time: int
    state: InstanceState = InstanceState.REQUESTED
    busy: dict[int, int] = field(default_factory=dict)  # slot -> job id
    idle_since: int | None = None
    termination_time: int | None = None
    termination_reason: str | None = None
    hourly_prices_musd: list[int] = field(default_factory=list)

    def transition(self, new_state: InstanceState) -> None:
        if new_state not in _LEGAL_TRANSITIONS[self.state]:
            raise IllegalTransition(
                f"instance {self.instance_id}: {self.state.value} -> {new_state.value}")
        self.state = new_state

    def terminate(self, reason: str, now: int) -> None:
        if reason not in TERMINATION_REASONS:
            raise ValueError(f"unknown termination reason: {reason}")
        self.transition(InstanceState.TERMINATED)
        self.termination_reason = reason
        self.termination_time = now

    @property
    def live(self) -> bool:
        return self.state is not InstanceState.TERMINATED

    @property
    def accepts_jobs(self) -> bool:
        return self.state in (InstanceState.PILOT_RUNNING, InstanceState.PILOT_IDLE)

    def free_slots(self) -> int:
        if not self.accepts_jobs:
            return 0
        return self.cores - len(self.busy)

"""Spot markets: price evolution, diurnal capacity, fulfillment, preemption.

Each (region, zone, instance type) triple is one market with its own price
state. Prices follow a mean-reverting geometric walk in log space with
Poisson spikes, clamped between a floor and 10x the on-demand price.
Capacity follows a deterministic weekday/weekend multiplier schedule.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .rng import poisson

PREEMPTION_NOTICE_SECONDS = 120
PRICE_CEILING_FACTOR = 10
SECONDS_PER_DAY = 86400
SECONDS_PER_HOUR = 3600

PREEMPT_PRICE = "price"
PREEMPT_CAPACITY = "capacity"


@dataclass
class SpotPriceParams:
    """Parameters of the spot price process, as fractions of on-demand."""

    floor_fraction: float
    mean_fraction: float
    volatility: float  # log-price stddev per sqrt(hour)
    mean_reversion_rate: float  # per hour
    spike_rate: float  # spikes per hour
    spike_magnitude_fraction: float  # each spike multiplies price by (1 + m)

    def violations(self, prefix: str = "price_model") -> list[str]:
        out = []
        if not 0.0 < self.floor_fraction <= self.mean_fraction:
            out.append(f"{prefix}.floor_fraction: need 0 < floor <= mean")
        if not self.mean_fraction < 1.0:
            out.append(f"{prefix}.mean_fraction: must be < 1")
        for name in ("volatility", "mean_reversion_rate", "spike_rate",
                     "spike_magnitude_fraction"):
            if getattr(self, name) < 0:
                out.append(f"{prefix}.{name}: must be >= 0")
        return out


@dataclass
class CapacityProfile:
    """Deterministic diurnal/weekly capacity multipliers."""

    weekday_trough_fraction: float = 1.0
    business_hours: tuple[int, int] = (9, 17)  # half-open local-hour range
    weekend_fraction: float = 1.0

    def violations(self, prefix: str = "capacity_profile") -> list[str]:
        out = []
        if not 0.0 < self.weekday_trough_fraction <= 1.0:
            out.append(f"{prefix}.weekday_trough_fraction: must be in (0, 1]")
        if not 0.0 < self.weekend_fraction <= 1.0:
            out.append(f"{prefix}.weekend_fraction: must be in (0, 1]")
        lo, hi = self.business_hours
        if not (0 <= lo < hi <= 24):
            out.append(f"{prefix}.business_hours: need 0 <= start < end <= 24")
        return out


def local_weekday_hour(t: int, epoch_weekday: int) -> tuple[int, int]:
    """Day-of-week (0=Monday) and local hour for a scenario timestamp."""
    day = (epoch_weekday + t // SECONDS_PER_DAY) % 7
    hour = (t % SECONDS_PER_DAY) // SECONDS_PER_HOUR
    return day, hour


@dataclass
class MarketSpec:
    """Static description of one market, as loaded from the catalog."""

    region: str
    zone: str
    instance_type: str
    cores: int
    memory_gib: float
    on_demand_musd: int  # per hour
    base_capacity: int
    price_params: SpotPriceParams
    capacity_profile: CapacityProfile

    @property
    def market_id(self) -> str:
        return f"{self.region}{self.zone}:{self.instance_type}"

    def violations(self) -> list[str]:
        prefix = f"markets[{self.market_id}]"
        out = []
        if self.on_demand_musd <= 0:
            out.append(f"{prefix}.on_demand_price: must be > 0")
        if self.cores <= 0:
            out.append(f"{prefix}.cores: must be > 0")
        if self.base_capacity < 0:
            out.append(f"{prefix}.base_capacity: must be >= 0")
        out.extend(self.price_params.violations(f"{prefix}.price_model"))
        out.extend(self.capacity_profile.violations(f"{prefix}.capacity_profile"))
        return out


class Market:
    """Mutable market state owned by the event loop."""

    def __init__(self, spec: MarketSpec):
        self.spec = spec
        self.market_id = spec.market_id
        self.floor_musd = max(1, round(spec.price_params.floor_fraction * spec.on_demand_musd))
        self.ceiling_musd = PRICE_CEILING_FACTOR * spec.on_demand_musd
        self.mean_musd = max(self.floor_musd, round(spec.price_params.mean_fraction * spec.on_demand_musd))
        self.spot_musd = self.mean_musd
        # instance id -> bid; insertion order is launch order (oldest first)
        self.provisioned: dict[int, int] = {}

    def advance_price(self, dt: int, rng: random.Random) -> int:
        """One price step over dt seconds; returns the new price in micro-USD."""
        if dt <= 0:
            raise ValueError("advance_price needs dt > 0")
        params = self.spec.price_params
        dt_hours = dt / SECONDS_PER_HOUR
        log_price = math.log(self.spot_musd)
        drift = params.mean_reversion_rate * (math.log(self.mean_musd) - log_price) * dt_hours
        shock = 0.0
        if params.volatility > 0.0:
            shock = params.volatility * math.sqrt(dt_hours) * rng.gauss(0.0, 1.0)
        price = math.exp(log_price + drift + shock)
        if params.spike_rate > 0.0:
            for _ in range(poisson(rng, params.spike_rate * dt_hours)):
                price *= 1.0 + params.spike_magnitude_fraction
        self.spot_musd = min(max(round(price), self.floor_musd), self.ceiling_musd)
        return self.spot_musd

    def capacity(self, t: int, epoch_weekday: int) -> int:
        """Instance capacity at time t under the multiplier schedule."""
        profile = self.spec.capacity_profile
        day, hour = local_weekday_hour(t, epoch_weekday)
        if day >= 5:
            multiplier = profile.weekend_fraction
        elif profile.business_hours[0] <= hour < profile.business_hours[1]:
            multiplier = profile.weekday_trough_fraction
        else:
            multiplier = 1.0
        return round(self.spec.base_capacity * multiplier)

    def available(self, t: int, epoch_weekday: int) -> int:
        return max(0, self.capacity(t, epoch_weekday) - len(self.provisioned))

    def fulfillable(self, bid_musd: int, n: int, t: int, epoch_weekday: int) -> int:
        """How many of n requested instances fulfill right now.

        Fulfillment requires the bid to be strictly above the spot price;
        fulfilled instances are charged at the spot price, never the bid.
        """
        if n < 0:
            raise ValueError("request count must be >= 0")
        if bid_musd <= self.spot_musd:
            return 0
        return min(n, self.available(t, epoch_weekday))

    def add_instance(self, instance_id: int, bid_musd: int) -> None:
        self.provisioned[instance_id] = bid_musd

    def remove_instance(self, instance_id: int) -> None:
        self.provisioned.pop(instance_id, None)

    def check_preemptions(self, t: int, epoch_weekday: int) -> list[tuple[int, str]]:
        """Select instances to preempt after a price/capacity change.

        Every instance whose bid is below the spot price goes, plus enough
        lowest-bid instances (ties to the oldest id) to fit a capacity
        reduction. Selected instances leave the provisioned set immediately;
        they terminate at the caller-scheduled notice deadline.
        """
        victims = [(iid, PREEMPT_PRICE) for iid, bid in self.provisioned.items()
                   if bid < self.spot_musd]
        cap = self.capacity(t, epoch_weekday)
        excess = (len(self.provisioned) - len(victims)) - cap
        if excess > 0:
            survivors = sorted((bid, iid) for iid, bid in self.provisioned.items()
                               if bid >= self.spot_musd)
            victims.extend((iid, PREEMPT_CAPACITY) for _, iid in survivors[:excess])
        for iid, _ in victims:
            del self.provisioned[iid]
        return victims

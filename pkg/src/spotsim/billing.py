"""Bit-exact money engine: instance hours, tiered egress with waiver, fees.

Instance hours are launch-relative: every fully elapsed hour is charged at
that hour's start price; a final partial hour is charged as a full hour when
the user terminated the instance and not charged at all on preemption.
All amounts are integer micro-USD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .money import render_usd, usd
from .provisioner import (REASON_ADMIN, REASON_IDLE_TIMEOUT, REASON_MAX_LIFETIME,
                          REASON_PREEMPTED, TERMINATION_REASONS)

SECONDS_PER_HOUR = 3600
SECONDS_PER_MONTH = 30 * 86400  # 30-day billing month convention

USER_TERMINATION_REASONS = frozenset(
    {REASON_IDLE_TIMEOUT, REASON_MAX_LIFETIME, REASON_ADMIN})

PPM = 1_000_000


def _round_div(numerator: int, denominator: int) -> int:
    quotient, remainder = divmod(numerator, denominator)
    return quotient + (1 if remainder * 2 >= denominator else 0)


@dataclass(frozen=True)
class PricingTable:
    """Provider price points, stored as integer micro-USD and ppm fractions."""

    egress_tier1_musd_per_gb: int = usd(0.09)
    egress_tier2_musd_per_gb: int = usd(0.07)
    egress_tier_boundary_gb: float = 102400.0
    egress_waiver_ppm: int = 150_000
    storage_musd_per_gb_month: int = usd(0.03)
    inter_region_musd_per_gb: int = usd(0.02)
    request_musd_per_1000_gets: int = usd(0.004)
    support_ppm: int = 60_000

    @classmethod
    def from_config(cls, cfg: Mapping[str, float]) -> "PricingTable":
        return cls(
            egress_tier1_musd_per_gb=usd(cfg.get("egress_tier1_usd_per_gb", 0.09)),
            egress_tier2_musd_per_gb=usd(cfg.get("egress_tier2_usd_per_gb", 0.07)),
            egress_tier_boundary_gb=float(cfg.get("egress_tier_boundary_gb", 102400)),
            egress_waiver_ppm=round(cfg.get("egress_waiver_fraction", 0.15) * PPM),
            storage_musd_per_gb_month=usd(cfg.get("storage_usd_per_gb_month", 0.03)),
            inter_region_musd_per_gb=usd(cfg.get("inter_region_usd_per_gb", 0.02)),
            request_musd_per_1000_gets=usd(cfg.get("request_usd_per_1000_gets", 0.004)),
            support_ppm=round(cfg.get("support_fraction", 0.06) * PPM),
        )

    def violations(self, prefix: str = "pricing") -> list[str]:
        out = []
        for name in ("egress_tier1_musd_per_gb", "egress_tier2_musd_per_gb",
                     "egress_tier_boundary_gb", "storage_musd_per_gb_month",
                     "inter_region_musd_per_gb", "request_musd_per_1000_gets",
                     "support_ppm"):
            if getattr(self, name) < 0:
                out.append(f"{prefix}.{name}: must be >= 0")
        if not 0 <= self.egress_waiver_ppm <= PPM:
            out.append(f"{prefix}.egress_waiver_fraction: must be in [0, 1]")
        return out


@dataclass(frozen=True)
class UsageRecord:
    """Billable lifetime of one instance with hour-start prices."""

    instance_id: int
    market_id: str
    launch_time: int
    termination_time: int
    termination_reason: str
    hourly_prices_musd: Sequence[int]

    def validate(self) -> None:
        duration = self.termination_time - self.launch_time
        if duration < 0:
            raise ValueError(f"instance {self.instance_id}: negative duration")
        if self.termination_reason not in TERMINATION_REASONS:
            raise ValueError(f"instance {self.instance_id}: unknown reason "
                             f"{self.termination_reason!r}")
        expected = math.ceil(duration / SECONDS_PER_HOUR)
        if len(self.hourly_prices_musd) != expected:
            raise ValueError(f"instance {self.instance_id}: price log has "
                             f"{len(self.hourly_prices_musd)} entries, needs {expected}")
        if any(price < 0 for price in self.hourly_prices_musd):
            raise ValueError(f"instance {self.instance_id}: negative hourly price")


def charge_instance(record: UsageRecord) -> int:
    """Charge for one instance lifetime, in micro-USD."""
    record.validate()
    duration = record.termination_time - record.launch_time
    full_hours, partial_seconds = divmod(duration, SECONDS_PER_HOUR)
    charge = sum(record.hourly_prices_musd[:full_hours])
    if partial_seconds and record.termination_reason in USER_TERMINATION_REASONS:
        charge += record.hourly_prices_musd[full_hours]
    return charge


def accrued_charge(launch_time: int, now: int, hourly_prices_musd: Sequence[int]) -> int:
    """Running-cost estimate for a live instance: every started hour billed.

    Used for burn-rate extrapolation only; the final invoice charge comes
    from charge_instance at termination.
    """
    if now < launch_time:
        raise ValueError("accrual time precedes launch")
    hours_started = (now - launch_time) // SECONDS_PER_HOUR + 1
    return sum(hourly_prices_musd[:hours_started])


def egress_gross(egress_gb: float, table: PricingTable) -> int:
    """Tiered egress charge before any waiver."""
    if egress_gb < 0:
        raise ValueError("egress volume must be >= 0")
    tier1_gb = min(egress_gb, table.egress_tier_boundary_gb)
    tier2_gb = max(0.0, egress_gb - table.egress_tier_boundary_gb)
    return round(table.egress_tier1_musd_per_gb * tier1_gb) + \
        round(table.egress_tier2_musd_per_gb * tier2_gb)


def charge_egress(egress_gb: float, other_charges_musd: int,
                  table: PricingTable) -> tuple[int, int]:
    """Egress charge after the waiver rule; returns (charged, waived).

    The waiver applies when the gross egress charge is strictly under the
    waiver fraction of the total bill including the egress line itself; at
    exactly the threshold the charge applies.
    """
    if other_charges_musd < 0:
        raise ValueError("other charges must be >= 0")
    gross = egress_gross(egress_gb, table)
    if gross * PPM < table.egress_waiver_ppm * (other_charges_musd + gross):
        return 0, gross
    return gross, 0


def charge_requests(get_count: int, musd_per_1000_gets: int) -> int:
    """Linear per-request fee for GET operations."""
    if get_count < 0:
        raise ValueError("request count must be >= 0")
    return _round_div(get_count * musd_per_1000_gets, 1000)


@dataclass(frozen=True)
class PlacementComparison:
    replicate_musd: int
    single_region_musd: int
    cheaper: str  # "replicate" or "single_region"


def compare_placement(dataset_gb: float, n_regions: int,
                      monthly_remote_reads_gb: float,
                      table: PricingTable) -> PlacementComparison:
    """Monthly cost of replicating a dataset everywhere vs one copy + transfers.

    Ties go to replication (no transfer exposure at equal cost).
    """
    if dataset_gb < 0 or monthly_remote_reads_gb < 0 or n_regions < 1:
        raise ValueError("placement inputs out of range")
    replicate = round(n_regions * dataset_gb * table.storage_musd_per_gb_month)
    single = round(dataset_gb * table.storage_musd_per_gb_month) + \
        round(monthly_remote_reads_gb * table.inter_region_musd_per_gb)
    cheaper = "replicate" if replicate <= single else "single_region"
    return PlacementComparison(replicate, single, cheaper)


def burn_rate_alarm(window_spend_musd: int, threshold_musd_per_day: int,
                    window_seconds: int = SECONDS_PER_HOUR) -> bool:
    """True when spend extrapolated to a day exceeds the alarm threshold."""
    if window_seconds <= 0:
        raise ValueError("window must be positive")
    return window_spend_musd * 86400 > threshold_musd_per_day * window_seconds


@dataclass
class Invoice:
    """One billing period; every line in micro-USD."""

    period_seconds: int
    compute_spot: int = 0
    cache_tier_on_demand: int = 0
    storage: int = 0
    requests: int = 0
    inter_region: int = 0
    support: int = 0
    egress_charged: int = 0
    egress_waived: int = 0

    @property
    def total_musd(self) -> int:
        return (self.compute_spot + self.cache_tier_on_demand + self.storage +
                self.requests + self.inter_region + self.support + self.egress_charged)

    def to_json_dict(self) -> dict:
        return {
            "period_seconds": self.period_seconds,
            "lines": {
                "compute_spot": render_usd(self.compute_spot),
                "cache_tier_on_demand": render_usd(self.cache_tier_on_demand),
                "storage": render_usd(self.storage),
                "requests": render_usd(self.requests),
                "inter_region": render_usd(self.inter_region),
                "support": render_usd(self.support),
                "egress_charged": render_usd(self.egress_charged),
                "egress_waived": render_usd(self.egress_waived),
            },
            "total": render_usd(self.total_musd),
        }


def build_invoice(period_seconds: int, records: Iterable[UsageRecord],
                  egress_gb: float, get_count: int, remote_reads_gb: float,
                  cache_tier_musd: int, storage_gb_months: float,
                  table: PricingTable) -> Invoice:
    """Assemble the period invoice from usage and transfer totals.

    Support is a flat fraction of all other charges; the egress waiver is
    evaluated against the bill including support.
    """
    invoice = Invoice(period_seconds=period_seconds)
    invoice.compute_spot = sum(charge_instance(record) for record in records)
    invoice.cache_tier_on_demand = cache_tier_musd
    invoice.storage = round(storage_gb_months * table.storage_musd_per_gb_month)
    invoice.requests = charge_requests(get_count, table.request_musd_per_1000_gets)
    invoice.inter_region = round(remote_reads_gb * table.inter_region_musd_per_gb)
    base = (invoice.compute_spot + invoice.cache_tier_on_demand + invoice.storage +
            invoice.requests + invoice.inter_region)
    invoice.support = _round_div(base * table.support_ppm, PPM)
    invoice.egress_charged, invoice.egress_waived = charge_egress(
        egress_gb, base + invoice.support, table)
    return invoice

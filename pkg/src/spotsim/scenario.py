"""Scenario configuration: schema, defaults, validation, catalog loading.

A scenario file is YAML (JSON also parses) with a `schema_version` field.
Markets come either inline or from a catalog file; `catalog: builtin` loads
the packaged default catalog. Loading resolves everything into one plain
dict (embedded verbatim in the run trace) plus typed objects for the engine.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .billing import PricingTable
from .market import CapacityProfile, MarketSpec, SpotPriceParams
from .money import usd
from .provisioner import BidStrategy, PilotPolicy, ProviderLimits, ResourceEntry
from .scheduler import Sample

SCHEMA_VERSION = 1

_DATA_PACKAGE = "spotsim.data"
DEFAULT_SCENARIO_RESOURCE = "default_scenario.yaml"
DEFAULT_CATALOG_RESOURCE = "default_catalog.yaml"


class ScenarioError(ValueError):
    """Invalid scenario; carries one message per violated field."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def _read_builtin(name: str) -> dict:
    text = resources.files(_DATA_PACKAGE).joinpath(name).read_text(encoding="utf-8")
    return yaml.safe_load(text)


def _read_yaml(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        loaded = yaml.safe_load(handle)
    if not isinstance(loaded, dict):
        raise ScenarioError([f"{path}: top level must be a mapping"])
    return loaded


def default_scenario_dict() -> dict:
    return _read_builtin(DEFAULT_SCENARIO_RESOURCE)


def _load_catalog(spec: Any, base_dir: Path | None) -> list[dict]:
    """Expand the `markets` section into a list of per-market records."""
    if isinstance(spec, list):
        return spec
    if isinstance(spec, Mapping):
        catalog = spec.get("catalog", "builtin")
        if catalog == "builtin":
            records = _read_builtin(DEFAULT_CATALOG_RESOURCE)["markets"]
        else:
            path = Path(catalog)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            records = _read_yaml(path)["markets"]
        return copy.deepcopy(records)
    raise ScenarioError(["markets: must be a list or a {catalog: ...} mapping"])


def apply_overrides(cfg: dict, overrides: Mapping[str, Any]) -> dict:
    """Apply dotted-path overrides (e.g. bid.fraction=0.5) to a config dict."""
    out = copy.deepcopy(cfg)
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        node = out
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ScenarioError([f"override {dotted}: no such config section {part!r}"])
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ScenarioError([f"override {dotted}: no such config key {parts[-1]!r}"])
        node[parts[-1]] = value
    return out


def parse_override_value(text: str) -> Any:
    """Parse a --set value with YAML scalar rules (numbers, bools, strings)."""
    return yaml.safe_load(text)


@dataclass
class CacheTierConfig:
    zones: int = 0
    servers_per_zone: int = 0
    price_musd_per_hour: int = 0

    def violations(self, prefix: str = "cache_tier") -> list[str]:
        out = []
        if self.zones < 0:
            out.append(f"{prefix}.zones: must be >= 0")
        if self.servers_per_zone < 0:
            out.append(f"{prefix}.servers_per_zone: must be >= 0")
        if self.price_musd_per_hour < 0:
            out.append(f"{prefix}.price_usd_per_hour: must be >= 0")
        return out


@dataclass
class WorkloadConfig:
    io_mode: str = "stage_in"  # or "streaming"
    reads_per_job: int = 100000
    input_files_per_job: int = 1
    input_gb_per_job: float = 0.0
    samples: list[Sample] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    def violations(self, prefix: str = "workload") -> list[str]:
        out = []
        if self.io_mode not in ("stage_in", "streaming"):
            out.append(f"{prefix}.io_mode: must be stage_in or streaming")
        if self.reads_per_job < 0:
            out.append(f"{prefix}.reads_per_job: must be >= 0")
        if self.input_files_per_job < 0:
            out.append(f"{prefix}.input_files_per_job: must be >= 0")
        if self.input_gb_per_job < 0:
            out.append(f"{prefix}.input_gb_per_job: must be >= 0")
        if not self.samples:
            out.append(f"{prefix}.samples: at least one workload entry required")
        seen = set()
        for sample in self.samples:
            if sample.name in seen:
                out.append(f"{prefix}.samples[{sample.name}]: duplicate name")
            seen.add(sample.name)
            out.extend(sample.violations(f"{prefix}.samples[{sample.name}]"))
            if self.counts.get(sample.name, 0) < 0:
                out.append(f"{prefix}.samples[{sample.name}].jobs: must be >= 0")
        return out


@dataclass
class StorageConfig:
    dataset_gb: float = 0.0
    placement: str = "replicate"  # or "single_region"
    data_region: str = ""

    def violations(self, prefix: str = "storage") -> list[str]:
        out = []
        if self.dataset_gb < 0:
            out.append(f"{prefix}.dataset_gb: must be >= 0")
        if self.placement not in ("replicate", "single_region"):
            out.append(f"{prefix}.placement: must be replicate or single_region")
        return out


@dataclass
class CostModelConfig:
    onprem_cost_per_core_hour: float = 0.009
    onprem_uncertainty_fraction: float = 0.25
    onprem_utilization: float = 1.0
    onprem_benchmark_events_per_second: float = 0.0163
    cloud_benchmark_events_per_second: float = 0.0158
    cloud_uncertainty_fraction: float = 0.12
    premium_multiplier: float = 2.0
    onprem_free_cores: int = 0

    def violations(self, prefix: str = "cost_model") -> list[str]:
        out = []
        if self.onprem_cost_per_core_hour <= 0:
            out.append(f"{prefix}.onprem_cost_per_core_hour: must be > 0")
        if not 0.0 < self.onprem_utilization <= 1.0:
            out.append(f"{prefix}.onprem_utilization: must be in (0, 1]")
        if self.onprem_benchmark_events_per_second <= 0:
            out.append(f"{prefix}.onprem_benchmark_events_per_second: must be > 0")
        if self.cloud_benchmark_events_per_second <= 0:
            out.append(f"{prefix}.cloud_benchmark_events_per_second: must be > 0")
        if self.premium_multiplier <= 0:
            out.append(f"{prefix}.premium_multiplier: must be > 0")
        if self.onprem_free_cores < 0:
            out.append(f"{prefix}.onprem_free_cores: must be >= 0")
        return out


def _market_spec_from_record(record: Mapping[str, Any]) -> MarketSpec:
    price = record.get("price_model", {})
    cap = record.get("capacity_profile", {})
    hours = cap.get("business_hours", (9, 17))
    return MarketSpec(
        region=str(record["region"]),
        zone=str(record["zone"]),
        instance_type=str(record["instance_type"]),
        cores=int(record["cores"]),
        memory_gib=float(record.get("memory_gib", 0.0)),
        on_demand_musd=usd(float(record["on_demand_price"])),
        base_capacity=int(record.get("base_capacity", 0)),
        price_params=SpotPriceParams(
            floor_fraction=float(price.get("floor_fraction", 0.05)),
            mean_fraction=float(price.get("mean_fraction", 0.15)),
            volatility=float(price.get("volatility", 0.0)),
            mean_reversion_rate=float(price.get("mean_reversion_rate", 0.5)),
            spike_rate=float(price.get("spike_rate", 0.0)),
            spike_magnitude_fraction=float(price.get("spike_magnitude_fraction", 0.0)),
        ),
        capacity_profile=CapacityProfile(
            weekday_trough_fraction=float(cap.get("weekday_trough_fraction", 1.0)),
            business_hours=(int(hours[0]), int(hours[1])),
            weekend_fraction=float(cap.get("weekend_fraction", 1.0)),
        ),
    )


@dataclass
class Scenario:
    """Fully resolved, validated run configuration."""

    raw: dict
    duration: int
    seed: int
    epoch_weekday: int
    price_tick: int
    markets: list[MarketSpec]
    bid: BidStrategy
    cycle_seconds: int
    boot_delay: int
    max_instances_per_entry: int
    ami_overhead_gb: float
    pilot: PilotPolicy
    limits: ProviderLimits
    cache: CacheTierConfig
    workload: WorkloadConfig
    pricing: PricingTable
    storage: StorageConfig
    cost_model: CostModelConfig
    burn_threshold_musd_per_day: int
    grant_balance_musd: int
    series_bucket: int

    @property
    def entries(self) -> list[ResourceEntry]:
        return [ResourceEntry(spec.market_id, self.max_instances_per_entry,
                              self.ami_overhead_gb)
                for spec in self.markets]

    @property
    def regions(self) -> list[str]:
        return sorted({spec.region for spec in self.markets})

    def total_jobs(self) -> int:
        return sum(self.workload.counts.values())


def resolve(cfg: Mapping[str, Any], base_dir: Path | None = None) -> dict:
    """Fill defaults and expand the catalog; returns the resolved plain dict."""
    out = copy.deepcopy(dict(cfg))
    out.setdefault("schema_version", SCHEMA_VERSION)
    out.setdefault("duration_seconds", 0)
    out.setdefault("seed", 1)
    out.setdefault("epoch_weekday", 0)  # scenarios start on a Monday
    out.setdefault("price_tick_seconds", 300)
    out["markets"] = _load_catalog(out.get("markets", {"catalog": "builtin"}), base_dir)

    bid = out.setdefault("bid", {})
    bid.setdefault("kind", "static_fraction")
    bid.setdefault("fraction", 0.25)

    prov = out.setdefault("provisioner", {})
    prov.setdefault("cycle_seconds", 300)
    prov.setdefault("boot_delay_seconds", 120)
    prov.setdefault("max_instances_per_entry", 10)
    prov.setdefault("ami_overhead_gb", 7.0)
    pilot = prov.setdefault("pilot", {})
    pilot.setdefault("max_lifetime_seconds", 48 * 3600)
    pilot.setdefault("idle_timeout_seconds", 1200)
    lim = prov.setdefault("limits", {})
    lim.setdefault("spot_requests_per_region", 5500)
    lim.setdefault("non_spot_instances", 20)
    lim.setdefault("ebs_tb_per_region", 300.0)

    cache = out.setdefault("cache_tier", {})
    cache.setdefault("zones", 0)
    cache.setdefault("servers_per_zone", 0)
    cache.setdefault("price_usd_per_hour", 0.0)

    workload = out.setdefault("workload", {})
    workload.setdefault("io_mode", "stage_in")
    workload.setdefault("reads_per_job", 100000)
    workload.setdefault("input_files_per_job", 1)
    workload.setdefault("input_gb_per_job", 0.0)
    workload.setdefault("samples", [])
    for sample in workload["samples"]:
        sample.setdefault("jobs", 0)
        sample.setdefault("runtime_dispersion", 0.0)
        sample.setdefault("cpu_efficiency_mean", 0.87)
        sample.setdefault("cpu_efficiency_sigma", 0.05)

    pricing = out.setdefault("pricing", {})
    for key, default in (("egress_tier1_usd_per_gb", 0.09),
                         ("egress_tier2_usd_per_gb", 0.07),
                         ("egress_tier_boundary_gb", 102400),
                         ("egress_waiver_fraction", 0.15),
                         ("storage_usd_per_gb_month", 0.03),
                         ("inter_region_usd_per_gb", 0.02),
                         ("request_usd_per_1000_gets", 0.004),
                         ("support_fraction", 0.06)):
        pricing.setdefault(key, default)

    storage = out.setdefault("storage", {})
    storage.setdefault("dataset_gb", 0.0)
    storage.setdefault("placement", "replicate")
    storage.setdefault("data_region", "")

    cost = out.setdefault("cost_model", {})
    for key, default in (("onprem_cost_per_core_hour", 0.009),
                         ("onprem_uncertainty_fraction", 0.25),
                         ("onprem_utilization", 1.0),
                         ("onprem_benchmark_events_per_second", 0.0163),
                         ("cloud_benchmark_events_per_second", 0.0158),
                         ("cloud_uncertainty_fraction", 0.12),
                         ("premium_multiplier", 2.0),
                         ("onprem_free_cores", 0)):
        cost.setdefault(key, default)

    alarms = out.setdefault("alarms", {})
    alarms.setdefault("burn_rate_threshold_usd_per_day", 1000.0)
    alarms.setdefault("grant_balance_usd", 300000.0)

    report = out.setdefault("report", {})
    report.setdefault("series_bucket_seconds", 600)
    return out


def scenario_from_dict(cfg: Mapping[str, Any], base_dir: Path | None = None) -> Scenario:
    """Resolve, validate, and type a scenario; raises ScenarioError when invalid."""
    raw = resolve(cfg, base_dir)
    violations: list[str] = []

    if raw["schema_version"] != SCHEMA_VERSION:
        violations.append(f"schema_version: expected {SCHEMA_VERSION}, "
                          f"got {raw['schema_version']}")
    if not isinstance(raw["duration_seconds"], int) or raw["duration_seconds"] <= 0:
        violations.append("duration_seconds: must be a positive integer")
    if not isinstance(raw["seed"], int) or not 0 <= raw["seed"] < 2**64:
        violations.append("seed: must be a 64-bit unsigned integer")
    if not 0 <= int(raw["epoch_weekday"]) <= 6:
        violations.append("epoch_weekday: must be in 0..6 (0 = Monday)")
    if raw["price_tick_seconds"] <= 0:
        violations.append("price_tick_seconds: must be > 0")

    markets = []
    if not raw["markets"]:
        violations.append("markets: at least one market required")
    for record in raw["markets"]:
        try:
            spec = _market_spec_from_record(record)
        except (KeyError, TypeError, ValueError) as exc:
            violations.append(f"markets: malformed record ({exc})")
            continue
        violations.extend(spec.violations())
        markets.append(spec)
    ids = [spec.market_id for spec in markets]
    if len(set(ids)) != len(ids):
        violations.append("markets: duplicate market ids")
    markets.sort(key=lambda spec: spec.market_id)

    bid = BidStrategy(kind=raw["bid"]["kind"], fraction=float(raw["bid"]["fraction"]))
    violations.extend(bid.violations())

    prov = raw["provisioner"]
    if prov["cycle_seconds"] <= 0:
        violations.append("provisioner.cycle_seconds: must be > 0")
    if prov["boot_delay_seconds"] < 0:
        violations.append("provisioner.boot_delay_seconds: must be >= 0")
    if prov["max_instances_per_entry"] < 0:
        violations.append("provisioner.max_instances_per_entry: must be >= 0")
    pilot = PilotPolicy(max_lifetime=int(prov["pilot"]["max_lifetime_seconds"]),
                        idle_timeout=int(prov["pilot"]["idle_timeout_seconds"]))
    violations.extend(pilot.violations("provisioner.pilot"))
    limits = ProviderLimits(
        spot_requests_per_region=int(prov["limits"]["spot_requests_per_region"]),
        non_spot_instances=int(prov["limits"]["non_spot_instances"]),
        ebs_tb_per_region=float(prov["limits"]["ebs_tb_per_region"]))
    violations.extend(limits.violations("provisioner.limits"))

    cache = CacheTierConfig(zones=int(raw["cache_tier"]["zones"]),
                            servers_per_zone=int(raw["cache_tier"]["servers_per_zone"]),
                            price_musd_per_hour=usd(float(raw["cache_tier"]["price_usd_per_hour"])))
    violations.extend(cache.violations())
    if cache.servers_per_zone > limits.non_spot_instances:
        violations.append("cache_tier.servers_per_zone: exceeds "
                          "provisioner.limits.non_spot_instances")

    wl = raw["workload"]
    samples = []
    counts = {}
    for record in wl["samples"]:
        try:
            sample = Sample(
                name=str(record["name"]),
                time_per_event=float(record["time_per_event_seconds"]),
                events_per_job=int(record["events_per_job"]),
                failure_prob=float(record["failure_prob"]),
                output_kb_per_event=float(record["output_kb_per_event"]),
                runtime_dispersion=float(record["runtime_dispersion"]),
                cpu_efficiency_mean=float(record["cpu_efficiency_mean"]),
                cpu_efficiency_sigma=float(record["cpu_efficiency_sigma"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            violations.append(f"workload.samples: malformed record ({exc})")
            continue
        samples.append(sample)
        counts[sample.name] = int(record["jobs"])
    workload = WorkloadConfig(io_mode=str(wl["io_mode"]),
                              reads_per_job=int(wl["reads_per_job"]),
                              input_files_per_job=int(wl["input_files_per_job"]),
                              input_gb_per_job=float(wl["input_gb_per_job"]),
                              samples=samples, counts=counts)
    violations.extend(workload.violations())

    pricing = PricingTable.from_config(raw["pricing"])
    violations.extend(pricing.violations())

    storage = StorageConfig(dataset_gb=float(raw["storage"]["dataset_gb"]),
                            placement=str(raw["storage"]["placement"]),
                            data_region=str(raw["storage"]["data_region"]))
    violations.extend(storage.violations())

    cost = CostModelConfig(**{key: raw["cost_model"][key]
                              for key in CostModelConfig.__dataclass_fields__})
    violations.extend(cost.violations())

    alarms = raw["alarms"]
    if float(alarms["burn_rate_threshold_usd_per_day"]) < 0:
        violations.append("alarms.burn_rate_threshold_usd_per_day: must be >= 0")
    if raw["report"]["series_bucket_seconds"] <= 0:
        violations.append("report.series_bucket_seconds: must be > 0")

    if violations:
        raise ScenarioError(violations)

    return Scenario(
        raw=raw,
        duration=int(raw["duration_seconds"]),
        seed=int(raw["seed"]),
        epoch_weekday=int(raw["epoch_weekday"]),
        price_tick=int(raw["price_tick_seconds"]),
        markets=markets,
        bid=bid,
        cycle_seconds=int(prov["cycle_seconds"]),
        boot_delay=int(prov["boot_delay_seconds"]),
        max_instances_per_entry=int(prov["max_instances_per_entry"]),
        ami_overhead_gb=float(prov["ami_overhead_gb"]),
        pilot=pilot,
        limits=limits,
        cache=cache,
        workload=workload,
        pricing=pricing,
        storage=storage,
        cost_model=cost,
        burn_threshold_musd_per_day=usd(float(alarms["burn_rate_threshold_usd_per_day"])),
        grant_balance_musd=usd(float(alarms["grant_balance_usd"])),
        series_bucket=int(raw["report"]["series_bucket_seconds"]),
    )


def load_scenario(path: str | Path | None = None,
                  overrides: Mapping[str, Any] | None = None,
                  seed: int | None = None) -> Scenario:
    """Load a scenario file (packaged default when path is None)."""
    if path is None:
        cfg = default_scenario_dict()
        base_dir = None
    else:
        cfg = _read_yaml(path)
        base_dir = Path(path).resolve().parent
    cfg = resolve(cfg, base_dir)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg["seed"] = seed
    return scenario_from_dict(cfg, base_dir)

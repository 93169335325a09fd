"""Deterministic discrete-event core: clock, event queue, run orchestration.

Time is integer seconds from the scenario epoch (a Monday 00:00 unless
configured otherwise). The loop is single-threaded; identical scenario and
seed produce an identical event trace and therefore an identical report.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Any

from . import billing, provisioner, scheduler
from .market import (PREEMPTION_NOTICE_SECONDS, Market, SECONDS_PER_HOUR)
from .provisioner import Instance, InstanceState
from .rng import RngStreams
from .scenario import Scenario

EV_TICK = "tick"
EV_CYCLE = "cycle"
EV_PROBE = "probe"
EV_BOOT = "boot"
EV_ATTEMPT_END = "attempt_end"
EV_DRAIN_DONE = "drain_done"
EV_MAX_LIFETIME = "max_lifetime"
EV_IDLE_CHECK = "idle_check"


class SimClock:
    """Monotonic simulation clock in integer seconds since the epoch."""

    def __init__(self, epoch_weekday: int = 0):
        self.now = 0
        self.epoch_weekday = epoch_weekday

    def advance(self, t: int) -> None:
        if t < self.now:
            raise RuntimeError(f"clock moved backwards: {self.now} -> {t}")
        self.now = t


class EventQueue:
    """Time-ordered event queue with stable FIFO ordering at equal times."""

    def __init__(self, clock: SimClock):
        self._clock = clock
        self._heap: list[tuple[int, int, str, tuple]] = []
        self._seq = itertools.count()

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, kind: str, at: int, payload: tuple = ()) -> None:
        if at < self._clock.now:
            raise ValueError(f"cannot schedule {kind} at {at}, now is {self._clock.now}")
        heapq.heappush(self._heap, (at, next(self._seq), kind, payload))

    def next_event(self) -> tuple[int, str, tuple]:
        at, _, kind, payload = heapq.heappop(self._heap)
        self._clock.advance(at)
        return at, kind, payload

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None


@dataclass
class RunResult:
    trace: list[dict]


class Engine:
    """Owns all mutable simulation state for one scenario run."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.clock = SimClock(scenario.epoch_weekday)
        self.queue = EventQueue(self.clock)
        self.rngs = RngStreams(scenario.seed)
        self.trace: list[dict] = []

        self.markets: dict[str, Market] = {
            spec.market_id: Market(spec) for spec in scenario.markets}
        self.market_order = sorted(self.markets)
        # price in effect during [i*tick, (i+1)*tick), per market
        self.price_paths: dict[str, list[int]] = {
            mid: [self.markets[mid].spot_musd] for mid in self.market_order}
        self.bids: dict[str, int] = {
            mid: provisioner.compute_bid(scenario.bid, self.markets[mid].spec.on_demand_musd)
            for mid in self.market_order}
        self.region_of = {mid: self.markets[mid].spec.region for mid in self.market_order}
        self.cores_of = {mid: self.markets[mid].spec.cores for mid in self.market_order}

        self.instances: dict[int, Instance] = {}
        self.live_instances: dict[int, Instance] = {}
        self.live_by_market: dict[str, int] = {mid: 0 for mid in self.market_order}
        self.ebs_used_gb: dict[str, float] = {}
        self._next_instance_id = itertools.count(1)

        self.jobs: dict[int, scheduler.Job] = {}
        self.work_queue = scheduler.WorkQueue()
        self._free_slots: list[tuple[int, int]] = []  # (instance_id, slot) heap

        self.terminated_charges_musd = 0
        self.prev_accrued_musd = 0
        self.term_counts_window: dict[str, dict[str, int]] = {}

    # -- price path helpers --------------------------------------------------

    def price_at(self, market_id: str, t: int) -> int:
        path = self.price_paths[market_id]
        return path[min(t // self.scenario.price_tick, len(path) - 1)]

    def hourly_prices(self, market_id: str, launch: int, end: int) -> list[int]:
        hours = math.ceil((end - launch) / SECONDS_PER_HOUR)
        return [self.price_at(market_id, launch + k * SECONDS_PER_HOUR)
                for k in range(hours)]

    # -- run ------------------------------------------------------------------

    def run(self) -> list[dict]:
        sc = self.scenario
        self.trace.append({"t": 0, "ev": "run_start",
                           "schema_version": sc.raw["schema_version"],
                           "seed": sc.seed, "scenario": sc.raw})
        self._submit_workload()

        # Ticks stop one period early so every preemption notice resolves
        # inside the run; cycles start immediately, probes on the hour.
        for t in range(sc.price_tick, sc.duration, sc.price_tick):
            self.queue.schedule(EV_TICK, t)
        for t in range(0, sc.duration, sc.cycle_seconds):
            self.queue.schedule(EV_CYCLE, t)
        for t in range(SECONDS_PER_HOUR, sc.duration + 1, SECONDS_PER_HOUR):
            self.queue.schedule(EV_PROBE, t)

        while len(self.queue):
            if self.queue.peek_time() > sc.duration:
                break
            t, kind, payload = self.queue.next_event()
            self._dispatch_event(t, kind, payload)

        self._cleanup(sc.duration)
        return self.trace

    def _dispatch_event(self, t: int, kind: str, payload: tuple) -> None:
        if kind == EV_TICK:
            self._on_tick(t)
        elif kind == EV_CYCLE:
            self._on_cycle(t)
        elif kind == EV_PROBE:
            self._on_probe(t)
        elif kind == EV_BOOT:
            self._on_boot(t, *payload)
        elif kind == EV_ATTEMPT_END:
            self._on_attempt_end(t, *payload)
        elif kind == EV_DRAIN_DONE:
            self._on_drain_done(t, *payload)
        elif kind == EV_MAX_LIFETIME:
            self._on_max_lifetime(t, *payload)
        elif kind == EV_IDLE_CHECK:
            self._on_idle_check(t, *payload)
        else:
            raise RuntimeError(f"unknown event kind: {kind}")

    # -- workload -------------------------------------------------------------

    def _submit_workload(self) -> None:
        wl = self.scenario.workload
        ordered = scheduler.interleave_workload(
            [(sample, wl.counts[sample.name]) for sample in wl.samples])
        for sample in ordered:
            job = scheduler.Job(len(self.jobs) + 1, sample)
            self.jobs[job.job_id] = job
            self.work_queue.push(job)
            self.trace.append({"t": 0, "ev": "submit", "job": job.job_id,
                               "sample": sample.name})

    # -- market tick ----------------------------------------------------------

    def _on_tick(self, t: int) -> None:
        sc = self.scenario
        for mid in self.market_order:
            market = self.markets[mid]
            rng = self.rngs.stream(f"price:{mid}")
            market.advance_price(sc.price_tick, rng)
            self.price_paths[mid].append(market.spot_musd)
            for iid, cause in market.check_preemptions(t, sc.epoch_weekday):
                self._begin_drain(t, self.instances[iid], cause)
            assert len(market.provisioned) <= market.capacity(t, sc.epoch_weekday), \
                f"market {mid} over capacity at t={t}"

    def _begin_drain(self, t: int, inst: Instance, cause: str) -> None:
        deadline = t + PREEMPTION_NOTICE_SECONDS
        inst.transition(InstanceState.DRAINING)
        inst.idle_since = None
        self.queue.schedule(EV_DRAIN_DONE, deadline, (inst.instance_id,))
        self.trace.append({"t": t, "ev": "preempt", "inst": inst.instance_id,
                           "market": inst.market_id, "cause": cause,
                           "deadline": deadline})

    # -- demand cycle ----------------------------------------------------------

    def _free_core_supply(self) -> int:
        supply = 0
        for inst in self.live_instances.values():
            if inst.state in (InstanceState.REQUESTED, InstanceState.BOOTING):
                supply += inst.cores
            else:
                supply += inst.free_slots()
        return supply

    def _on_cycle(self, t: int) -> None:
        sc = self.scenario
        idle = len(self.work_queue)
        requested: dict[str, int] = {}
        fulfilled: dict[str, int] = {}
        truncated = 0
        if idle > 0:
            pressure = max(0, idle - self._free_core_supply())
            if pressure > 0:
                entries = [provisioner.ResourceEntry(
                    mid, max(0, sc.max_instances_per_entry - self.live_by_market[mid]),
                    sc.ami_overhead_gb) for mid in self.market_order]
                demand = provisioner.compute_demand(pressure, entries, self.cores_of)
                requested, truncated = provisioner.truncate_requests(
                    demand, self.region_of, sc.limits, self.ebs_used_gb,
                    sc.ami_overhead_gb)
                for mid in self.market_order:
                    count = requested.get(mid, 0)
                    if count <= 0:
                        continue
                    market = self.markets[mid]
                    granted = market.fulfillable(self.bids[mid], count, t, sc.epoch_weekday)
                    if granted > 0:
                        fulfilled[mid] = granted
                        for _ in range(granted):
                            self._launch_instance(t, market)
        record = {"t": t, "ev": "cycle", "idle": idle,
                  "requested": {k: v for k, v in requested.items() if v},
                  "fulfilled": fulfilled}
        if truncated:
            record["truncated"] = truncated
        self.trace.append(record)
        if fulfilled:
            self._dispatch_jobs(t)

    def _launch_instance(self, t: int, market: Market) -> None:
        iid = next(self._next_instance_id)
        spec = market.spec
        inst = Instance(instance_id=iid, market_id=market.market_id,
                        region=spec.region, cores=spec.cores,
                        bid_musd=self.bids[market.market_id], launch_time=t)
        self.instances[iid] = inst
        self.live_instances[iid] = inst
        self.live_by_market[market.market_id] += 1
        self.ebs_used_gb[spec.region] = self.ebs_used_gb.get(spec.region, 0.0) + \
            self.scenario.ami_overhead_gb
        market.add_instance(iid, inst.bid_musd)
        self.trace.append({"t": t, "ev": "fulfill", "inst": iid,
                           "market": market.market_id, "cores": spec.cores,
                           "bid_musd": inst.bid_musd, "price_musd": market.spot_musd})
        inst.transition(InstanceState.BOOTING)
        self.queue.schedule(EV_BOOT, t + self.scenario.boot_delay, (iid,))
        self.queue.schedule(EV_MAX_LIFETIME, inst.launch_time + self.scenario.pilot.max_lifetime,
                            (iid,))

    # -- pilot lifecycle --------------------------------------------------------

    def _on_boot(self, t: int, iid: int) -> None:
        inst = self.instances[iid]
        if inst.state is not InstanceState.BOOTING:
            return  # preempted while booting
        inst.transition(InstanceState.PILOT_RUNNING)
        self.trace.append({"t": t, "ev": "boot", "inst": iid})
        for slot in range(inst.cores):
            heapq.heappush(self._free_slots, (iid, slot))
        self._dispatch_jobs(t)
        self._settle_idle(t, inst)

    def _settle_idle(self, t: int, inst: Instance) -> None:
        """Move a jobless pilot to idle and arm its idle timeout."""
        if inst.state is InstanceState.PILOT_RUNNING and not inst.busy:
            inst.transition(InstanceState.PILOT_IDLE)
            inst.idle_since = t
            self.queue.schedule(EV_IDLE_CHECK,
                                t + self.scenario.pilot.idle_timeout, (inst.instance_id, t))

    def _dispatch_jobs(self, t: int) -> None:
        while len(self.work_queue) and self._free_slots:
            iid, slot = self._free_slots[0]
            inst = self.instances.get(iid)
            if inst is None or not inst.accepts_jobs or slot in inst.busy:
                heapq.heappop(self._free_slots)  # stale entry
                continue
            job = self.work_queue.pop_oldest()
            heapq.heappop(self._free_slots)
            if inst.state is InstanceState.PILOT_IDLE:
                inst.transition(InstanceState.PILOT_RUNNING)
                inst.idle_since = None
            self._start_attempt(t, job, inst, slot)

    def _start_attempt(self, t: int, job: scheduler.Job, inst: Instance, slot: int) -> None:
        profile = scheduler.draw_attempt(job.sample, self.rngs.stream("runtimes"))
        serial = job.start_attempt(inst.instance_id, slot, t, profile)
        inst.busy[slot] = job.job_id
        self.queue.schedule(EV_ATTEMPT_END, t + profile.wall_seconds,
                            (job.job_id, serial))
        self.trace.append({"t": t, "ev": "start", "job": job.job_id,
                           "inst": inst.instance_id, "slot": slot})

    def _on_attempt_end(self, t: int, job_id: int, serial: int) -> None:
        job = self.jobs[job_id]
        if job.state != scheduler.JOB_RUNNING or job.attempt_serial != serial:
            return  # attempt was interrupted; this event is stale
        inst = self.instances[job.instance_id]
        slot = job.slot
        failed = self.rngs.stream("failures").random() < job.sample.failure_prob
        outcome, wall, cpu = job.record_attempt_end(t, failed)
        record = {"t": t, "ev": "attempt_end", "job": job_id, "outcome": outcome,
                  "sample": job.sample.name, "wall": wall, "cpu": cpu}
        if outcome == scheduler.OUTCOME_COMPLETED:
            record["staged_kb"] = job.sample.output_kb_per_job
        self.trace.append(record)
        if outcome == scheduler.OUTCOME_FAILED_RETRY:
            self.work_queue.push(job)
        inst.busy.pop(slot, None)
        if inst.accepts_jobs:
            heapq.heappush(self._free_slots, (inst.instance_id, slot))
            self._dispatch_jobs(t)
            self._settle_idle(t, inst)

    def _on_idle_check(self, t: int, iid: int, idle_marker: int) -> None:
        inst = self.instances[iid]
        if inst.state is InstanceState.PILOT_IDLE and inst.idle_since == idle_marker:
            self._terminate_instance(t, inst, provisioner.REASON_IDLE_TIMEOUT)

    def _on_max_lifetime(self, t: int, iid: int) -> None:
        inst = self.instances[iid]
        if inst.state in (InstanceState.TERMINATED, InstanceState.DRAINING):
            return  # a preemption notice already fixed the termination time
        self._interrupt_jobs(t, inst, preempted=False)
        self._terminate_instance(t, inst, provisioner.REASON_MAX_LIFETIME)
        self._dispatch_jobs(t)

    def _on_drain_done(self, t: int, iid: int) -> None:
        inst = self.instances[iid]
        assert inst.state is InstanceState.DRAINING
        self._interrupt_jobs(t, inst, preempted=True)
        self._terminate_instance(t, inst, provisioner.REASON_PREEMPTED)
        self._dispatch_jobs(t)

    def _interrupt_jobs(self, t: int, inst: Instance, preempted: bool) -> None:
        for slot in sorted(inst.busy):
            job = self.jobs[inst.busy[slot]]
            if preempted:
                wall, cpu = job.record_preemption(t)
                reason = "preempted"
            else:
                wall, cpu = job.record_restart(t)
                reason = "max_lifetime"
            self.work_queue.push(job)
            self.trace.append({"t": t, "ev": "job_requeue", "job": job.job_id,
                               "inst": inst.instance_id, "reason": reason,
                               "wall_partial": wall, "cpu_partial": cpu})
        inst.busy.clear()

    def _terminate_instance(self, t: int, inst: Instance, reason: str) -> None:
        market = self.markets[inst.market_id]
        market.remove_instance(inst.instance_id)
        inst.hourly_prices_musd = self.hourly_prices(inst.market_id, inst.launch_time, t)
        inst.terminate(reason, t)
        del self.live_instances[inst.instance_id]
        self.live_by_market[inst.market_id] -= 1
        self.ebs_used_gb[inst.region] -= self.scenario.ami_overhead_gb
        record = billing.UsageRecord(
            instance_id=inst.instance_id, market_id=inst.market_id,
            launch_time=inst.launch_time, termination_time=t,
            termination_reason=reason, hourly_prices_musd=inst.hourly_prices_musd)
        self.terminated_charges_musd += billing.charge_instance(record)
        window = self.term_counts_window.setdefault(inst.market_id, {})
        window[reason] = window.get(reason, 0) + 1
        self.trace.append({"t": t, "ev": "terminate", "inst": inst.instance_id,
                           "market": inst.market_id, "reason": reason,
                           "launch_t": inst.launch_time, "cores": inst.cores,
                           "hourly_prices_musd": inst.hourly_prices_musd})

    # -- accounting probe --------------------------------------------------------

    def _accrued_musd(self, t: int) -> int:
        total = self.terminated_charges_musd
        for inst in self.live_instances.values():
            prices = self.hourly_prices(inst.market_id, inst.launch_time,
                                        t + SECONDS_PER_HOUR)
            total += billing.accrued_charge(inst.launch_time, t, prices)
        return total

    def _on_probe(self, t: int) -> None:
        running: dict[str, int] = {}
        for inst in self.live_instances.values():
            running[inst.market_id] = running.get(inst.market_id, 0) + 1
        accrued = self._accrued_musd(t)
        window_spend = accrued - self.prev_accrued_musd
        self.prev_accrued_musd = accrued
        alarm = billing.burn_rate_alarm(window_spend,
                                        self.scenario.burn_threshold_musd_per_day,
                                        SECONDS_PER_HOUR)
        self.trace.append({
            "t": t, "ev": "probe",
            "markets": {mid: {"running": running.get(mid, 0),
                              "price_musd": self.markets[mid].spot_musd}
                        for mid in self.market_order},
            "terminations": self.term_counts_window,
            "window_spend_musd": window_spend,
            "balance_musd": self.scenario.grant_balance_musd - accrued,
            "alarm": alarm,
        })
        self.term_counts_window = {}

    # -- end of run ----------------------------------------------------------------

    def _cleanup(self, t: int) -> None:
        running_jobs = 0
        for iid in sorted(self.live_instances):
            inst = self.instances[iid]
            assert inst.state is not InstanceState.DRAINING, \
                "drain must resolve before scenario end"
            running_jobs += len(inst.busy)
            for slot in sorted(inst.busy):
                job = self.jobs[inst.busy[slot]]
                wall, cpu = job.record_restart(t)
                self.trace.append({"t": t, "ev": "job_requeue", "job": job.job_id,
                                   "inst": iid, "reason": "run_end",
                                   "wall_partial": wall, "cpu_partial": cpu})
            inst.busy.clear()
            self._terminate_instance(t, inst, provisioner.REASON_ADMIN)
        self.trace.append({"t": t, "ev": "run_end",
                           "jobs_running": running_jobs,
                           "jobs_idle": len(self.work_queue)})


def run_scenario(scenario: Scenario) -> RunResult:
    """Run one scenario to completion and return its event trace."""
    engine = Engine(scenario)
    return RunResult(trace=engine.run())

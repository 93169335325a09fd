"""Job queue, workload samples, attempt draws, and retry/preemption accounting.

Jobs are single-core. A preemption requeues the job without consuming one of
the WMAgent-style submission tries; an application failure consumes a try and
the job fails for good after the third.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass

WMAGENT_MAX_SUBMITS = 3

JOB_IDLE = "idle"
JOB_RUNNING = "running"
JOB_COMPLETED = "completed"
JOB_FAILED = "failed"

OUTCOME_COMPLETED = "completed"
OUTCOME_FAILED_RETRY = "failed_retry"
OUTCOME_FAILED_FINAL = "failed_final"

MIN_CPU_EFFICIENCY = 0.05


@dataclass
class Sample:
    """Workload sample parameterizing runtime, failure, and output size."""

    name: str
    time_per_event: float  # seconds per event
    events_per_job: int
    failure_prob: float  # per attempt
    output_kb_per_event: float
    runtime_dispersion: float = 0.0  # lognormal sigma
    cpu_efficiency_mean: float = 0.87
    cpu_efficiency_sigma: float = 0.05

    def violations(self, prefix: str = "sample") -> list[str]:
        out = []
        if self.time_per_event <= 0:
            out.append(f"{prefix}.time_per_event_seconds: must be > 0")
        if self.events_per_job < 1:
            out.append(f"{prefix}.events_per_job: must be >= 1")
        if not 0.0 <= self.failure_prob < 1.0:
            out.append(f"{prefix}.failure_prob: must be in [0, 1)")
        if self.output_kb_per_event < 0:
            out.append(f"{prefix}.output_kb_per_event: must be >= 0")
        if self.runtime_dispersion < 0:
            out.append(f"{prefix}.runtime_dispersion: must be >= 0")
        if not 0.0 < self.cpu_efficiency_mean <= 1.0:
            out.append(f"{prefix}.cpu_efficiency_mean: must be in (0, 1]")
        if self.cpu_efficiency_sigma < 0:
            out.append(f"{prefix}.cpu_efficiency_sigma: must be >= 0")
        return out

    @property
    def mean_wall_seconds(self) -> float:
        return self.time_per_event * self.events_per_job

    @property
    def output_kb_per_job(self) -> float:
        return self.events_per_job * self.output_kb_per_event


@dataclass
class AttemptProfile:
    wall_seconds: int
    cpu_efficiency: float


def draw_attempt(sample: Sample, rng: random.Random) -> AttemptProfile:
    """Draw one attempt: lognormal wall time with the configured mean.

    Zero dispersion degenerates to exactly the sample mean (rounded to whole
    seconds, the simulation time grid).
    """
    mean = sample.mean_wall_seconds
    sigma = sample.runtime_dispersion
    if sigma > 0.0:
        wall = rng.lognormvariate(math.log(mean) - 0.5 * sigma * sigma, sigma)
    else:
        wall = mean
    if sample.cpu_efficiency_sigma > 0.0:
        efficiency = rng.gauss(sample.cpu_efficiency_mean, sample.cpu_efficiency_sigma)
    else:
        efficiency = sample.cpu_efficiency_mean
    efficiency = min(1.0, max(MIN_CPU_EFFICIENCY, efficiency))
    return AttemptProfile(max(1, round(wall)), efficiency)


class Job:
    """One unit of work with per-attempt and cumulative time accounting."""

    def __init__(self, job_id: int, sample: Sample):
        self.job_id = job_id
        self.sample = sample
        self.state = JOB_IDLE
        self.preempt_count = 0
        self.submit_count = 1
        self.starts = 0
        self.wall_all = 0  # every attempt, partial or complete
        self.cpu_all = 0
        self.wall_final = 0  # the final complete attempt only
        self.cpu_final = 0
        # current attempt
        self.instance_id: int | None = None
        self.slot: int | None = None
        self.started_at: int | None = None
        self.planned_wall: int | None = None
        self.efficiency: float | None = None
        self.attempt_serial = 0

    def start_attempt(self, instance_id: int, slot: int, now: int,
                      profile: AttemptProfile) -> int:
        if self.state != JOB_IDLE:
            raise RuntimeError(f"job {self.job_id} started while {self.state}")
        self.state = JOB_RUNNING
        self.starts += 1
        self.attempt_serial += 1
        self.instance_id = instance_id
        self.slot = slot
        self.started_at = now
        self.planned_wall = profile.wall_seconds
        self.efficiency = profile.cpu_efficiency
        return self.attempt_serial

    def _close_attempt(self, now: int) -> tuple[int, int]:
        wall = now - self.started_at
        cpu = min(wall, round(wall * self.efficiency))
        self.wall_all += wall
        self.cpu_all += cpu
        self.instance_id = None
        self.slot = None
        self.started_at = None
        self.planned_wall = None
        self.efficiency = None
        return wall, cpu

    def record_preemption(self, now: int) -> tuple[int, int]:
        """Market preemption: partial attempt lost, job requeued.

        Does not consume a submission try; the partial wall/cpu time counts
        only toward the all-attempts totals.
        """
        wall, cpu = self._close_attempt(now)
        self.preempt_count += 1
        self.state = JOB_IDLE
        return wall, cpu

    def record_restart(self, now: int) -> tuple[int, int]:
        """Non-preemption interruption (pilot max lifetime, end of run)."""
        wall, cpu = self._close_attempt(now)
        self.state = JOB_IDLE
        return wall, cpu

    def record_attempt_end(self, now: int, failed: bool) -> tuple[str, int, int]:
        """Close a full attempt; returns (outcome, wall, cpu)."""
        eff = self.efficiency
        wall, cpu = self._close_attempt(now)
        if not failed:
            self.state = JOB_COMPLETED
            self.wall_final = wall
            self.cpu_final = cpu
            return OUTCOME_COMPLETED, wall, cpu
        if self.submit_count < WMAGENT_MAX_SUBMITS:
            self.submit_count += 1
            self.state = JOB_IDLE
            return OUTCOME_FAILED_RETRY, wall, cpu
        self.state = JOB_FAILED
        self.wall_final = wall
        self.cpu_final = cpu
        return OUTCOME_FAILED_FINAL, wall, cpu

    @property
    def terminal(self) -> bool:
        return self.state in (JOB_COMPLETED, JOB_FAILED)


def interleave_workload(counts: list[tuple[Sample, int]]) -> list[Sample]:
    """Deterministic proportional interleaving of per-sample job counts.

    Spreads each sample evenly over the submission order so the queue is not
    a block per sample.
    """
    slots: list[tuple[float, int, Sample]] = []
    for index, (sample, n) in enumerate(counts):
        if n < 0:
            raise ValueError("job count must be >= 0")
        for k in range(n):
            slots.append(((k + 0.5) / n, index, sample))
    slots.sort(key=lambda item: (item[0], item[1]))
    return [sample for _, _, sample in slots]


class WorkQueue:
    """Idle-job queue ordered by age: lowest job id (submit order) first.

    Requeued jobs keep their original age, so a preempted early job goes back
    to the front rather than behind the whole backlog.
    """

    def __init__(self):
        self._heap: list[tuple[int, Job]] = []

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, job: Job) -> None:
        heapq.heappush(self._heap, (job.job_id, job))

    def pop_oldest(self) -> Job | None:
        """Oldest idle job that fits a single-core pilot slot, or None."""
        if not self._heap:
            return None
        return heapq.heappop(self._heap)[1]

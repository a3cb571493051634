"""Budget-aware scheduling of concurrent tree-search jobs.

One global budget ``max_concurrency`` caps both the number of admitted jobs
and the total number of in-flight rollouts. Each pass runs three phases:

1. admission — pending jobs enter the run queue FIFO while capacity allows;
2. allocation — every running job gets a parallelism target: one rollout
   while it is still under the observation gate, otherwise a share of the
   budget proportional to its priority score (waiting time plus a boost for
   jobs close to the positive-exit threshold);
3. reconciliation — jobs above target preempt their lowest-reward in-flight
   rollouts, jobs below target launch new ones.

The functions here only decide; the simulator applies the resulting actions
to trees and engine state. All ordering is deterministic: ties go to earlier
arrivals, then lower job ids.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .scoring import ExitDecision, ExitKind
from .tree import SearchTree

__all__ = [
    "InflightRollout",
    "Job",
    "JobState",
    "LaunchAction",
    "PreemptAction",
    "SchedulerConfig",
    "SchedulerState",
    "admit_jobs",
    "choose_preemption_victims",
    "compute_targets",
    "on_rollout_complete",
    "parallelism_score",
    "reconcile",
]


class JobState(enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    FINISHED = "finished"


@dataclass
class InflightRollout:
    """Scheduler-visible view of one launched rollout; the owner refreshes
    ``prefix_score`` as the rollout's path grows."""

    rollout_id: int
    prefix_score: float


@dataclass
class Job:
    """Lifecycle of one reasoning request inside the scheduler."""

    job_id: int
    arrival_time: float
    tree: SearchTree
    completed_rollouts: int = 0
    best_score: float = 0.0
    target_parallelism: int = 1
    active_rollouts: list[InflightRollout] = field(default_factory=list)
    state: JobState = JobState.PENDING
    finished_kind: Optional[ExitKind] = None


@dataclass(frozen=True)
class SchedulerConfig:
    max_concurrency: int = 16
    beta: float = 2.0
    proximity: float = 0.9
    obs_threshold: int = 2
    boosting_enabled: bool = True

    def __post_init__(self) -> None:
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0.0 < self.proximity < 1.0:
            raise ValueError("proximity must lie in (0,1)")
        if self.obs_threshold < 1:
            raise ValueError("obs_threshold must be >= 1")


@dataclass
class SchedulerState:
    pending_queue: deque[Job] = field(default_factory=deque)
    run_queue: list[Job] = field(default_factory=list)
    now: float = 0.0

    def total_active(self) -> int:
        return sum(len(job.active_rollouts) for job in self.run_queue)


@dataclass(frozen=True)
class LaunchAction:
    job_id: int
    count: int


@dataclass(frozen=True)
class PreemptAction:
    job_id: int
    rollout_id: int


def parallelism_score(
    job: Job, now: float, positive_exit_threshold: float, config: SchedulerConfig
) -> float:
    """Priority from waiting time plus a boost when the job's best score is
    within the proximity band of the positive-exit threshold."""
    if now < job.arrival_time:
        raise ValueError(f"now={now} precedes arrival={job.arrival_time}")
    waited = now - job.arrival_time
    progress_ratio = job.best_score / positive_exit_threshold
    boost = config.beta if progress_ratio > config.proximity else 0.0
    return math.log1p(waited) + boost


def admit_jobs(state: SchedulerState, config: SchedulerConfig) -> list[Job]:
    """Move pending jobs into the run queue FIFO while capacity allows."""
    admitted = []
    while state.pending_queue and len(state.run_queue) < config.max_concurrency:
        job = state.pending_queue.popleft()
        job.state = JobState.RUNNING
        job.target_parallelism = 1
        state.run_queue.append(job)
        admitted.append(job)
    return admitted


def compute_targets(
    state: SchedulerState, config: SchedulerConfig, positive_exit_threshold: float
) -> dict[int, int]:
    """Per-job parallelism targets; the total never exceeds the budget.

    Jobs under the observation gate stay serial. The proportional share uses
    the score sum over all running jobs (gated included), so the floors
    under-allocate and the leftover budget is granted one slot at a time in
    descending score order, ties to earlier arrivals. Every running job is
    entitled to one rollout before anyone gets extras, which keeps the total
    within budget even when one score dominates the sum.
    """
    running = [job for job in state.run_queue if job.state is JobState.RUNNING]
    if not running:
        raise ValueError("run queue holds no running jobs")
    targets = {job.job_id: 1 for job in running}
    if not config.boosting_enabled:
        return targets
    scores = {
        job.job_id: parallelism_score(job, state.now, positive_exit_threshold, config)
        for job in running
    }
    total_score = sum(scores.values())
    ungated = [job for job in running if job.completed_rollouts >= config.obs_threshold]
    ungated.sort(key=lambda j: (-scores[j.job_id], j.arrival_time, j.job_id))
    remaining = config.max_concurrency - len(running)
    for job in ungated:
        if remaining <= 0:
            break
        if total_score > 0.0:
            want = max(
                1, math.floor(scores[job.job_id] / total_score * config.max_concurrency)
            )
        else:
            want = 1
        extra = min(want - 1, remaining)
        targets[job.job_id] += extra
        remaining -= extra
    while remaining > 0 and ungated:
        for job in ungated:
            if remaining <= 0:
                break
            targets[job.job_id] += 1
            remaining -= 1
    return targets


def choose_preemption_victims(
    rollouts: list[InflightRollout], count: int
) -> list[InflightRollout]:
    """The ``count`` in-flight rollouts with the lowest prefix scores; ties go
    to the earlier launch."""
    ranked = sorted(rollouts, key=lambda r: (r.prefix_score, r.rollout_id))
    return ranked[:count]


def reconcile(
    state: SchedulerState, targets: dict[int, int]
) -> list[LaunchAction | PreemptAction]:
    """Actions bringing each job's active rollouts to its target."""
    actions: list[LaunchAction | PreemptAction] = []
    for job in state.run_queue:
        if job.state is not JobState.RUNNING:
            continue
        target = targets[job.job_id]
        active = len(job.active_rollouts)
        if active > target:
            for victim in choose_preemption_victims(job.active_rollouts, active - target):
                actions.append(PreemptAction(job.job_id, victim.rollout_id))
        elif active < target:
            actions.append(LaunchAction(job.job_id, target - active))
    return actions


def on_rollout_complete(
    state: SchedulerState, job: Job, decision: ExitDecision
) -> list[PreemptAction]:
    """Fold a finished rollout into the job; on any exit the job leaves the
    run queue and its remaining in-flight rollouts are handed back as
    preemptions."""
    job.completed_rollouts = job.tree.completed_rollouts
    best = job.tree.best_trajectory
    if best is not None and best.aggregate_score > job.best_score:
        job.best_score = best.aggregate_score
    if decision.kind is ExitKind.CONTINUE:
        return []
    job.state = JobState.FINISHED
    job.finished_kind = decision.kind
    if job in state.run_queue:
        state.run_queue.remove(job)
    return [PreemptAction(job.job_id, r.rollout_id) for r in job.active_rollouts]

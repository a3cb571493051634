"""Deterministic discrete-event engine for serving search workloads.

Parallel rollouts are interleaved logical events over a single mutable state,
not threads: each step generation is issued with a service time from the cost
model and lands as a future completion event. The full event trace is a pure
function of (workload, configs, seed), which is what makes tail-latency
comparisons across system configurations trustworthy.

Event kinds: request arrivals, step completions (one per in-flight expansion,
carrying that step's sampled candidates), periodic scheduler ticks, and job
completions. Events are processed in (time, sequence) order; the sequence
number is a monotone tie-break so simultaneous events replay identically.
"""

from __future__ import annotations

import enum
import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from . import beam as beam_mod
from . import rng
from .backend import CostModel, StepCandidate, SyntheticProblemSpec, generate_steps, service_time
from .metrics import RecordExitKind, RequestRecord
from .scheduler import (
    InflightRollout,
    Job,
    JobState,
    LaunchAction,
    PreemptAction,
    SchedulerConfig,
    SchedulerState,
    admit_jobs,
    compute_targets,
    on_rollout_complete,
    parallelism_score,
    reconcile,
)
from .scoring import ExitKind, ScoringConfig, aggregate_trajectory, decide_exit
from .search import finish_rollout, trajectory_index_path
from .tree import (
    NoExpandableLeafError,
    SearchTree,
    SelectionParams,
    cancel_inflight,
    expand,
    greedy_child,
    select_leaf,
)

__all__ = ["Event", "EventKind", "Engine", "SimulationConfig", "SimulationError", "run"]

_TAG_ARRIVAL = 21


class SimulationError(Exception):
    """Fatal engine-level inconsistency (ordering, capacity, runaway run)."""


class EventKind(enum.Enum):
    ARRIVAL = "arrival"
    STEP_COMPLETE = "step_complete"
    SCHEDULER_TICK = "scheduler_tick"
    JOB_FINISHED = "job_finished"


@dataclass(frozen=True)
class Event:
    time: float
    sequence: int
    kind: EventKind
    job_id: Optional[int] = None
    rollout_id: Optional[int] = None


@dataclass(frozen=True)
class SimulationConfig:
    """Everything a run needs besides the workload, rate, and seed."""

    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    selection: SelectionParams = field(default_factory=SelectionParams)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    cost: CostModel = field(default_factory=CostModel)
    beam: beam_mod.BeamConfig = field(default_factory=beam_mod.BeamConfig)
    mode: str = "mcts"  # "mcts" or "beam"
    positive_exit: bool = True
    negative_exit: bool = True
    rollout_budget: int = 32
    depth_cap: int = 16
    expand_width: int = 4
    tick_interval: float = 0.05
    arrival_process: str = "poisson"  # or "fixed"
    event_cap: int = 10_000_000

    def __post_init__(self) -> None:
        if self.mode not in ("mcts", "beam"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.arrival_process not in ("poisson", "fixed"):
            raise ValueError(f"unknown arrival process {self.arrival_process!r}")
        if self.rollout_budget < 1 or self.depth_cap < 1 or self.expand_width < 1:
            raise ValueError("budget, depth cap, and expand width must be positive")
        if self.tick_interval <= 0 or self.event_cap < 1:
            raise ValueError("tick_interval and event_cap must be positive")
        if self.negative_exit and self.mode == "mcts":
            # force the scheme check early instead of failing mid-run
            from .scoring import classify_leaf

            classify_leaf(0.0, 0.0, self.scoring)


@dataclass
class _PendingStep:
    """An expansion in flight: the node being extended and its sampled steps."""

    node_id: int
    candidates: list[StepCandidate]
    slots: int


@dataclass
class _Rollout:
    rollout_id: int
    job_id: int
    path: list[int]  # node ids, root first
    index_path: list[int]
    pending: Optional[_PendingStep] = None
    cancelled: bool = False


@dataclass
class _BeamRun:
    active: list[beam_mod.Beam]
    finished: list[beam_mod.Beam] = field(default_factory=list)
    steps: int = 0
    pending: Optional[list[beam_mod.BeamCandidate]] = None
    pending_slots: int = 0


@dataclass
class _JobRun:
    """Engine-side state for one request."""

    index: int
    problem: SyntheticProblemSpec
    job: Job
    rollouts: dict[int, _Rollout] = field(default_factory=dict)
    tokens: int = 0
    preempted: int = 0
    beam: Optional[_BeamRun] = None
    finished_event_sent: bool = False


class Engine:
    """Owns the clock, the event heap, and all mutable run state."""

    def __init__(
        self,
        workload: Sequence[SyntheticProblemSpec],
        arrival_rate: float,
        config: SimulationConfig,
        seed: int,
        listener: Optional[Callable[["Engine", Event], None]] = None,
        trace: Optional[list] = None,
    ) -> None:
        if arrival_rate <= 0:
            raise ValueError("arrival_rate must be positive")
        self.config = config
        self.seed = seed
        self.listener = listener
        self.trace = trace
        self.clock = 0.0
        self.inflight_requests = 0
        self._heap: list[tuple[float, int, Event]] = []
        self._seq = 0
        self.sched = SchedulerState()
        self.jobs: dict[int, _JobRun] = {}
        self.records: list[Optional[RequestRecord]] = [None] * len(workload)
        self._workload = list(workload)
        self._remaining_arrivals = len(workload)
        self._next_rollout_id = 0
        self._events_processed = 0
        self._in_pass = False
        self._pass_requested = False
        self._new_events: list[Event] = []
        # conservation counters: every launch ends in exactly one bucket
        self.rollouts_launched = 0
        self.rollouts_backpropagated = 0
        self.rollouts_preempted = 0
        self.tokens_generated = 0

        t = 0.0
        for i in range(len(workload)):
            if config.arrival_process == "poisson":
                t += rng.exponential(arrival_rate, seed, _TAG_ARRIVAL, i)
            else:
                t = i / arrival_rate
            self._schedule(t, EventKind.ARRIVAL, job_id=i)
        self._schedule(config.tick_interval, EventKind.SCHEDULER_TICK)

    # -- event plumbing ----------------------------------------------------

    def _schedule(self, time: float, kind: EventKind, job_id=None, rollout_id=None) -> Event:
        if time < self.clock:
            raise SimulationError(f"cannot schedule {kind} at {time} before clock {self.clock}")
        event = Event(time, self._seq, kind, job_id, rollout_id)
        self._seq += 1
        heapq.heappush(self._heap, (time, event.sequence, event))
        self._new_events.append(event)
        return event

    def step_event(self, event: Event) -> list[Event]:
        """Advance the clock and apply one event; returns newly scheduled events."""
        if event.time < self.clock:
            raise SimulationError(f"event time {event.time} precedes clock {self.clock}")
        self.clock = event.time
        self.sched.now = event.time
        self._new_events = []
        if event.kind is EventKind.ARRIVAL:
            self._on_arrival(event.job_id)
        elif event.kind is EventKind.STEP_COMPLETE:
            self._on_step_complete(event.job_id, event.rollout_id)
        elif event.kind is EventKind.SCHEDULER_TICK:
            self._on_tick()
        else:
            self._on_job_finished(event.job_id)
        self._check_capacity()
        return list(self._new_events)

    def run(self) -> list[RequestRecord]:
        while self._heap:
            _, _, event = heapq.heappop(self._heap)
            self.step_event(event)
            self._events_processed += 1
            if self._events_processed > self.config.event_cap:
                raise SimulationError(
                    f"event cap {self.config.event_cap} exceeded; configuration does not terminate"
                )
            if self.trace is not None:
                self.trace.append(
                    {
                        "time": round(event.time, 9),
                        "seq": event.sequence,
                        "kind": event.kind.value,
                        "job": event.job_id,
                        "rollout": event.rollout_id,
                    }
                )
            if self.listener is not None:
                self.listener(self, event)
        if any(r is None for r in self.records):
            raise SimulationError("run drained with unfinished requests")
        if self.rollouts_launched != self.rollouts_backpropagated + self.rollouts_preempted:
            raise SimulationError("rollout conservation violated")
        return list(self.records)

    def _check_capacity(self) -> None:
        if self.sched.total_active() > self.config.scheduler.max_concurrency:
            raise SimulationError("active rollouts exceed the concurrency budget")

    # -- event handlers ----------------------------------------------------

    def _on_arrival(self, index: int) -> None:
        problem = self._workload[index]
        tree = SearchTree(self.config.rollout_budget, root_ref=problem.problem_id)
        job = Job(job_id=index, arrival_time=self.clock, tree=tree)
        run = _JobRun(index=index, problem=problem, job=job)
        if self.config.mode == "beam":
            run.beam = _BeamRun(active=[beam_mod.Beam(index_path=(), rewards=(), score=0.0)])
        self.jobs[index] = run
        self.sched.pending_queue.append(job)
        self._remaining_arrivals -= 1
        self._scheduler_pass()

    def _on_tick(self) -> None:
        if self._work_remains():
            self._scheduler_pass()
            self._schedule(self.clock + self.config.tick_interval, EventKind.SCHEDULER_TICK)

    def _work_remains(self) -> bool:
        return bool(self._remaining_arrivals or self.sched.pending_queue or self.sched.run_queue)

    def _on_job_finished(self, job_id: int) -> None:
        run = self.jobs[job_id]
        if self.records[run.index] is not None:
            return
        self.records[run.index] = self._build_record(run)
        self._scheduler_pass()

    # -- scheduler pass ----------------------------------------------------

    def _scheduler_pass(self) -> None:
        if self._in_pass:
            self._pass_requested = True
            return
        self._in_pass = True
        try:
            self._pass_requested = True
            while self._pass_requested:
                self._pass_requested = False
                admitted = admit_jobs(self.sched, self.config.scheduler)
                if self.config.mode == "beam":
                    for job in admitted:
                        self._beam_issue_step(self.jobs[job.job_id])
                    continue
                running = [j for j in self.sched.run_queue if j.state is JobState.RUNNING]
                if not running:
                    continue
                targets = compute_targets(
                    self.sched, self.config.scheduler, self.config.scoring.positive_exit_threshold
                )
                actions = reconcile(self.sched, targets)
                if self.trace is not None:
                    for job in running:
                        self.trace.append(
                            {
                                "time": round(self.clock, 9),
                                "kind": "allocation",
                                "job": job.job_id,
                                "score": round(
                                    parallelism_score(
                                        job,
                                        self.sched.now,
                                        self.config.scoring.positive_exit_threshold,
                                        self.config.scheduler,
                                    ),
                                    9,
                                ),
                                "target": targets[job.job_id],
                                "active": len(job.active_rollouts),
                            }
                        )
                    for action in actions:
                        if isinstance(action, PreemptAction):
                            entry = {"action": "preempt", "rollout": action.rollout_id}
                        else:
                            entry = {"action": "launch", "count": action.count}
                        self.trace.append(
                            {"time": round(self.clock, 9), "kind": "action", "job": action.job_id, **entry}
                        )
                for action in actions:
                    if isinstance(action, PreemptAction):
                        self._apply_preempt(action)
                for action in actions:
                    if isinstance(action, LaunchAction):
                        self._apply_launch(action)
        finally:
            self._in_pass = False

    def _apply_preempt(self, action: PreemptAction) -> None:
        run = self.jobs[action.job_id]
        rollout = run.rollouts[action.rollout_id]
        if rollout.cancelled:
            return
        rollout.cancelled = True
        cancel_inflight(run.job.tree, rollout.path)
        if rollout.pending is not None:
            self.inflight_requests -= rollout.pending.slots
            rollout.pending = None
        run.job.active_rollouts = [
            r for r in run.job.active_rollouts if r.rollout_id != action.rollout_id
        ]
        run.preempted += 1
        self.rollouts_preempted += 1

    def _apply_launch(self, action: LaunchAction) -> None:
        run = self.jobs[action.job_id]
        for _ in range(action.count):
            job = run.job
            if job.state is not JobState.RUNNING:
                break
            budget_left = job.tree.rollout_budget - job.tree.completed_rollouts
            if len(job.active_rollouts) >= budget_left:
                break
            try:
                leaf = select_leaf(job.tree, self.config.selection)
            except NoExpandableLeafError:
                if not job.active_rollouts:
                    decision = decide_exit(
                        job.tree,
                        self.config.scoring,
                        self.config.positive_exit,
                        self.config.negative_exit,
                        tree_exhausted=True,
                    )
                    self._finish_job(run, decision)
                break
            rollout = _Rollout(
                rollout_id=self._next_rollout_id,
                job_id=job.job_id,
                path=job.tree.path_to_root(leaf),
                index_path=[
                    job.tree.nodes[n].step_ref for n in job.tree.path_to_root(leaf)[1:]
                ],
            )
            self._next_rollout_id += 1
            run.rollouts[rollout.rollout_id] = rollout
            job.active_rollouts.append(
                InflightRollout(rollout.rollout_id, self._prefix_score(run, rollout))
            )
            self.rollouts_launched += 1
            self._advance(run, rollout)

    # -- rollout state machine ----------------------------------------------

    def _prefix_score(self, run: _JobRun, rollout: _Rollout) -> float:
        rewards = run.job.tree.rewards_along(rollout.path[1:])
        if not rewards:
            return 1.0  # nothing invested yet: neutral upper bound
        return aggregate_trajectory(rewards, self.config.scoring.scheme)

    def _advance(self, run: _JobRun, rollout: _Rollout) -> None:
        """Walk existing structure until a generation is needed or the
        trajectory completes; mirrors the greedy simulation loop."""
        tree = run.job.tree
        while True:
            node = tree.nodes[rollout.path[-1]]
            if node.is_terminal:
                self._complete_rollout(run, rollout)
                return
            if not node.children:
                if node.depth >= self.config.depth_cap:
                    node.is_terminal = True
                    node.force_terminated = True
                    self._complete_rollout(run, rollout)
                    return
                self._issue_step(run, rollout)
                return
            child = greedy_child(tree, node.node_id)
            tree.nodes[child].inflight_count += 1
            rollout.path.append(child)
            rollout.index_path.append(tree.nodes[child].step_ref)
            self._refresh_prefix(run, rollout)

    def _refresh_prefix(self, run: _JobRun, rollout: _Rollout) -> None:
        score = self._prefix_score(run, rollout)
        for entry in run.job.active_rollouts:
            if entry.rollout_id == rollout.rollout_id:
                entry.prefix_score = score
                break

    def _issue_step(self, run: _JobRun, rollout: _Rollout) -> None:
        width = min(self.config.expand_width, run.problem.branching)
        candidates = generate_steps(run.problem, tuple(rollout.index_path), width)
        tokens = sum(c.token_count for c in candidates)
        run.tokens += tokens
        self.tokens_generated += tokens
        self.inflight_requests += len(candidates)
        duration = (
            max(
                service_time(c.token_count, self.config.cost, self.inflight_requests)
                for c in candidates
            )
            + self.config.cost.reward_latency
        )
        rollout.pending = _PendingStep(rollout.path[-1], list(candidates), len(candidates))
        self._schedule(
            self.clock + duration,
            EventKind.STEP_COMPLETE,
            job_id=run.index,
            rollout_id=rollout.rollout_id,
        )

    def _on_step_complete(self, job_id: int, rollout_id: int) -> None:
        run = self.jobs[job_id]
        if self.config.mode == "beam":
            self._beam_step_complete(run)
            return
        rollout = run.rollouts[rollout_id]
        if rollout.cancelled:
            return  # preempted while the step was in flight; slots already freed
        pending = rollout.pending
        rollout.pending = None
        self.inflight_requests -= pending.slots
        tree = run.job.tree
        if not tree.nodes[pending.node_id].children:
            expand(tree, pending.node_id, pending.candidates)
        # else: a concurrent rollout expanded this node first; reuse its children
        self._advance(run, rollout)

    def _complete_rollout(self, run: _JobRun, rollout: _Rollout) -> None:
        job = run.job
        job.active_rollouts = [
            r for r in job.active_rollouts if r.rollout_id != rollout.rollout_id
        ]
        finish_rollout(job.tree, rollout.path[-1], self.config.scoring)
        self.rollouts_backpropagated += 1
        decision = decide_exit(
            job.tree,
            self.config.scoring,
            self.config.positive_exit,
            self.config.negative_exit,
        )
        preempts = on_rollout_complete(self.sched, job, decision)
        for action in preempts:
            self._apply_preempt(action)
        if decision.kind is not ExitKind.CONTINUE:
            self._emit_job_finished(run, decision)
        else:
            self._scheduler_pass()

    def _finish_job(self, run: _JobRun, decision) -> None:
        preempts = on_rollout_complete(self.sched, run.job, decision)
        for action in preempts:
            self._apply_preempt(action)
        self._emit_job_finished(run, decision)

    def _emit_job_finished(self, run: _JobRun, decision) -> None:
        if run.finished_event_sent:
            return
        run.finished_event_sent = True
        self._schedule(self.clock, EventKind.JOB_FINISHED, job_id=run.index)

    # -- beam mode -----------------------------------------------------------

    def _beam_issue_step(self, run: _JobRun) -> None:
        state = run.beam
        if not state.active or state.steps >= self.config.beam.max_depth:
            self._beam_finalize(run)
            return
        candidates = beam_mod.expand_beams(
            state.active, self.config.beam, self.config.scoring, run.problem
        )
        tokens = sum(c.token_count for c in candidates)
        run.tokens += tokens
        self.tokens_generated += tokens
        state.pending = candidates
        state.pending_slots = len(candidates)
        self.inflight_requests += state.pending_slots
        duration = (
            max(
                service_time(c.token_count, self.config.cost, self.inflight_requests)
                for c in candidates
            )
            + self.config.cost.reward_latency
        )
        self._schedule(self.clock + duration, EventKind.STEP_COMPLETE, job_id=run.index)

    def _beam_step_complete(self, run: _JobRun) -> None:
        state = run.beam
        self.inflight_requests -= state.pending_slots
        candidates = state.pending
        state.pending = None
        state.pending_slots = 0
        survivors, finished = beam_mod.prune_candidates(candidates, self.config.beam.beam_width)
        state.active = survivors
        state.finished.extend(finished)
        state.steps += 1
        if self.config.beam.positive_exit_enabled:
            best = beam_mod.best_finished(state.finished)
            if best is not None and best.score >= self.config.scoring.positive_exit_threshold:
                self._beam_finalize(run)
                return
        self._beam_issue_step(run)

    def _beam_finalize(self, run: _JobRun) -> None:
        job = run.job
        job.state = JobState.FINISHED
        best = beam_mod.best_finished(run.beam.finished)
        if best is None and run.beam.active:
            best = beam_mod.best_finished(run.beam.active)
        job.best_score = best.score if best else 0.0
        job.finished_kind = None  # beam runs carry their own record label
        if job in self.sched.run_queue:
            self.sched.run_queue.remove(job)
        self._emit_job_finished(run, None)

    # -- records -------------------------------------------------------------

    def _build_record(self, run: _JobRun) -> RequestRecord:
        job = run.job
        problem = run.problem
        if self.config.mode == "beam":
            best = beam_mod.best_finished(run.beam.finished)
            if best is None and run.beam.active:
                best = beam_mod.best_finished(run.beam.active)
            best_path = best.index_path if best else ()
            best_score = best.score if best else 0.0
            kind = RecordExitKind.BEAM_FINISHED
            rollouts = run.beam.steps
        else:
            tree = job.tree
            best = tree.best_trajectory
            best_path = trajectory_index_path(tree, best) if best else ()
            best_score = best.aggregate_score if best else 0.0
            kind = _RECORD_KIND[job.finished_kind]
            rollouts = tree.completed_rollouts
        solved = problem.golden_path is not None and best_path == problem.golden_path
        return RequestRecord(
            request_id=problem.problem_id,
            arrival_time=job.arrival_time,
            completion_time=self.clock,
            rollouts_completed=rollouts,
            rollouts_preempted=run.preempted,
            tokens_generated=run.tokens,
            exit_kind=kind,
            best_score=best_score,
            solved=solved,
            best_path=tuple(best_path),
        )


_RECORD_KIND = {
    ExitKind.POSITIVE_EXIT: RecordExitKind.POSITIVE,
    ExitKind.NEGATIVE_EXIT: RecordExitKind.NEGATIVE,
    ExitKind.BUDGET_EXHAUSTED: RecordExitKind.BUDGET_EXHAUSTED,
}


def run(
    workload: Sequence[SyntheticProblemSpec],
    arrival_rate: float,
    config: SimulationConfig,
    seed: int,
    listener: Optional[Callable[[Engine, Event], None]] = None,
    trace: Optional[list] = None,
) -> list[RequestRecord]:
    """Simulate the workload end to end; identical inputs give identical output."""
    return Engine(workload, arrival_rate, config, seed, listener, trace).run()

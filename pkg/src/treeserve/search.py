"""Standalone serial tree search for a single reasoning request.

Runs rollouts one at a time against a synthetic problem until an exit
decision ends the search. This is both the simplest way to use the library
and the reference behavior for the simulator: a simulated run with a
concurrency budget of one and boosting disabled reproduces these trajectories
exactly, because all backend draws are keyed on the problem seed and path
rather than on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .backend import ProblemBackend, SyntheticProblemSpec
from .scoring import ExitKind, ScoringConfig, aggregate_trajectory, decide_exit
from .tree import (
    DEFAULT_DEPTH_CAP,
    NoExpandableLeafError,
    SearchTree,
    SelectionParams,
    Trajectory,
    backpropagate,
    select_leaf,
    simulate_to_terminal,
)

__all__ = ["SearchOutcome", "run_tree_search", "trajectory_index_path"]


@dataclass(frozen=True)
class SearchOutcome:
    """Result of one complete tree search."""

    problem_id: str
    exit_kind: ExitKind
    best_score: float
    best_path: tuple[int, ...]
    rollouts_completed: int
    tokens_generated: int
    solved: bool


class _CountingBackend:
    """Wraps a backend to tally every generated candidate's tokens."""

    def __init__(self, inner: ProblemBackend) -> None:
        self.inner = inner
        self.tokens = 0

    def candidates_for(self, tree, node_id):
        candidates = self.inner.candidates_for(tree, node_id)
        self.tokens += sum(c.token_count for c in candidates)
        return candidates


def trajectory_index_path(tree: SearchTree, trajectory: Trajectory) -> tuple[int, ...]:
    """Child-index path of a trajectory, comparable against a golden path."""
    return tuple(tree.nodes[n].step_ref for n in trajectory.node_path)


def finish_rollout(
    tree: SearchTree, terminal_id: int, scoring: ScoringConfig
) -> Trajectory:
    """Build and backpropagate the trajectory ending at ``terminal_id``."""
    path = tree.path_to_root(terminal_id)
    rewards = tree.rewards_along(path[1:])
    trajectory = Trajectory(
        node_path=tuple(path[1:]),
        aggregate_score=aggregate_trajectory(rewards, scoring.scheme),
        rollout_index=tree.completed_rollouts,
        forced=tree.nodes[terminal_id].force_terminated,
    )
    backpropagate(tree, trajectory)
    return trajectory


def run_tree_search(
    problem: SyntheticProblemSpec,
    scoring: Optional[ScoringConfig] = None,
    selection: Optional[SelectionParams] = None,
    rollout_budget: int = 32,
    depth_cap: int = DEFAULT_DEPTH_CAP,
    expand_width: int = 4,
    positive_exit: bool = True,
    negative_exit: bool = True,
) -> SearchOutcome:
    """Serial node-reusing search: select, expand, simulate, backpropagate,
    then consult the exit policy; repeat until the search ends."""
    scoring = scoring or ScoringConfig()
    selection = selection or SelectionParams()
    tree = SearchTree(rollout_budget)
    backend = _CountingBackend(ProblemBackend(problem, expand_width))
    while True:
        try:
            leaf = select_leaf(tree, selection)
        except NoExpandableLeafError:
            decision = decide_exit(
                tree, scoring, positive_exit, negative_exit, tree_exhausted=True
            )
            break
        terminal = simulate_to_terminal(tree, leaf, backend, depth_cap)
        finish_rollout(tree, terminal, scoring)
        decision = decide_exit(tree, scoring, positive_exit, negative_exit)
        if decision.kind is not ExitKind.CONTINUE:
            break
    best = tree.best_trajectory
    best_path = trajectory_index_path(tree, best) if best else ()
    solved = problem.golden_path is not None and best_path == problem.golden_path
    return SearchOutcome(
        problem_id=problem.problem_id,
        exit_kind=decision.kind,
        best_score=best.aggregate_score if best else 0.0,
        best_path=best_path,
        rollouts_completed=tree.completed_rollouts,
        tokens_generated=backend.tokens,
        solved=solved,
    )

"""Node-reusing Monte Carlo tree search over reasoning steps.

The tree grows in four phases per rollout: select a leaf with the WU-PUCT
rule, expand it with backend-generated step candidates, simulate greedily to
a terminal step, and backpropagate the trajectory score. Nodes created during
simulation stay in the tree and are selectable by later rollouts.

Logical parallelism is carried by per-node ``inflight_count`` (the number of
launched-but-unfinished rollouts whose path crosses the node). The counters
feed the selection rule so concurrent rollouts spread over the tree, and they
are released either by backpropagation or by :func:`cancel_inflight` when a
rollout is preempted. A tree is only ever mutated by one execution context at
a time; the counters model concurrency, they do not synchronize it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Protocol, Sequence

__all__ = [
    "AccountingError",
    "NoExpandableLeafError",
    "SearchTree",
    "SelectionParams",
    "StepNode",
    "Trajectory",
    "TreeStructureError",
    "wu_puct_score",
    "select_leaf",
    "expand",
    "simulate_to_terminal",
    "backpropagate",
    "cancel_inflight",
]

DEFAULT_DEPTH_CAP = 16


class TreeStructureError(Exception):
    """Raised when an operation would violate the tree shape."""


class NoExpandableLeafError(Exception):
    """Raised when selection finds no non-terminal leaf; the tree is exhausted."""


class AccountingError(Exception):
    """Raised when visit or in-flight bookkeeping would go inconsistent."""


@dataclass
class StepNode:
    """One reasoning step; holds the statistics driving WU-PUCT selection."""

    node_id: int
    parent_id: Optional[int]
    step_ref: object
    prm_reward: float
    prior: float
    depth: int
    is_terminal: bool = False
    force_terminated: bool = False
    visit_count: int = 0
    inflight_count: int = 0
    value_sum: float = 0.0
    children: list[int] = field(default_factory=list)

    def mean_value(self, default: float = 0.5) -> float:
        if self.visit_count == 0:
            return default
        return self.value_sum / self.visit_count


@dataclass(frozen=True)
class Trajectory:
    """A completed root-to-terminal path.

    ``node_path`` starts at a child of the root and ends at the terminal
    node. ``forced`` marks trajectories cut off by the depth cap instead of a
    terminal step.
    """

    node_path: tuple[int, ...]
    aggregate_score: float
    rollout_index: int
    forced: bool = False


@dataclass(frozen=True)
class SelectionParams:
    """Exploration constant for the selection rule."""

    c_puct: float = 1.0

    def __post_init__(self) -> None:
        if self.c_puct <= 0.0:
            raise ValueError(f"c_puct must be positive, got {self.c_puct}")


class StepBackend(Protocol):
    """Step-generation interface consumed by simulation."""

    def candidates_for(self, tree: "SearchTree", node_id: int) -> Sequence["StepCandidateLike"]:
        ...


class StepCandidateLike(Protocol):
    step_ref: object
    prior: float
    prm_reward: float
    is_terminal: bool


class SearchTree:
    """Search tree for one reasoning request."""

    def __init__(self, rollout_budget: int, root_ref: object = None) -> None:
        if rollout_budget < 1:
            raise ValueError("rollout_budget must be positive")
        self.rollout_budget = rollout_budget
        self.nodes: dict[int, StepNode] = {}
        self._next_id = 0
        self.root_id = self._new_node(None, root_ref, 1.0, 1.0, depth=0, terminal=False)
        self.completed_rollouts = 0
        self.best_trajectory: Optional[Trajectory] = None

    def _new_node(self, parent_id, step_ref, reward, prior, depth, terminal) -> int:
        node_id = self._next_id
        self._next_id += 1
        self.nodes[node_id] = StepNode(
            node_id=node_id,
            parent_id=parent_id,
            step_ref=step_ref,
            prm_reward=reward,
            prior=prior,
            depth=depth,
            is_terminal=terminal,
        )
        return node_id

    def node(self, node_id: int) -> StepNode:
        return self.nodes[node_id]

    @property
    def root(self) -> StepNode:
        return self.nodes[self.root_id]

    def is_leaf(self, node_id: int) -> bool:
        return not self.nodes[node_id].children

    def iter_leaves(self) -> Iterator[StepNode]:
        for node in self.nodes.values():
            if not node.children:
                yield node

    def path_to_root(self, node_id: int) -> list[int]:
        """Node ids from root down to ``node_id`` inclusive."""
        path = []
        cursor: Optional[int] = node_id
        while cursor is not None:
            path.append(cursor)
            cursor = self.nodes[cursor].parent_id
        path.reverse()
        return path

    def rewards_along(self, node_path: Sequence[int]) -> list[float]:
        return [self.nodes[n].prm_reward for n in node_path]

    def has_expandable_leaf(self) -> bool:
        return self._expandable(self.root_id)

    def _expandable(self, node_id: int) -> bool:
        node = self.nodes[node_id]
        if node.is_terminal:
            return False
        if not node.children:
            return True
        return any(self._expandable(c) for c in node.children)

    def to_dict(self) -> dict:
        """Debug/oracle dump: one record per node."""
        return {
            "root": self.root_id,
            "completed_rollouts": self.completed_rollouts,
            "rollout_budget": self.rollout_budget,
            "nodes": [
                {
                    "id": n.node_id,
                    "parent": n.parent_id,
                    "reward": n.prm_reward,
                    "prior": n.prior,
                    "N": n.visit_count,
                    "O": n.inflight_count,
                    "W": n.value_sum,
                    "terminal": n.is_terminal,
                    "depth": n.depth,
                }
                for n in self.nodes.values()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def wu_puct_score(
    q_value: float,
    prior: float,
    parent_visits: int,
    parent_inflight: int,
    child_visits: int,
    child_inflight: int,
    params: SelectionParams,
) -> float:
    """Selection score with in-flight rollouts folded into the visit counts.

    Both visit counts are widened by the matching in-flight counts, so a
    child already being explored by another rollout scores lower. With all
    in-flight counts zero this is exactly the plain PUCT score.
    """
    if parent_visits < 0 or parent_inflight < 0 or child_visits < 0 or child_inflight < 0:
        raise ValueError("counts must be non-negative")
    if not 0.0 <= prior <= 1.0:
        raise ValueError(f"prior out of range: {prior}")
    if not 0.0 <= q_value <= 1.0:
        raise ValueError(f"q_value out of range: {q_value}")
    n_parent = parent_visits + parent_inflight
    n_child = child_visits + child_inflight
    return q_value + params.c_puct * prior * math.sqrt(n_parent) / (1 + n_child)


def _child_q(tree: SearchTree, parent: StepNode, child: StepNode) -> float:
    # Unvisited children inherit the parent's mean value, 0.5 at a fresh parent.
    if child.visit_count == 0:
        return parent.mean_value(default=0.5)
    return child.value_sum / child.visit_count


def _best_child(tree: SearchTree, parent: StepNode, params: SelectionParams) -> Optional[int]:
    best_id = None
    best_score = -math.inf
    for child_id in parent.children:
        if not tree._expandable(child_id):
            continue
        child = tree.nodes[child_id]
        score = wu_puct_score(
            _child_q(tree, parent, child),
            child.prior,
            parent.visit_count,
            parent.inflight_count,
            child.visit_count,
            child.inflight_count,
            params,
        )
        if score > best_score:  # ties keep the earliest child
            best_score = score
            best_id = child_id
    return best_id


def select_leaf(tree: SearchTree, params: SelectionParams) -> int:
    """Descend by WU-PUCT to a non-terminal leaf, registering the rollout.

    Every node on the descent path (root included) gets its in-flight count
    incremented; the registration is released by :func:`backpropagate` or
    :func:`cancel_inflight`. Children whose subtrees hold no expandable leaf
    are skipped; if none remains the tree is exhausted.
    """
    node = tree.root
    if not tree._expandable(node.node_id):
        raise NoExpandableLeafError("all leaves are terminal")
    path = [node.node_id]
    while node.children:
        child_id = _best_child(tree, node, params)
        if child_id is None:
            raise NoExpandableLeafError("all leaves are terminal")
        node = tree.nodes[child_id]
        path.append(child_id)
    for node_id in path:
        tree.nodes[node_id].inflight_count += 1
    return node.node_id


def expand(tree: SearchTree, leaf: int, candidates: Sequence) -> list[int]:
    """Append one child per candidate under ``leaf``; returns ids in order."""
    node = tree.nodes[leaf]
    if node.is_terminal:
        raise TreeStructureError(f"cannot expand terminal node {leaf}")
    if node.children:
        raise TreeStructureError(f"node {leaf} is not a leaf")
    if not candidates:
        raise ValueError("candidates must be non-empty")
    new_ids = []
    for cand in candidates:
        child_id = tree._new_node(
            leaf, cand.step_ref, cand.prm_reward, cand.prior,
            depth=node.depth + 1, terminal=cand.is_terminal,
        )
        node.children.append(child_id)
        new_ids.append(child_id)
    return new_ids


def greedy_child(tree: SearchTree, node_id: int) -> int:
    """Child with the highest step reward; ties keep the earliest child."""
    children = tree.nodes[node_id].children
    if not children:
        raise TreeStructureError(f"node {node_id} has no children")
    best = children[0]
    best_reward = tree.nodes[best].prm_reward
    for child_id in children[1:]:
        reward = tree.nodes[child_id].prm_reward
        if reward > best_reward:
            best = child_id
            best_reward = reward
    return best


def simulate_to_terminal(
    tree: SearchTree,
    start: int,
    backend: StepBackend,
    depth_cap: int = DEFAULT_DEPTH_CAP,
    register_inflight: bool = True,
) -> int:
    """Greedy descent from ``start``: expand, take the best-reward child,
    repeat until a terminal child or the depth cap.

    All generated siblings stay in the tree. A node stopped by the depth cap
    is marked terminal so later rollouts do not walk past the cap; the caller
    can tell by comparing the returned node's depth to the cap.
    """
    node_id = start
    node = tree.nodes[node_id]
    while not node.is_terminal:
        if not node.children:
            if node.depth >= depth_cap:
                node.is_terminal = True
                node.force_terminated = True
                break
            expand(tree, node_id, backend.candidates_for(tree, node_id))
        node_id = greedy_child(tree, node_id)
        node = tree.nodes[node_id]
        if register_inflight:
            node.inflight_count += 1
    return node_id


def backpropagate(tree: SearchTree, trajectory: Trajectory) -> None:
    """Fold a completed trajectory into the statistics along its path.

    The root and every node on the path gain one visit and the trajectory
    score, and release one in-flight registration. The best trajectory is
    replaced only on strict improvement, so the first of equal scores wins.
    """
    if tree.completed_rollouts >= tree.rollout_budget:
        raise AccountingError("rollout budget already exhausted")
    for node_id in (tree.root_id, *trajectory.node_path):
        node = tree.nodes[node_id]
        if node.inflight_count < 1:
            raise AccountingError(f"inflight underflow at node {node_id}")
        node.inflight_count -= 1
        node.visit_count += 1
        node.value_sum += trajectory.aggregate_score
    tree.completed_rollouts += 1
    best = tree.best_trajectory
    if best is None or trajectory.aggregate_score > best.aggregate_score:
        tree.best_trajectory = trajectory


def cancel_inflight(tree: SearchTree, rollout_path: Sequence[int]) -> None:
    """Release the in-flight registrations of a preempted rollout."""
    for node_id in rollout_path:
        if tree.nodes[node_id].inflight_count < 1:
            raise AccountingError(f"inflight underflow at node {node_id}")
    for node_id in rollout_path:
        tree.nodes[node_id].inflight_count -= 1

"""Trajectory scoring and early-exit decisions.

A trajectory's score aggregates its per-step verifier rewards. Under the
minimum and cumulative-product schemes the score of any completion through a
leaf can never exceed the leaf's own reward, so leaves scoring below the
acceptance threshold are futile: no completion through them can be accepted.
When every relevant leaf is futile the whole search can be abandoned early
(negative exit). The selective variant additionally ignores subtrees whose
first step already scored poorly, which fires the exit earlier while leaving
the search itself untouched.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from .tree import SearchTree

__all__ = [
    "AggregationScheme",
    "ExitDecision",
    "ExitKind",
    "FutilityBound",
    "LeafClass",
    "ScoringConfig",
    "UnsupportedSchemeError",
    "aggregate_trajectory",
    "classify_leaf",
    "check_negative_exit",
    "check_positive_exit",
    "decide_exit",
]


class UnsupportedSchemeError(Exception):
    """Raised when a scheme without the leaf upper bound is used for pruning."""


class AggregationScheme(enum.Enum):
    MINIMUM = "minimum"
    CUMULATIVE_PRODUCT = "cumulative_product"
    CUMULATIVE_SUM = "cumulative_sum"
    AVERAGE = "average"


# Only these two bound every completion's score by the leaf score.
_PRUNABLE_SCHEMES = (AggregationScheme.MINIMUM, AggregationScheme.CUMULATIVE_PRODUCT)


class FutilityBound(enum.Enum):
    LEAF_REWARD = "leaf_reward"
    PREFIX_AGGREGATE = "prefix_aggregate"


class LeafClass(enum.Enum):
    FUTILE = "futile"
    VIABLE = "viable"


class ExitKind(enum.Enum):
    CONTINUE = "continue"
    POSITIVE_EXIT = "positive"
    NEGATIVE_EXIT = "negative"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class ExitDecision:
    kind: ExitKind
    best_score: float


@dataclass(frozen=True)
class ScoringConfig:
    """Aggregation scheme plus the thresholds governing early exits.

    ``accept_threshold`` separates futile from viable leaves;
    ``positive_exit_threshold`` is the score at which a found trajectory ends
    the search; ``first_step_threshold`` drives the selective futility check.
    The acceptance and positive-exit thresholds are independent knobs.
    """

    scheme: AggregationScheme = AggregationScheme.CUMULATIVE_PRODUCT
    accept_threshold: float = 0.3
    positive_exit_threshold: float = 0.5
    first_step_threshold: float = 0.1
    strict_negative_exit: bool = False
    futility_bound: FutilityBound = FutilityBound.LEAF_REWARD

    def __post_init__(self) -> None:
        if not 0.0 < self.accept_threshold < 1.0:
            raise ValueError(f"accept_threshold out of (0,1): {self.accept_threshold}")
        if not 0.0 < self.positive_exit_threshold < 1.0:
            raise ValueError(
                f"positive_exit_threshold out of (0,1): {self.positive_exit_threshold}"
            )
        if not 0.0 <= self.first_step_threshold < 1.0:
            raise ValueError(
                f"first_step_threshold out of [0,1): {self.first_step_threshold}"
            )


def aggregate_trajectory(rewards: Sequence[float], scheme: AggregationScheme) -> float:
    """Combine per-step rewards into one trajectory score."""
    if not rewards:
        raise ValueError("rewards must be non-empty")
    if scheme is AggregationScheme.MINIMUM:
        return min(rewards)
    if scheme is AggregationScheme.CUMULATIVE_PRODUCT:
        return math.prod(rewards)
    if scheme is AggregationScheme.CUMULATIVE_SUM:
        return sum(rewards)
    return sum(rewards) / len(rewards)


def classify_leaf(
    leaf_reward: float, prefix_aggregate: float, config: ScoringConfig
) -> LeafClass:
    """Futile iff no completion through the leaf can reach the acceptance
    threshold; sound only for the minimum and product schemes."""
    if config.scheme not in _PRUNABLE_SCHEMES:
        raise UnsupportedSchemeError(
            f"negative exit is unsound under {config.scheme.value} aggregation"
        )
    if config.futility_bound is FutilityBound.LEAF_REWARD:
        bound = leaf_reward
    else:
        bound = min(leaf_reward, prefix_aggregate)
    if bound < config.accept_threshold:
        return LeafClass.FUTILE
    return LeafClass.VIABLE


def _expandable_leaves(tree: SearchTree):
    return [n for n in tree.iter_leaves() if not n.is_terminal]


def _depth_one_ancestor(tree: SearchTree, node_id: int):
    node = tree.nodes[node_id]
    while node.depth > 1:
        node = tree.nodes[node.parent_id]
    return node


def _leaf_prefix_aggregate(tree: SearchTree, node_id: int, scheme: AggregationScheme) -> float:
    path = tree.path_to_root(node_id)[1:]  # drop the root, it carries no reward
    return aggregate_trajectory(tree.rewards_along(path), scheme)


def check_negative_exit(tree: SearchTree, config: ScoringConfig) -> bool:
    """True when no check-relevant leaf can still yield an accepted completion.

    Strict mode requires every expandable leaf to be futile. Selective mode
    first drops leaves whose first reasoning step scored below
    ``first_step_threshold``; an emptied or all-futile remainder fires the
    exit. A tree that has not been expanded yet never fires.
    """
    if not tree.root.children:
        return False
    leaves = _expandable_leaves(tree)
    if not config.strict_negative_exit:
        leaves = [
            leaf
            for leaf in leaves
            if _depth_one_ancestor(tree, leaf.node_id).prm_reward
            >= config.first_step_threshold
        ]
    for leaf in leaves:
        prefix = _leaf_prefix_aggregate(tree, leaf.node_id, config.scheme)
        if classify_leaf(leaf.prm_reward, prefix, config) is LeafClass.VIABLE:
            return False
    return True


def check_positive_exit(tree: SearchTree, config: ScoringConfig) -> bool:
    """True once the best completed trajectory meets the exit threshold."""
    best = tree.best_trajectory
    return best is not None and best.aggregate_score >= config.positive_exit_threshold


def decide_exit(
    tree: SearchTree,
    config: ScoringConfig,
    positive_enabled: bool = True,
    negative_enabled: bool = True,
    tree_exhausted: bool = False,
) -> ExitDecision:
    """Combine the exit checks after a completed rollout.

    Precedence: a found solution beats an abandonment signal beats budget
    exhaustion. The enable flags let system presets switch either mechanism
    off without touching the thresholds. ``tree_exhausted`` marks a tree with
    no expandable leaf left; further rollouts are impossible, so the search
    ends even though the budget is not spent.
    """
    best = tree.best_trajectory
    best_score = best.aggregate_score if best is not None else 0.0
    if positive_enabled and check_positive_exit(tree, config):
        return ExitDecision(ExitKind.POSITIVE_EXIT, best_score)
    if negative_enabled and check_negative_exit(tree, config):
        return ExitDecision(ExitKind.NEGATIVE_EXIT, best_score)
    if tree_exhausted or tree.completed_rollouts >= tree.rollout_budget:
        return ExitDecision(ExitKind.BUDGET_EXHAUSTED, best_score)
    return ExitDecision(ExitKind.CONTINUE, best_score)

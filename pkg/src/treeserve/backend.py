"""Synthetic step-generation and reward backends plus a parametric cost model.

Problems are balanced trees addressed by child-index paths. Every quantity
(rewards, priors, token counts, structure) is a pure function of the problem
seed and the path, so results are identical no matter in which order the
search visits the tree. Three difficulty classes shape the latency profile of
a workload:

* ``EASY`` — a designated golden path stands out from the first step; greedy
  search finds it immediately and a quality-threshold exit fires early.
* ``HARD_SOLVABLE`` — all shallow steps look equally promising and the
  off-path branches only collapse at depth three or deeper, so search needs
  several rollouts to locate the golden branch.
* ``UNSOLVABLE`` — every step scores below the acceptance threshold, so no
  completion can ever be accepted and only a pruning exit saves work.

Golden step rewards are nudged upward when needed so the golden trajectory's
product always clears the profile's target aggregate; solvable problems stay
solvable by construction at any sampled depth.
"""

from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from . import rng

__all__ = [
    "CostModel",
    "Difficulty",
    "ProblemBackend",
    "RewardProfile",
    "StepCandidate",
    "SyntheticProblemSpec",
    "default_profile",
    "generate_steps",
    "golden_step_rewards",
    "make_workload",
    "service_time",
    "workload_from_json",
    "workload_to_json",
]

# key tags for the stateless rng; never reuse a tag for two purposes
_TAG_REWARD = 1
_TAG_PRIOR = 2
_TAG_TOKENS = 3
_TAG_DEPTH = 4
_TAG_GOLD = 5
_TAG_EXTEND = 6
_TAG_SHUFFLE = 7
_TAG_PROBLEM_SEED = 8

TOKENS_PER_STEP = (40, 120)


class Difficulty(enum.Enum):
    EASY = "easy"
    HARD_SOLVABLE = "hard_solvable"
    UNSOLVABLE = "unsolvable"


@dataclass(frozen=True)
class StepCandidate:
    """One generated reasoning step with its verifier reward."""

    step_ref: int
    token_count: int
    prior: float
    prm_reward: float
    is_terminal: bool


@dataclass(frozen=True)
class RewardProfile:
    """Per-step reward distribution parameters for one difficulty class.

    ``shared_range`` applies to every child at depths up to
    ``hidden_until_depth``, hiding the golden branch among its siblings.
    ``target_aggregate`` is the floor enforced on the golden trajectory's
    reward product.
    """

    golden_range: tuple[float, float]
    off_path_range: tuple[float, float]
    hidden_until_depth: int = 0
    shared_range: Optional[tuple[float, float]] = None
    target_aggregate: float = 0.55


def default_profile(difficulty: Difficulty, accept_threshold: float = 0.3) -> RewardProfile:
    if difficulty is Difficulty.EASY:
        return RewardProfile(golden_range=(0.90, 0.99), off_path_range=(0.30, 0.70))
    if difficulty is Difficulty.HARD_SOLVABLE:
        return RewardProfile(
            golden_range=(0.75, 0.90),
            off_path_range=(0.20, 0.60),
            hidden_until_depth=2,
            shared_range=(0.70, 0.95),
        )
    return RewardProfile(
        golden_range=(0.0, 0.0),
        off_path_range=(0.05, accept_threshold - 0.02),
        target_aggregate=0.0,
    )


@dataclass(frozen=True)
class SyntheticProblemSpec:
    """One synthetic reasoning request."""

    problem_id: str
    seed: int
    difficulty: Difficulty
    depth_range: tuple[int, int]
    branching: int
    reward_profile: RewardProfile
    golden_path: Optional[tuple[int, ...]] = None

    @property
    def base_depth(self) -> int:
        return _base_depth(self.seed, self.depth_range)

    @property
    def max_depth(self) -> int:
        # off-path branches may run one level past the golden depth
        return self.base_depth + 1


@functools.lru_cache(maxsize=None)
def _base_depth(seed: int, depth_range: tuple[int, int]) -> int:
    return rng.randint_in(depth_range[0], depth_range[1], seed, _TAG_DEPTH)


def _draw_golden_path(seed: int, base_depth: int, branching: int) -> tuple[int, ...]:
    return tuple(rng.randint_in(0, branching - 1, seed, _TAG_GOLD, d) for d in range(base_depth))


def make_problem(
    problem_id: str,
    seed: int,
    difficulty: Difficulty,
    depth_range: tuple[int, int],
    branching: int = 2,
    profile: Optional[RewardProfile] = None,
) -> SyntheticProblemSpec:
    if profile is None:
        profile = default_profile(difficulty)
    golden = None
    if difficulty is not Difficulty.UNSOLVABLE:
        base = rng.randint_in(depth_range[0], depth_range[1], seed, _TAG_DEPTH)
        golden = _draw_golden_path(seed, base, branching)
    return SyntheticProblemSpec(
        problem_id=problem_id,
        seed=seed,
        difficulty=difficulty,
        depth_range=depth_range,
        branching=branching,
        reward_profile=profile,
        golden_path=golden,
    )


def _is_golden_prefix(spec: SyntheticProblemSpec, path: tuple[int, ...]) -> bool:
    golden = spec.golden_path
    return golden is not None and len(path) <= len(golden) and golden[: len(path)] == path


def _branch_extends(spec: SyntheticProblemSpec, path: tuple[int, ...]) -> bool:
    # half of the non-golden branches run one step past the golden depth
    return rng.mix(spec.seed, _TAG_EXTEND, len(path), *path) % 2 == 0


def _is_terminal(spec: SyntheticProblemSpec, path: tuple[int, ...]) -> bool:
    depth = len(path)
    base = spec.base_depth
    if depth < base:
        return False
    if depth >= base + 1:
        return True
    if _is_golden_prefix(spec, path):
        return True
    return not _branch_extends(spec, path)


def _raw_golden_reward(spec: SyntheticProblemSpec, depth: int) -> float:
    profile = spec.reward_profile
    path = spec.golden_path[:depth]
    if profile.shared_range is not None and depth <= profile.hidden_until_depth:
        lo, hi = profile.shared_range
    else:
        lo, hi = profile.golden_range
    return rng.uniform_in(lo, hi, spec.seed, _TAG_REWARD, len(path), *path)


@functools.lru_cache(maxsize=65536)
def golden_step_rewards(spec: SyntheticProblemSpec) -> tuple[float, ...]:
    """Golden-path rewards after the target-aggregate lift."""
    if spec.golden_path is None:
        raise ValueError(f"{spec.problem_id} has no golden path")
    depth = len(spec.golden_path)
    rewards = [_raw_golden_reward(spec, d + 1) for d in range(depth)]
    target = spec.reward_profile.target_aggregate
    for _ in range(4):
        product = math.prod(rewards)
        if product >= target:
            break
        lift = (target / product) ** (1.0 / depth)
        rewards = [min(0.99, r * lift * 1.001) for r in rewards]
    return tuple(rewards)


def _child_reward(spec: SyntheticProblemSpec, child_path: tuple[int, ...]) -> float:
    profile = spec.reward_profile
    depth = len(child_path)
    if _is_golden_prefix(spec, child_path):
        return golden_step_rewards(spec)[depth - 1]
    if profile.shared_range is not None and depth <= profile.hidden_until_depth:
        lo, hi = profile.shared_range
    else:
        lo, hi = profile.off_path_range
    return rng.uniform_in(lo, hi, spec.seed, _TAG_REWARD, len(child_path), *child_path)


def generate_steps(
    problem: SyntheticProblemSpec,
    context_path: Sequence[int],
    width: int,
) -> list[StepCandidate]:
    """Sample ``width`` child steps below ``context_path``.

    Deterministic in (seed, path, width). When ``width`` exceeds the
    problem's branching the distinct children repeat, mirroring an LLM
    resampling the same few continuations; duplicates still carry their full
    token cost. Priors are normalized over the distinct children returned.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    path = tuple(context_path)
    if len(path) > problem.max_depth or (path and _is_terminal(problem, path)):
        raise ValueError(f"context {path} is terminal for {problem.problem_id}")
    distinct = min(width, problem.branching)
    raw_priors = [
        0.5 + rng.uniform(problem.seed, _TAG_PRIOR, len(path), *path, i)
        for i in range(distinct)
    ]
    total = sum(raw_priors)
    priors = [p / total for p in raw_priors]
    candidates = []
    for j in range(width):
        index = j % problem.branching
        child_path = path + (index,)
        candidates.append(
            StepCandidate(
                step_ref=index,
                token_count=rng.randint_in(
                    *TOKENS_PER_STEP, problem.seed, _TAG_TOKENS, len(child_path), *child_path
                ),
                prior=priors[index % distinct],
                prm_reward=_child_reward(problem, child_path),
                is_terminal=_is_terminal(problem, child_path),
            )
        )
    return candidates


class ProblemBackend:
    """Adapter giving tree operations path-addressed step generation."""

    def __init__(self, problem: SyntheticProblemSpec, expand_width: int = 4) -> None:
        self.problem = problem
        self.width = min(expand_width, problem.branching)

    def index_path(self, tree, node_id: int) -> tuple[int, ...]:
        nodes = tree.path_to_root(node_id)[1:]
        return tuple(tree.nodes[n].step_ref for n in nodes)

    def candidates_for(self, tree, node_id: int) -> list[StepCandidate]:
        return generate_steps(self.problem, self.index_path(tree, node_id), self.width)


@dataclass(frozen=True)
class CostModel:
    """Linear token-latency model with a soft concurrency knee.

    Past ``engine_capacity`` concurrent completion requests, service times
    stretch proportionally to the overload ratio.
    """

    per_token_latency: float = 0.002
    engine_capacity: int = 32
    reward_latency: float = 0.01

    def __post_init__(self) -> None:
        if self.per_token_latency <= 0 or self.engine_capacity < 1 or self.reward_latency < 0:
            raise ValueError("cost model parameters must be positive")


def service_time(token_count: int, model: CostModel, inflight_load: int) -> float:
    """Generation latency for one completion request under the given load."""
    if token_count < 1:
        raise ValueError("token_count must be >= 1")
    if inflight_load < 0:
        raise ValueError("inflight_load must be >= 0")
    contention = max(1.0, inflight_load / model.engine_capacity)
    return token_count * model.per_token_latency * contention


def make_workload(
    count: int,
    mixture: tuple[float, float, float],
    seed: int,
    branching: int = 2,
    depth_ranges: Optional[dict[Difficulty, tuple[int, int]]] = None,
    accept_threshold: float = 0.3,
) -> list[SyntheticProblemSpec]:
    """Build a deterministic mixed-difficulty workload.

    ``mixture`` gives the (easy, hard-solvable, unsolvable) fractions; counts
    are rounded with the remainder assigned to the largest fraction. The
    difficulty order is shuffled deterministically so arrival order does not
    correlate with difficulty.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if abs(sum(mixture) - 1.0) > 1e-9:
        raise ValueError(f"mixture fractions must sum to 1, got {sum(mixture)}")
    if depth_ranges is None:
        depth_ranges = {
            Difficulty.EASY: (2, 4),
            Difficulty.HARD_SOLVABLE: (3, 5),
            Difficulty.UNSOLVABLE: (2, 4),
        }
    order = [Difficulty.EASY, Difficulty.HARD_SOLVABLE, Difficulty.UNSOLVABLE]
    counts = [round(f * count) for f in mixture]
    counts[max(range(3), key=lambda i: mixture[i])] += count - sum(counts)
    difficulties: list[Difficulty] = []
    for difficulty, n in zip(order, counts):
        difficulties.extend([difficulty] * n)
    difficulties = rng.shuffled(difficulties, seed, _TAG_SHUFFLE)
    return [
        make_problem(
            problem_id=f"p{i:04d}",
            seed=rng.mix(seed, _TAG_PROBLEM_SEED, i),
            difficulty=difficulty,
            depth_range=depth_ranges[difficulty],
            branching=branching,
            profile=default_profile(difficulty, accept_threshold),
        )
        for i, difficulty in enumerate(difficulties)
    ]


def workload_to_json(specs: Sequence[SyntheticProblemSpec]) -> str:
    """Serialize a workload for replay."""
    records = []
    for spec in specs:
        records.append(
            {
                "problem_id": spec.problem_id,
                "seed": spec.seed,
                "difficulty": spec.difficulty.value,
                "depth_range": list(spec.depth_range),
                "branching": spec.branching,
                "reward_profile": {
                    "golden_range": list(spec.reward_profile.golden_range),
                    "off_path_range": list(spec.reward_profile.off_path_range),
                    "hidden_until_depth": spec.reward_profile.hidden_until_depth,
                    "shared_range": (
                        list(spec.reward_profile.shared_range)
                        if spec.reward_profile.shared_range
                        else None
                    ),
                    "target_aggregate": spec.reward_profile.target_aggregate,
                },
                "golden_path": list(spec.golden_path) if spec.golden_path else None,
            }
        )
    return json.dumps(records, indent=2, sort_keys=True)


def workload_from_json(text: str) -> list[SyntheticProblemSpec]:
    specs = []
    for rec in json.loads(text):
        prof = rec["reward_profile"]
        specs.append(
            SyntheticProblemSpec(
                problem_id=rec["problem_id"],
                seed=rec["seed"],
                difficulty=Difficulty(rec["difficulty"]),
                depth_range=tuple(rec["depth_range"]),
                branching=rec["branching"],
                reward_profile=RewardProfile(
                    golden_range=tuple(prof["golden_range"]),
                    off_path_range=tuple(prof["off_path_range"]),
                    hidden_until_depth=prof["hidden_until_depth"],
                    shared_range=(
                        tuple(prof["shared_range"]) if prof["shared_range"] else None
                    ),
                    target_aggregate=prof["target_aggregate"],
                ),
                golden_path=tuple(rec["golden_path"]) if rec["golden_path"] else None,
            )
        )
    return specs

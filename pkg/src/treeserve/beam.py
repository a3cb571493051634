"""Beam search baseline sharing the synthetic backend and scoring rules.

Each step expands every surviving beam into a fixed number of sampled
candidate steps, scores the candidates by their accumulated aggregate, and
keeps the top ``beam_width``. Terminal candidates retire into a finished pool
and stop consuming expansion slots. Because the expansion fan-out is fixed,
every step pays for all sampled candidates whether or not they survive; this
is the structural cost the tree search avoids.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .backend import SyntheticProblemSpec, generate_steps
from .scoring import ScoringConfig, aggregate_trajectory

__all__ = [
    "Beam",
    "BeamConfig",
    "BeamResult",
    "BeamStep",
    "beam_step",
    "expand_beams",
    "prune_candidates",
    "run_beam_search",
]


@dataclass(frozen=True)
class BeamConfig:
    beam_width: int = 8
    candidates_per_beam: int = 4
    max_depth: int = 16
    positive_exit_enabled: bool = True

    def __post_init__(self) -> None:
        if self.beam_width < 1 or self.candidates_per_beam < 1 or self.max_depth < 1:
            raise ValueError("beam parameters must be positive")


@dataclass(frozen=True)
class Beam:
    """A partial (or finished) trajectory: child-index path plus its rewards."""

    index_path: tuple[int, ...]
    rewards: tuple[float, ...]
    score: float
    is_terminal: bool = False


@dataclass(frozen=True)
class BeamCandidate:
    beam: Beam
    order: int  # global candidate index within the step, for tie-breaks
    token_count: int


@dataclass(frozen=True)
class BeamStep:
    survivors: list[Beam]
    finished: list[Beam]
    tokens_generated: int


@dataclass(frozen=True)
class BeamResult:
    problem_id: str
    best: Optional[Beam]
    complete: bool  # False when no trajectory finished by the depth limit
    steps: int
    tokens_generated: int


def expand_beams(
    beams: list[Beam],
    config: BeamConfig,
    scoring: ScoringConfig,
    problem: SyntheticProblemSpec,
) -> list[BeamCandidate]:
    """Sample ``candidates_per_beam`` extensions of every beam, beam-major.

    Sampling may repeat a continuation when the problem branches less than
    the sample count; duplicates carry their full token cost.
    """
    candidates = []
    order = 0
    for beam in beams:
        steps = generate_steps(problem, beam.index_path, config.candidates_per_beam)
        for cand in steps:
            rewards = beam.rewards + (cand.prm_reward,)
            candidates.append(
                BeamCandidate(
                    beam=Beam(
                        index_path=beam.index_path + (cand.step_ref,),
                        rewards=rewards,
                        score=aggregate_trajectory(rewards, scoring.scheme),
                        is_terminal=cand.is_terminal,
                    ),
                    order=order,
                    token_count=cand.token_count,
                )
            )
            order += 1
    return candidates


def prune_candidates(candidates: list[BeamCandidate], beam_width: int) -> tuple[list[Beam], list[Beam]]:
    """Retire terminal candidates, keep the top ``beam_width`` of the rest.

    Ranking is by accumulated score, ties by lower candidate index.
    """
    finished = [c.beam for c in candidates if c.beam.is_terminal]
    open_cands = [c for c in candidates if not c.beam.is_terminal]
    open_cands.sort(key=lambda c: (-c.beam.score, c.order))
    return [c.beam for c in open_cands[:beam_width]], finished


def beam_step(
    beams: list[Beam],
    config: BeamConfig,
    scoring: ScoringConfig,
    problem: SyntheticProblemSpec,
) -> BeamStep:
    """One expansion-pruning round."""
    if not 1 <= len(beams) <= config.beam_width:
        raise ValueError(f"beam count {len(beams)} out of [1, {config.beam_width}]")
    candidates = expand_beams(beams, config, scoring, problem)
    survivors, finished = prune_candidates(candidates, config.beam_width)
    return BeamStep(
        survivors=survivors,
        finished=finished,
        tokens_generated=sum(c.token_count for c in candidates),
    )


def best_finished(finished: list[Beam]) -> Optional[Beam]:
    """Highest accumulated score; the earliest finisher wins ties."""
    best = None
    for beam in finished:
        if best is None or beam.score > best.score:
            best = beam
    return best


def run_beam_search(
    problem: SyntheticProblemSpec,
    config: Optional[BeamConfig] = None,
    scoring: Optional[ScoringConfig] = None,
) -> BeamResult:
    """Iterate expansion and pruning until the depth limit, beam exhaustion,
    or (when enabled) a finished trajectory meets the positive-exit
    threshold. Returns the best finished trajectory, or the best surviving
    partial flagged incomplete when nothing finished in time."""
    config = config or BeamConfig()
    scoring = scoring or ScoringConfig()
    active = [Beam(index_path=(), rewards=(), score=0.0)]
    finished: list[Beam] = []
    tokens = 0
    steps = 0
    while active and steps < config.max_depth:
        result = beam_step(active, config, scoring, problem)
        active = result.survivors
        finished.extend(result.finished)
        tokens += result.tokens_generated
        steps += 1
        if config.positive_exit_enabled:
            best = best_finished(finished)
            if best is not None and best.score >= scoring.positive_exit_threshold:
                break
    best = best_finished(finished)
    if best is not None:
        return BeamResult(problem.problem_id, best, True, steps, tokens)
    partial = best_finished(active) if active else None
    return BeamResult(problem.problem_id, partial, False, steps, tokens)

"""Beam search baseline: expansion, pruning, termination, token accounting."""

import pytest

from treeserve.backend import Difficulty, make_problem
from treeserve.beam import Beam, BeamConfig, beam_step, run_beam_search
from treeserve.scoring import ScoringConfig


def problem_of(difficulty, seed=11, depth=(3, 3), branching=2):
    return make_problem("b", seed=seed, difficulty=difficulty, depth_range=depth, branching=branching)


def root_beam():
    return Beam(index_path=(), rewards=(), score=0.0)


def step_from_root(problem, config, scoring, steps=1):
    active = [root_beam()]
    finished = []
    last = None
    for _ in range(steps):
        last = beam_step(active, config, scoring, problem)
        active = last.survivors
        finished.extend(last.finished)
    return active, finished, last


class TestBeamStep:
    def test_two_beams_times_four_candidates_reduce_to_two(self):
        problem = problem_of(Difficulty.EASY, depth=(4, 4))
        config = BeamConfig(beam_width=2, candidates_per_beam=4)
        scoring = ScoringConfig()
        active, _, result = step_from_root(problem, config, scoring, steps=2)
        assert len(active) == 2
        # the second step expanded 2 beams into 2*4 candidates
        assert result.tokens_generated > 0

    def test_greedy_decoding_degenerate_case(self):
        problem = problem_of(Difficulty.EASY)
        config = BeamConfig(beam_width=1, candidates_per_beam=1)
        active, _, _ = step_from_root(problem, config, ScoringConfig())
        assert len(active) == 1

    def test_duplicate_sampling_keeps_both_copies_of_the_best(self):
        # sampling width 4 over branching 2 duplicates both children; a
        # width-2 cut keeps both copies of the higher-scored child, which is
        # exactly the redundant work fixed-fanout sampling pays for
        problem = problem_of(Difficulty.EASY, depth=(4, 4))
        config = BeamConfig(beam_width=2, candidates_per_beam=4)
        result = beam_step([root_beam()], config, ScoringConfig(), problem)
        assert len(result.survivors) == 2
        paths = [b.index_path for b in result.survivors]
        assert paths[0] == paths[1]
        scores = [b.score for b in result.survivors]
        assert scores[0] == max(scores)

    def test_ties_resolved_by_candidate_index(self):
        # a width-3 cut over duplicated candidates lists equal scores in
        # sampling order: both copies of the best child, then the runner-up
        problem = problem_of(Difficulty.EASY, depth=(4, 4))
        config = BeamConfig(beam_width=3, candidates_per_beam=4)
        result = beam_step([root_beam()], config, ScoringConfig(), problem)
        paths = [b.index_path for b in result.survivors]
        assert paths[0] == paths[1]
        assert paths[2] != paths[0]

    def test_candidate_count_invariant(self):
        # every step expands n candidates per surviving beam and keeps at
        # most beam_width of the non-terminal ones
        problem = problem_of(Difficulty.UNSOLVABLE, depth=(4, 4))
        config = BeamConfig(beam_width=8, candidates_per_beam=4)
        scoring = ScoringConfig()
        active = [root_beam()]
        for _ in range(3):
            expected = config.candidates_per_beam * len(active)
            result = beam_step(active, config, scoring, problem)
            assert len(result.survivors) <= config.beam_width
            assert len(result.survivors) == min(
                config.beam_width, expected - len(result.finished)
            )
            assert 40 * expected <= result.tokens_generated <= 120 * expected
            active = result.survivors
            if not active:
                break

    def test_rejects_oversized_beam_list(self):
        problem = problem_of(Difficulty.EASY)
        config = BeamConfig(beam_width=2, candidates_per_beam=2)
        beams = [root_beam()] * 3
        with pytest.raises(ValueError):
            beam_step(beams, config, ScoringConfig(), problem)


class TestRunBeamSearch:
    def test_easy_problem_exits_early_with_quality(self):
        problem = problem_of(Difficulty.EASY, seed=23, depth=(3, 3))
        scoring = ScoringConfig()
        result = run_beam_search(problem, BeamConfig(), scoring)
        assert result.complete
        assert result.best.score >= scoring.positive_exit_threshold
        assert result.steps <= problem.base_depth  # stopped as soon as found

    def test_exit_disabled_runs_all_beams_to_terminal(self):
        problem = problem_of(Difficulty.EASY, seed=23, depth=(3, 3))
        config = BeamConfig(positive_exit_enabled=False)
        with_exit = run_beam_search(problem, BeamConfig(), ScoringConfig())
        without = run_beam_search(problem, config, ScoringConfig())
        assert without.steps >= with_exit.steps
        assert without.tokens_generated >= with_exit.tokens_generated
        assert without.steps <= problem.max_depth

    def test_unsolvable_pays_full_cost_below_threshold(self):
        problem = problem_of(Difficulty.UNSOLVABLE, seed=5, depth=(3, 3))
        scoring = ScoringConfig()
        result = run_beam_search(problem, BeamConfig(), scoring)
        assert result.best.score < scoring.accept_threshold
        assert result.steps >= problem.base_depth  # nothing exits early

    def test_solves_easy_problem(self):
        problem = problem_of(Difficulty.EASY, seed=31, depth=(2, 4))
        result = run_beam_search(problem, BeamConfig(), ScoringConfig())
        assert result.best.index_path == problem.golden_path

    def test_deterministic(self):
        problem = problem_of(Difficulty.HARD_SOLVABLE, seed=13)
        a = run_beam_search(problem, BeamConfig(), ScoringConfig())
        b = run_beam_search(problem, BeamConfig(), ScoringConfig())
        assert a == b

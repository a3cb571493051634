"""Synthetic problem generator, reward structure, and cost model."""

import math

import pytest

from treeserve.backend import (
    CostModel,
    Difficulty,
    default_profile,
    generate_steps,
    golden_step_rewards,
    make_problem,
    make_workload,
    service_time,
    workload_from_json,
    workload_to_json,
)
from treeserve.scoring import AggregationScheme, aggregate_trajectory


def spec(difficulty=Difficulty.EASY, seed=123, depth=(2, 3), branching=2):
    return make_problem("p", seed=seed, difficulty=difficulty, depth_range=depth, branching=branching)


def all_trajectories(problem):
    """Every (path, rewards) pair reaching a terminal step."""
    out = []

    def walk(path, rewards):
        for c in generate_steps(problem, path, problem.branching):
            p2 = path + (c.step_ref,)
            r2 = rewards + [c.prm_reward]
            if c.is_terminal:
                out.append((p2, r2))
            else:
                walk(p2, r2)

    walk((), [])
    return out


class TestGenerateSteps:
    def test_deterministic(self):
        problem = spec()
        a = generate_steps(problem, (), 2)
        b = generate_steps(problem, (), 2)
        assert a == b

    def test_easy_golden_child_dominates_siblings(self):
        problem = spec(Difficulty.EASY, seed=42, depth=(3, 3))
        path = ()
        for depth in range(problem.base_depth):
            cands = generate_steps(problem, path, problem.branching)
            golden_index = problem.golden_path[depth]
            golden_reward = cands[golden_index].prm_reward
            assert all(golden_reward >= c.prm_reward for c in cands)
            path = path + (golden_index,)

    def test_unsolvable_rewards_below_threshold(self):
        problem = spec(Difficulty.UNSOLVABLE, seed=9)
        for path, rewards in all_trajectories(problem):
            assert all(r < 0.3 for r in rewards)

    def test_priors_sum_to_one(self):
        problem = spec(seed=17, branching=3)
        cands = generate_steps(problem, (), 3)
        assert sum(c.prior for c in cands) == pytest.approx(1.0, abs=1e-9)

    def test_width_beyond_branching_repeats_candidates(self):
        problem = spec(seed=17, branching=2)
        cands = generate_steps(problem, (), 4)
        assert [c.step_ref for c in cands] == [0, 1, 0, 1]
        assert cands[0] == cands[2]  # resampled duplicate, same tokens and reward

    def test_terminal_context_rejected(self):
        problem = spec(seed=5, depth=(2, 2))
        golden = problem.golden_path
        with pytest.raises(ValueError):
            generate_steps(problem, golden, 2)

    def test_token_counts_in_range(self):
        problem = spec(seed=31)
        for c in generate_steps(problem, (), 2):
            assert 40 <= c.token_count <= 120


class TestProblemStructure:
    def test_golden_product_exceeds_target(self):
        for seed in range(40):
            for difficulty in (Difficulty.EASY, Difficulty.HARD_SOLVABLE):
                problem = spec(difficulty, seed=seed, depth=(2, 5))
                product = math.prod(golden_step_rewards(problem))
                assert product > problem.reward_profile.target_aggregate - 1e-12

    def test_unsolvable_completions_all_below_threshold(self):
        for seed in range(10):
            problem = spec(Difficulty.UNSOLVABLE, seed=seed, depth=(2, 3))
            for _, rewards in all_trajectories(problem):
                for scheme in (AggregationScheme.MINIMUM, AggregationScheme.CUMULATIVE_PRODUCT):
                    assert aggregate_trajectory(rewards, scheme) < 0.3

    def test_golden_trajectory_is_terminal_at_base_depth(self):
        problem = spec(Difficulty.EASY, seed=77, depth=(2, 4))
        golden = problem.golden_path
        cands = generate_steps(problem, golden[:-1], problem.branching)
        assert cands[golden[-1]].is_terminal

    def test_hard_problem_hides_golden_early(self):
        # shallow steps share one reward range: the golden child must not be
        # recognizable by construction (it may still win some draws)
        wins = 0
        total = 0
        for seed in range(60):
            problem = spec(Difficulty.HARD_SOLVABLE, seed=seed, depth=(3, 4))
            cands = generate_steps(problem, (), problem.branching)
            golden = problem.golden_path[0]
            total += 1
            if all(cands[golden].prm_reward >= c.prm_reward for c in cands):
                wins += 1
        assert 0 < wins < total


class TestWorkload:
    def test_exact_mixture_split(self):
        workload = make_workload(100, (0.6, 0.25, 0.15), seed=1)
        by_kind = {d: 0 for d in Difficulty}
        for problem in workload:
            by_kind[problem.difficulty] += 1
        assert by_kind[Difficulty.EASY] == 60
        assert by_kind[Difficulty.HARD_SOLVABLE] == 25
        assert by_kind[Difficulty.UNSOLVABLE] == 15

    def test_deterministic(self):
        assert make_workload(20, (0.5, 0.3, 0.2), seed=4) == make_workload(
            20, (0.5, 0.3, 0.2), seed=4
        )

    def test_single_easy(self):
        workload = make_workload(1, (1.0, 0.0, 0.0), seed=2)
        assert len(workload) == 1 and workload[0].difficulty is Difficulty.EASY

    def test_bad_mixture_rejected(self):
        with pytest.raises(ValueError):
            make_workload(10, (0.5, 0.3, 0.1), seed=2)

    def test_distinct_ids(self):
        workload = make_workload(50, (0.6, 0.25, 0.15), seed=8)
        assert len({p.problem_id for p in workload}) == 50

    def test_json_roundtrip(self):
        workload = make_workload(10, (0.6, 0.25, 0.15), seed=3)
        assert workload_from_json(workload_to_json(workload)) == workload


class TestCostModel:
    def test_linear_no_contention(self):
        model = CostModel(per_token_latency=0.002, engine_capacity=32)
        assert service_time(100, model, 10) == pytest.approx(0.200)

    def test_contention_doubles(self):
        model = CostModel(per_token_latency=0.002, engine_capacity=32)
        assert service_time(100, model, 64) == pytest.approx(0.400)

    def test_single_token(self):
        model = CostModel(per_token_latency=0.002, engine_capacity=32)
        assert service_time(1, model, 0) == pytest.approx(0.002)

    def test_monotone_in_tokens_and_load(self):
        model = CostModel()
        times = [service_time(t, model, 0) for t in range(1, 200, 7)]
        assert all(a <= b for a, b in zip(times, times[1:]))
        loads = [service_time(80, model, load) for load in range(0, 200, 5)]
        assert all(a <= b for a, b in zip(loads, loads[1:]))

    def test_rejects_bad_arguments(self):
        model = CostModel()
        with pytest.raises(ValueError):
            service_time(0, model, 0)
        with pytest.raises(ValueError):
            service_time(10, model, -1)
        with pytest.raises(ValueError):
            CostModel(per_token_latency=0.0)


class TestDefaultProfiles:
    def test_unsolvable_ceiling_below_threshold(self):
        profile = default_profile(Difficulty.UNSOLVABLE, accept_threshold=0.3)
        assert profile.off_path_range[1] < 0.3

    def test_hard_is_hidden_until_depth_two(self):
        profile = default_profile(Difficulty.HARD_SOLVABLE)
        assert profile.hidden_until_depth == 2
        assert profile.shared_range is not None

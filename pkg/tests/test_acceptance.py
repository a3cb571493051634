"""Acceptance suite: one test per criterion, at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to get one pass/fail line
per criterion. The workload-level criteria share a module-scoped batch of
simulation runs on a fixed, documented seed.
"""

import dataclasses
import math
import random
import time

import pytest

from treeserve.backend import Difficulty, ProblemBackend, make_problem, make_workload
from treeserve.cli import load_config, main
from treeserve.metrics import RecordExitKind, summarize
from treeserve.scheduler import InflightRollout, choose_preemption_victims
from treeserve.scoring import (
    AggregationScheme,
    ScoringConfig,
    aggregate_trajectory,
    check_negative_exit,
)
from treeserve.search import run_tree_search
from treeserve.simulator import run
from treeserve.tree import (
    NoExpandableLeafError,
    SearchTree,
    SelectionParams,
    Trajectory,
    backpropagate,
    select_leaf,
    simulate_to_terminal,
    wu_puct_score,
)

SEED = 20260810  # documented acceptance seed; all workload criteria use it
TOP_RATE = 5.0  # highest swept arrival rate (requests/second)
WORKLOAD = make_workload(500, (0.6, 0.25, 0.15), seed=SEED)


def preset_config(preset, **overrides):
    config = load_config(preset=preset).simulation
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


@pytest.fixture(scope="module")
def runs():
    """All compared systems on the criterion-6 workload at the top rate."""
    out = {}
    for preset in ("vanilla", "pe", "pe_ne", "pe_ne_boost", "beam"):
        out[preset] = run(WORKLOAD, TOP_RATE, preset_config(preset), seed=SEED)
    beam_cfg = preset_config("beam")
    beam_cfg = dataclasses.replace(
        beam_cfg, beam=dataclasses.replace(beam_cfg.beam, positive_exit_enabled=False)
    )
    out["beam_no_pe"] = run(WORKLOAD, TOP_RATE, beam_cfg, seed=SEED)
    strict = preset_config("pe_ne")
    strict = dataclasses.replace(
        strict, scoring=dataclasses.replace(strict.scoring, strict_negative_exit=True)
    )
    out["pe_ne_strict"] = run(WORKLOAD, TOP_RATE, strict, seed=SEED)
    return out


def by_difficulty(records, difficulty):
    picked = []
    for record, problem in zip(records, WORKLOAD):
        if problem.difficulty is difficulty:
            picked.append(record)
    return picked


def test_criterion_01_wu_puct_reduces_to_puct():
    rnd = random.Random(SEED)
    started = time.perf_counter()
    for _ in range(1000):
        q, prior = rnd.random(), rnd.random()
        parent_visits = rnd.randrange(0, 200)
        child_visits = rnd.randrange(0, 100)
        params = SelectionParams(c_puct=rnd.uniform(0.05, 4.0))
        plain_puct = q + params.c_puct * prior * math.sqrt(parent_visits) / (1 + child_visits)
        assert wu_puct_score(q, prior, parent_visits, 0, child_visits, 0, params) == plain_puct
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    print(f"\n[PASS] criterion 1: WU-PUCT == PUCT on 1000 tuples with zero tolerance ({elapsed:.3f}s)")


def _enumerate_completions(problem, prefix_path, prefix_rewards, scheme):
    scores = []

    def walk(path, rewards):
        for cand in problem_steps(problem, path):
            p2 = path + (cand.step_ref,)
            r2 = rewards + [cand.prm_reward]
            if cand.is_terminal:
                scores.append(aggregate_trajectory(r2, scheme))
            else:
                walk(p2, r2)

    walk(tuple(prefix_path), list(prefix_rewards))
    return scores


def problem_steps(problem, path):
    from treeserve.backend import generate_steps

    return generate_steps(problem, path, problem.branching)


def test_criterion_02_negative_exit_soundness_oracle():
    started = time.perf_counter()
    rnd = random.Random(SEED + 2)
    fires = 0
    for case in range(100):
        difficulty = Difficulty.UNSOLVABLE if case % 2 else Difficulty.HARD_SOLVABLE
        problem = make_problem(
            f"c2-{case}",
            seed=rnd.randrange(2**63),
            difficulty=difficulty,
            depth_range=(2, 3),  # extension branches reach depth 4 at most
            branching=rnd.choice((2, 3)),
        )
        backend = ProblemBackend(problem, expand_width=3)
        tree = SearchTree(rollout_budget=8)
        params = SelectionParams()
        for _ in range(rnd.randrange(1, 6)):
            try:
                leaf = select_leaf(tree, params)
            except NoExpandableLeafError:
                break
            terminal = simulate_to_terminal(tree, leaf, backend)
            path = tree.path_to_root(terminal)
            rewards = tree.rewards_along(path[1:])
            backpropagate(
                tree,
                Trajectory(
                    tuple(path[1:]),
                    aggregate_trajectory(rewards, AggregationScheme.CUMULATIVE_PRODUCT),
                    tree.completed_rollouts,
                ),
            )
        for scheme in (AggregationScheme.MINIMUM, AggregationScheme.CUMULATIVE_PRODUCT):
            config = ScoringConfig(scheme=scheme, strict_negative_exit=True)
            if not check_negative_exit(tree, config):
                continue
            fires += 1
            for leaf_node in tree.iter_leaves():
                if leaf_node.is_terminal:
                    continue
                node_path = tree.path_to_root(leaf_node.node_id)
                index_path = [tree.nodes[n].step_ref for n in node_path[1:]]
                rewards = tree.rewards_along(node_path[1:])
                for score in _enumerate_completions(problem, index_path, rewards, scheme):
                    assert score < config.accept_threshold, (
                        f"strict exit fired with acceptable completion {score} on {problem.problem_id}"
                    )
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    assert fires > 0
    print(f"\n[PASS] criterion 2: strict negative exit sound on 100 trees, {fires} fired exits checked ({elapsed:.2f}s)")


def test_criterion_03_capacity_and_gate_invariants():
    config = preset_config("pe_ne_boost")
    assert config.scheduler.max_concurrency == 16
    checks = 0
    violations = []

    def listener(engine, event):
        nonlocal checks
        checks += 1
        total = engine.sched.total_active()
        if total > 16:
            violations.append(("capacity", event, total))
        for job in engine.sched.run_queue:
            if job.completed_rollouts < config.scheduler.obs_threshold:
                if len(job.active_rollouts) > 1:
                    violations.append(("gate", job.job_id, len(job.active_rollouts)))

    run(WORKLOAD, TOP_RATE, config, seed=SEED, listener=listener)
    assert checks > 5_000  # the listener really saw the whole run
    assert violations == []
    print(f"\n[PASS] criterion 3: capacity <= 16 and serial gate held over {checks} events, zero violations")


def test_criterion_04_preemption_matches_sort_oracle():
    rnd = random.Random(SEED + 4)
    for _ in range(200):
        count = rnd.randrange(1, 12)
        rollouts = [
            InflightRollout(rollout_id=i, prefix_score=round(rnd.uniform(0, 1), 3))
            for i in range(count)
        ]
        rnd.shuffle(rollouts)
        victims = rnd.randrange(0, count + 1)
        chosen = choose_preemption_victims(rollouts, victims)
        oracle = sorted(rollouts, key=lambda r: (r.prefix_score, r.rollout_id))[:victims]
        assert chosen == oracle
    print("\n[PASS] criterion 4: preemption victims equal the lowest-prefix-reward sort on 200 scenarios")


def test_criterion_05_vanilla_reduces_to_serial_search():
    workload = WORKLOAD[:60]
    config = preset_config("vanilla")
    config = dataclasses.replace(
        config, scheduler=dataclasses.replace(config.scheduler, max_concurrency=1)
    )
    records = run(workload, 2.0, config, seed=SEED)
    for record, problem in zip(records, workload):
        serial = run_tree_search(
            problem,
            scoring=config.scoring,
            selection=config.selection,
            rollout_budget=config.rollout_budget,
            depth_cap=config.depth_cap,
            expand_width=config.expand_width,
            positive_exit=False,
            negative_exit=False,
        )
        assert record.best_path == serial.best_path
        assert record.best_score == serial.best_score  # exact equality
        assert record.rollouts_completed == serial.rollouts_completed
        assert record.tokens_generated == serial.tokens_generated
    print("\n[PASS] criterion 5: M=1 vanilla trajectories identical to standalone serial search (60 requests)")


def test_criterion_06_arrival_rate_tail_latency_directions(runs):
    started = time.perf_counter()
    p99 = {name: summarize(records).p99_latency for name, records in runs.items()}
    assert p99["pe"] < p99["vanilla"]
    assert p99["pe_ne"] <= p99["pe"]
    assert p99["pe_ne_boost"] <= p99["pe_ne"]
    assert p99["vanilla"] < p99["beam"]
    elapsed = time.perf_counter() - started
    assert elapsed < 120.0
    print(
        "\n[PASS] criterion 6: p99 ordering beam > vanilla > pe >= pe_ne >= boost "
        f"({p99['beam']:.2f} > {p99['vanilla']:.2f} > {p99['pe']:.2f} >= "
        f"{p99['pe_ne']:.2f} >= {p99['pe_ne_boost']:.2f} s)"
    )


def test_criterion_07_token_efficiency_directions(runs):
    tokens = {name: summarize(records).total_tokens for name, records in runs.items()}
    assert tokens["vanilla"] < tokens["beam_no_pe"]
    assert tokens["pe"] < tokens["beam"]
    mcts_reduction = 1.0 - tokens["pe"] / tokens["vanilla"]
    beam_reduction = 1.0 - tokens["beam"] / tokens["beam_no_pe"]
    assert mcts_reduction > beam_reduction
    print(
        "\n[PASS] criterion 7: tree search cheaper than beam "
        f"({tokens['vanilla']} < {tokens['beam_no_pe']} tokens); positive-exit "
        f"reduction {mcts_reduction:.1%} (tree) > {beam_reduction:.1%} (beam)"
    )


def test_criterion_08_throughput_directions(runs):
    throughput = {name: summarize(records).throughput for name, records in runs.items()}
    assert throughput["pe"] > throughput["vanilla"]
    assert throughput["pe_ne"] >= throughput["pe"]
    print(
        "\n[PASS] criterion 8: throughput pe > vanilla and pe_ne >= pe "
        f"({throughput['pe']:.3f} > {throughput['vanilla']:.3f}, "
        f"{throughput['pe_ne']:.3f} >= {throughput['pe']:.3f} req/s)"
    )


def test_criterion_09_experiment_outputs_byte_identical(tmp_path):
    base = tmp_path / "exp.toml"
    base.write_text("[workload]\ncount = 40\n")
    outputs = []
    for attempt in ("first", "second"):
        out_dir = tmp_path / attempt
        code = main(
            [
                "--config", str(base), "--preset", "pe_ne_boost",
                "--rates", "1.0,4.0", "--seed", str(SEED), "--out", str(out_dir),
            ]
        )
        assert code == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out_dir.iterdir())})
    assert outputs[0] == outputs[1]
    assert len(outputs[0]) == 5  # csv+json per rate plus the sweep table
    print("\n[PASS] criterion 9: rerun with identical config and seed is byte-identical across all outputs")


def test_criterion_10_negative_exit_on_unsolvable(runs):
    ne_on = by_difficulty(runs["pe_ne"], Difficulty.UNSOLVABLE)
    ne_off = by_difficulty(runs["pe"], Difficulty.UNSOLVABLE)
    strict = by_difficulty(runs["pe_ne_strict"], Difficulty.UNSOLVABLE)
    assert len(ne_on) == 75  # 15% of 500
    for on, off in zip(ne_on, ne_off):
        assert on.exit_kind is RecordExitKind.NEGATIVE
        assert on.rollouts_completed < off.rollouts_completed
    for selective, strict_rec in zip(ne_on, strict):
        assert selective.rollouts_completed <= strict_rec.rollouts_completed
    print(
        "\n[PASS] criterion 10: all 75 unsolvable requests exit negative with strictly "
        "fewer rollouts; selective <= strict everywhere"
    )

"""Walk through one tree search, rollout by rollout.

Runs the serial search loop by hand on a single synthetic problem so you can
watch the four phases at work: selection picks a leaf, expansion and greedy
simulation grow the tree to a terminal step, and backpropagation folds the
trajectory score into every node on the path. After each rollout the exit
policy decides whether to keep going.
"""

from treeserve.backend import Difficulty, ProblemBackend, make_problem
from treeserve.scoring import ExitKind, ScoringConfig, aggregate_trajectory, decide_exit
from treeserve.search import finish_rollout
from treeserve.tree import (
    NoExpandableLeafError,
    SearchTree,
    SelectionParams,
    select_leaf,
    simulate_to_terminal,
)

problem = make_problem(
    "walkthrough", seed=2025, difficulty=Difficulty.HARD_SOLVABLE, depth_range=(3, 4)
)
print(f"problem: {problem.problem_id} ({problem.difficulty.value})")
print(f"golden path (hidden from the search): {problem.golden_path}\n")

scoring = ScoringConfig()
tree = SearchTree(rollout_budget=32)
backend = ProblemBackend(problem, expand_width=4)
params = SelectionParams(c_puct=1.0)

while True:
    try:
        leaf = select_leaf(tree, params)
    except NoExpandableLeafError:
        print("tree exhausted: every leaf is terminal")
        decision = decide_exit(tree, scoring, tree_exhausted=True)
        break
    terminal = simulate_to_terminal(tree, leaf, backend)
    trajectory = finish_rollout(tree, terminal, scoring)
    path = tuple(tree.nodes[n].step_ref for n in trajectory.node_path)
    marker = " <-- golden!" if path == problem.golden_path else ""
    print(
        f"rollout {tree.completed_rollouts:2d}: path={path} "
        f"score={trajectory.aggregate_score:.3f}{marker}"
    )
    decision = decide_exit(tree, scoring)
    if decision.kind is not ExitKind.CONTINUE:
        break

print(f"\nexit: {decision.kind.value} with best score {decision.best_score:.3f}")
best = tree.best_trajectory
best_path = tuple(tree.nodes[n].step_ref for n in best.node_path)
print(f"best trajectory: {best_path} (solved: {best_path == problem.golden_path})")
print(f"tree grew to {len(tree.nodes)} nodes over {tree.completed_rollouts} rollouts")

print("\nfirst-level statistics (N visits, q mean value):")
for child_id in tree.root.children:
    node = tree.nodes[child_id]
    q = node.value_sum / node.visit_count if node.visit_count else float("nan")
    print(f"  step {node.step_ref}: reward={node.prm_reward:.3f} N={node.visit_count:2d} q={q:.3f}")

"""How the two early exits end searches that should not keep running.

A positive exit returns a trajectory that met the quality threshold. A
negative exit abandons a search whose every remaining leaf is futile: under
minimum or product aggregation no completion through a leaf can ever score
above the leaf itself, so a tree whose leaves all sit below the acceptance
threshold is mathematically done. The selective variant also ignores subtrees
with a weak first step, firing the same exit earlier.
"""

from treeserve.backend import Difficulty, make_problem
from treeserve.scoring import ScoringConfig
from treeserve.search import run_tree_search

scoring = ScoringConfig()  # accept 0.3, positive exit 0.5, product aggregation

print("=== positive exit: an easy problem ends after the first rollout ===")
easy = make_problem("easy", seed=11, difficulty=Difficulty.EASY, depth_range=(3, 4))
outcome = run_tree_search(easy, scoring)
print(
    f"exit={outcome.exit_kind.value} rollouts={outcome.rollouts_completed} "
    f"score={outcome.best_score:.3f} tokens={outcome.tokens_generated}\n"
)

print("=== negative exit: an unsolvable problem is abandoned immediately ===")
unsolvable = make_problem("stuck", seed=13, difficulty=Difficulty.UNSOLVABLE, depth_range=(3, 4))
for label, negative in (("with negative exit", True), ("without", False)):
    outcome = run_tree_search(unsolvable, scoring, negative_exit=negative)
    print(
        f"{label:22s} exit={outcome.exit_kind.value:16s} "
        f"rollouts={outcome.rollouts_completed:2d} tokens={outcome.tokens_generated}"
    )

print("\n=== selective vs strict futility check across unsolvable problems ===")
saved = []
for seed in range(200, 230):
    problem = make_problem(f"u{seed}", seed=seed, difficulty=Difficulty.UNSOLVABLE, depth_range=(2, 4))
    strict = run_tree_search(
        problem, ScoringConfig(strict_negative_exit=True)
    ).rollouts_completed
    selective = run_tree_search(
        problem, ScoringConfig(strict_negative_exit=False)
    ).rollouts_completed
    saved.append((strict, selective))
strict_total = sum(s for s, _ in saved)
selective_total = sum(s for _, s in saved)
print(f"strict mode rollouts over 30 problems:    {strict_total}")
print(f"selective mode rollouts over 30 problems: {selective_total} (never more than strict)")

print("\n=== a hard problem is safe: viable leaves block the negative exit ===")
hard = make_problem("hard", seed=17, difficulty=Difficulty.HARD_SOLVABLE, depth_range=(3, 4))
outcome = run_tree_search(hard, scoring)
print(
    f"exit={outcome.exit_kind.value} rollouts={outcome.rollouts_completed} "
    f"score={outcome.best_score:.3f} solved={outcome.solved}"
)

"""treeserve: deterministic serving simulator for tree-search reasoning workloads.

The library simulates how a pool of concurrent tree-search requests behaves
under a shared compute budget: adaptive parallel search with in-flight
statistics, quality-threshold and futility-based early exits, a boosting
scheduler that reallocates freed budget, and a beam-search baseline over the
same synthetic backends and cost model.
"""

from .backend import (
    CostModel,
    Difficulty,
    StepCandidate,
    SyntheticProblemSpec,
    generate_steps,
    make_workload,
    service_time,
)
from .beam import BeamConfig, beam_step, run_beam_search
from .metrics import RequestRecord, SummaryStats, percentile, records_to_csv, summarize
from .scheduler import Job, SchedulerConfig, SchedulerState
from .scoring import (
    AggregationScheme,
    ExitDecision,
    ExitKind,
    ScoringConfig,
    aggregate_trajectory,
    check_negative_exit,
    check_positive_exit,
    classify_leaf,
    decide_exit,
)
from .search import SearchOutcome, run_tree_search
from .simulator import Engine, SimulationConfig, run
from .tree import (
    SearchTree,
    SelectionParams,
    StepNode,
    Trajectory,
    backpropagate,
    cancel_inflight,
    expand,
    select_leaf,
    simulate_to_terminal,
    wu_puct_score,
)

__version__ = "0.1.0"

"""Watch the scheduler reallocate freed budget to the jobs still running.

Early exits hand rollout slots back to the pool; with boosting enabled the
scheduler immediately re-targets those slots at the remaining jobs (one
rollout per job while a job is under the observation gate, proportional to
priority afterwards). The trace below shows per-job parallelism targets
climbing as the run queue drains, and in-flight rollouts being preempted when
allocations shrink.
"""

from treeserve.backend import make_workload
from treeserve.cli import load_config
from treeserve.metrics import summarize
from treeserve.simulator import run

workload = make_workload(24, (0.5, 0.35, 0.15), seed=404)
rate = 6.0

for preset in ("pe_ne", "pe_ne_boost"):
    config = load_config(preset=preset).simulation
    trace = []
    records = run(workload, rate, config, seed=404, trace=trace)
    stats = summarize(records)
    preempts = sum(r.rollouts_preempted for r in records)
    print(
        f"{preset:12s} p50={stats.p50_latency:6.3f}s p99={stats.p99_latency:6.3f}s "
        f"tokens={stats.total_tokens:7d} preemptions={preempts}"
    )
    if preset == "pe_ne_boost":
        boosted = [e for e in trace if e["kind"] == "allocation" and e["target"] > 1]
        print(f"\nallocation records with target > 1 (total {len(boosted)}), a sample:")
        for entry in boosted[:8]:
            print(
                f"  t={entry['time']:8.3f}s job={entry['job']:3d} "
                f"score={entry['score']:.3f} active={entry['active']} -> target={entry['target']}"
            )
        actions = [e for e in trace if e["kind"] == "action"]
        launches = sum(1 for e in actions if e["action"] == "launch")
        preempt_actions = sum(1 for e in actions if e["action"] == "preempt")
        print(f"\nscheduler actions: {launches} launch batches, {preempt_actions} preemptions")

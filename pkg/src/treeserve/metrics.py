"""Per-request records and run-level summary statistics.

Percentiles use the nearest-rank rule (no interpolation) so summaries are
bit-reproducible. CSV and JSON exports use fixed formatting for the same
reason: rerunning an experiment with identical inputs yields identical bytes.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Sequence

__all__ = [
    "RecordExitKind",
    "RequestRecord",
    "SummaryStats",
    "percentile",
    "records_to_csv",
    "summarize",
]


class RecordExitKind(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    BUDGET_EXHAUSTED = "budget_exhausted"
    BEAM_FINISHED = "beam_finished"


@dataclass(frozen=True)
class RequestRecord:
    """Outcome of one reasoning request.

    ``tokens_generated`` includes work later discarded by preemption and
    duplicate sampling; it was generated and must be paid for. ``best_path``
    is the winning trajectory as child indices (not exported to CSV).
    """

    request_id: str
    arrival_time: float
    completion_time: float
    rollouts_completed: int
    rollouts_preempted: int
    tokens_generated: int
    exit_kind: RecordExitKind
    best_score: float
    solved: bool
    best_path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.completion_time < self.arrival_time:
            raise ValueError("completion precedes arrival")

    @property
    def latency(self) -> float:
        return self.completion_time - self.arrival_time


@dataclass(frozen=True)
class SummaryStats:
    p50_latency: float
    p99_latency: float
    throughput: float
    total_tokens: int
    exit_histogram: dict[str, int]
    solve_rate: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "p50_latency": round(self.p50_latency, 6),
                "p99_latency": round(self.p99_latency, 6),
                "throughput": round(self.throughput, 6),
                "total_tokens": self.total_tokens,
                "exit_histogram": self.exit_histogram,
                "solve_rate": round(self.solve_rate, 6),
            },
            indent=2,
            sort_keys=True,
        )


def percentile(latencies: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the value at rank ceil(p/100 * n)."""
    if not latencies:
        raise ValueError("latencies must be non-empty")
    if not 0.0 < p <= 100.0:
        raise ValueError(f"p out of (0,100]: {p}")
    ordered = sorted(latencies)
    rank = math.ceil(p / 100.0 * len(ordered))
    return ordered[rank - 1]


def summarize(records: Sequence[RequestRecord]) -> SummaryStats:
    if not records:
        raise ValueError("records must be non-empty")
    latencies = [r.latency for r in records]
    histogram = {kind.value: 0 for kind in RecordExitKind}
    for record in records:
        histogram[record.exit_kind.value] += 1
    span = max(r.completion_time for r in records) - min(r.arrival_time for r in records)
    return SummaryStats(
        p50_latency=percentile(latencies, 50.0),
        p99_latency=percentile(latencies, 99.0),
        throughput=len(records) / span,
        total_tokens=sum(r.tokens_generated for r in records),
        exit_histogram=histogram,
        solve_rate=sum(1 for r in records if r.solved) / len(records),
    )


CSV_HEADER = "request_id,arrival,completion,latency,rollouts,preempted,tokens,exit,best_score,solved"


def records_to_csv(records: Sequence[RequestRecord]) -> str:
    """One fixed-format row per record, byte-stable across reruns."""
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.request_id},{r.arrival_time:.6f},{r.completion_time:.6f},"
            f"{r.latency:.6f},{r.rollouts_completed},{r.rollouts_preempted},"
            f"{r.tokens_generated},{r.exit_kind.value},{r.best_score:.6f},"
            f"{'true' if r.solved else 'false'}"
        )
    return "\n".join(lines) + "\n"

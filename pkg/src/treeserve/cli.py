"""Experiment runner: system presets, arrival-rate sweeps, report files.

Five presets map onto the compared system configurations: ``beam`` (beam
search with positive exit), ``vanilla`` (serial tree search per request, no
exits), ``pe`` (positive exit only), ``pe_ne`` (both exits), and
``pe_ne_boost`` (both exits plus adaptive parallel boosting).

Configuration comes from an optional TOML file plus flag overrides; the
effective configuration can be dumped with ``--print-config``. Every run is
fully determined by the config and seed: rerunning writes byte-identical
outputs. Nothing is written unless the whole sweep succeeds.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path
from typing import Optional

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version-dependent import
    import tomli as tomllib

from .backend import CostModel, make_workload
from .beam import BeamConfig
from .metrics import records_to_csv, summarize
from .scheduler import SchedulerConfig
from .scoring import AggregationScheme, FutilityBound, ScoringConfig
from .simulator import SimulationConfig, run
from .tree import SelectionParams

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "main", "run_experiment"]

PRESETS = ("beam", "vanilla", "pe", "pe_ne", "pe_ne_boost")

# preset -> (mode, positive_exit, negative_exit, boosting)
_PRESET_FLAGS = {
    "beam": ("beam", True, False, False),
    "vanilla": ("mcts", False, False, False),
    "pe": ("mcts", True, False, False),
    "pe_ne": ("mcts", True, True, False),
    "pe_ne_boost": ("mcts", True, True, True),
}

_DEFAULTS = {
    "preset": "pe_ne_boost",
    "seed": 20260810,
    "arrival_rates": [1.0, 2.5, 5.0],
    "output_dir": "results",
    "workload": {
        "count": 500,
        "mixture": [0.6, 0.25, 0.15],
        "branching": 2,
    },
    "scoring": {
        "scheme": "cumulative_product",
        "accept_threshold": 0.3,
        "positive_exit_threshold": 0.5,
        "first_step_threshold": 0.1,
        "strict_negative_exit": False,
        "futility_bound": "leaf_reward",
    },
    "search": {
        "c_puct": 1.0,
        "rollout_budget": 32,
        "depth_cap": 16,
        "expand_width": 4,
    },
    "scheduler": {
        "max_concurrency": 16,
        "beta": 2.0,
        "proximity": 0.9,
        "obs_threshold": 2,
        "tick_interval": 0.05,
    },
    "cost": {
        "per_token_latency": 0.002,
        "engine_capacity": 32,
        "reward_latency": 0.01,
    },
    "beam": {
        "beam_width": 8,
        "candidates_per_beam": 4,
        "max_depth": 16,
    },
    "simulator": {
        "arrival_process": "poisson",
        "event_cap": 10_000_000,
    },
}


class ConfigError(Exception):
    """Invalid experiment configuration; the message names the offender."""


class ExperimentConfig:
    """Validated effective configuration for one sweep."""

    def __init__(self, raw: dict, trace: bool = False) -> None:
        self.raw = raw
        self.trace = trace
        self.preset: str = raw["preset"]
        self.seed: int = raw["seed"]
        self.arrival_rates: list[float] = list(raw["arrival_rates"])
        self.output_dir = Path(raw["output_dir"])
        if self.preset not in PRESETS:
            raise ConfigError(f"config error at key 'preset': unknown preset {self.preset!r}")
        if not self.arrival_rates or any(r <= 0 for r in self.arrival_rates):
            raise ConfigError("config error at key 'arrival_rates': rates must be positive")
        mixture = raw["workload"]["mixture"]
        if len(mixture) != 3:
            raise ConfigError(
                "config error at key 'workload.mixture': need [easy, hard, unsolvable]"
            )
        self.mode, self.positive_exit, self.negative_exit, self.boosting = _PRESET_FLAGS[
            self.preset
        ]
        try:
            self.simulation = self._build_simulation_config(raw)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"config error: {exc}") from exc

    def _build_simulation_config(self, raw: dict) -> SimulationConfig:
        scoring = raw["scoring"]
        search = raw["search"]
        sched = raw["scheduler"]
        return SimulationConfig(
            scoring=ScoringConfig(
                scheme=AggregationScheme(scoring["scheme"]),
                accept_threshold=scoring["accept_threshold"],
                positive_exit_threshold=scoring["positive_exit_threshold"],
                first_step_threshold=scoring["first_step_threshold"],
                strict_negative_exit=scoring["strict_negative_exit"],
                futility_bound=FutilityBound(scoring["futility_bound"]),
            ),
            selection=SelectionParams(c_puct=search["c_puct"]),
            scheduler=SchedulerConfig(
                max_concurrency=sched["max_concurrency"],
                beta=sched["beta"],
                proximity=sched["proximity"],
                obs_threshold=sched["obs_threshold"],
                boosting_enabled=self.boosting,
            ),
            cost=CostModel(
                per_token_latency=raw["cost"]["per_token_latency"],
                engine_capacity=raw["cost"]["engine_capacity"],
                reward_latency=raw["cost"]["reward_latency"],
            ),
            beam=BeamConfig(
                beam_width=raw["beam"]["beam_width"],
                candidates_per_beam=raw["beam"]["candidates_per_beam"],
                max_depth=raw["beam"]["max_depth"],
                positive_exit_enabled=self.positive_exit,
            ),
            mode=self.mode,
            positive_exit=self.positive_exit,
            negative_exit=self.negative_exit,
            rollout_budget=search["rollout_budget"],
            depth_cap=search["depth_cap"],
            expand_width=search["expand_width"],
            tick_interval=sched["tick_interval"],
            arrival_process=raw["simulator"]["arrival_process"],
            event_cap=raw["simulator"]["event_cap"],
        )

    def build_workload(self):
        w = self.raw["workload"]
        return make_workload(
            count=w["count"],
            mixture=tuple(w["mixture"]),
            seed=self.seed,
            branching=w["branching"],
            accept_threshold=self.raw["scoring"]["accept_threshold"],
        )

    def effective_dict(self) -> dict:
        out = copy.deepcopy(self.raw)
        out["effective_flags"] = {
            "mode": self.mode,
            "positive_exit": self.positive_exit,
            "negative_exit": self.negative_exit,
            "boosting": self.boosting,
        }
        return out


def _merge_strict(defaults: dict, overrides: dict, prefix: str = "") -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"config error at key '{path}': unknown key")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config error at key '{path}': expected a section")
            merged[key] = _merge_strict(defaults[key], value, prefix=f"{path}.")
        else:
            merged[key] = value
    return merged


def load_config(
    config_path: Optional[str] = None,
    preset: Optional[str] = None,
    seed: Optional[int] = None,
    rates: Optional[list[float]] = None,
    output_dir: Optional[str] = None,
    trace: bool = False,
) -> ExperimentConfig:
    """Merge file values over defaults, then apply flag overrides."""
    raw = copy.deepcopy(_DEFAULTS)
    if config_path is not None:
        try:
            with open(config_path, "rb") as handle:
                loaded = tomllib.load(handle)
        except FileNotFoundError:
            raise ConfigError(f"config error: no such file: {config_path}")
        except tomllib.TOMLDecodeError as exc:
            # tomli diagnostics carry line and column positions
            raise ConfigError(f"config error in {config_path}: {exc}")
        raw = _merge_strict(raw, loaded)
    if preset is not None:
        raw["preset"] = preset
    if seed is not None:
        raw["seed"] = seed
    if rates is not None:
        raw["arrival_rates"] = rates
    if output_dir is not None:
        raw["output_dir"] = output_dir
    return ExperimentConfig(raw, trace=trace)


_SWEEP_HEADER = (
    "preset,rate,p50_latency,p99_latency,throughput,total_tokens,solve_rate,"
    "positive,negative,budget_exhausted,beam_finished"
)


def run_experiment(config: ExperimentConfig) -> int:
    """Run the sweep and write per-rate reports plus a combined table.

    All results are computed before anything is written, so a failing run
    leaves no partial outputs.
    """
    workload = config.build_workload()
    results = []
    for rate in config.arrival_rates:
        trace: Optional[list] = [] if config.trace else None
        records = run(workload, rate, config.simulation, config.seed, trace=trace)
        results.append((rate, records, summarize(records), trace))

    config.output_dir.mkdir(parents=True, exist_ok=True)
    sweep_lines = [_SWEEP_HEADER]
    for rate, records, stats, trace in results:
        stem = f"{config.preset}_{rate:g}"
        (config.output_dir / f"{stem}.csv").write_text(records_to_csv(records))
        (config.output_dir / f"{stem}.json").write_text(stats.to_json() + "\n")
        if trace is not None:
            lines = "".join(json.dumps(entry, sort_keys=True) + "\n" for entry in trace)
            (config.output_dir / f"{stem}_trace.jsonl").write_text(lines)
        hist = stats.exit_histogram
        sweep_lines.append(
            f"{config.preset},{rate:g},{stats.p50_latency:.6f},{stats.p99_latency:.6f},"
            f"{stats.throughput:.6f},{stats.total_tokens},{stats.solve_rate:.6f},"
            f"{hist['positive']},{hist['negative']},{hist['budget_exhausted']},"
            f"{hist['beam_finished']}"
        )
    (config.output_dir / f"{config.preset}_sweep.csv").write_text(
        "\n".join(sweep_lines) + "\n"
    )
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="treeserve",
        description="Run serving simulations of tree-search reasoning workloads.",
    )
    parser.add_argument("--config", help="TOML experiment config file")
    parser.add_argument("--preset", choices=PRESETS, help="system preset to run")
    parser.add_argument("--seed", type=int, help="overrides the config file seed")
    parser.add_argument(
        "--rates", help="comma-separated arrival rates (requests/second)"
    )
    parser.add_argument("--out", help="output directory")
    parser.add_argument(
        "--print-config", action="store_true", help="dump the effective config and exit"
    )
    parser.add_argument(
        "--trace", action="store_true", help="write per-event JSONL traces"
    )
    args = parser.parse_args(argv)

    rates = None
    if args.rates is not None:
        try:
            rates = [float(r) for r in args.rates.split(",") if r.strip()]
        except ValueError:
            print(f"config error at flag '--rates': {args.rates!r}", file=sys.stderr)
            return 2
    try:
        config = load_config(
            config_path=args.config,
            preset=args.preset,
            seed=args.seed,
            rates=rates,
            output_dir=args.out,
            trace=args.trace,
        )
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    if args.print_config:
        print(json.dumps(config.effective_dict(), indent=2, sort_keys=True))
        return 0
    return run_experiment(config)


if __name__ == "__main__":
    sys.exit(main())

# NOTES:
# The four Monte-Carlo experiments: SINR CDFs of the baselines, the distance-pruning sweep, max-min fairness on
# cell-edge drops and the energy / outage trade-off of the sleep policies.
#
# Every drop is an independent task: it rebuilds its own random streams from (seed, drop, block), so drops fan
# out to a process pool and the results come back in drop order. Results are a pure function of the config.

from __future__ import annotations

import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import logfire_api as logfire
import numpy as np
import pandas as pd
from rich.progress import track

from _utils.utils import Utils
from ramimo.channels import (
    ChannelRealization,
    LargeScale,
    access_point_large_scale,
    compute_large_scale,
    draw_channels,
)
from ramimo.energy import (
    PowerModel,
    RepeaterState,
    SleepRule,
    decide_states,
    long_term_schedule,
    observe_activations,
    outage_probability,
    schedule_min_se,
    short_term_schedule,
    total_power,
)
from ramimo.geometry import (
    Deployment,
    ScenarioConfig,
    access_point_grid,
    build_deployment,
    prune_by_bs_distance,
)
from ramimo.harness.config import ExperimentConfig
from ramimo.harness.records import RESULT_COLUMNS, TRACE_COLUMNS, MetricRecord
from ramimo.mimo import cfmmimo_sinr, lmmse_sinrs, max_pow_alpha, spectral_efficiency
from ramimo.optimizer.ccp import CcpStatus, maxmin_ccp


class System(Enum):
    MassiveMimo = "mMIMO"
    CellFree = "cfmMIMO"
    MaxPow = "RA-MIMO MaxPow"
    MaxMin = "RA-MIMO MaxMin"


class Policy(Enum):
    MaxPow = "MaxPow"
    LongOr = "MinPow-long-OR"
    LongMajority = "MinPow-long-majority"
    ShortOr = "MinPow-short-OR"
    ShortMajority = "MinPow-short-majority"


@dataclass
class DropResult:
    rows: list[dict] = field(default_factory=list)
    traces: list[pd.DataFrame] = field(default_factory=list)
    runs: int = 0
    failures: int = 0
    timings: dict[str, float] = field(default_factory=lambda: defaultdict(float))


class StageTimer:
    def __init__(self, timings: dict[str, float], stage: str):
        self.timings = timings
        self.stage = stage

    def __enter__(self) -> StageTimer:
        self.started = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.timings[self.stage] += time.perf_counter() - self.started


def to_db(sinr: np.ndarray | float) -> np.ndarray | float:
    return Utils.linear_to_db(sinr)


#----------------------#
#   DRAWS              #
#----------------------#

def drop_setup(config: ExperimentConfig, scenario: ScenarioConfig, drop: int) -> tuple[Deployment, LargeScale]:
    """Deployment and large-scale fading of one drop; identical UE positions for every repeater count."""
    rng = Utils.rng_for(config.seed, drop, 0)
    deployment = build_deployment(scenario, rng, config.ue_distribution)
    return deployment, compute_large_scale(scenario, deployment, rng)


def block_realization(
    config: ExperimentConfig,
    scenario: ScenarioConfig,
    deployment: Deployment,
    large_scale: LargeScale,
    drop: int,
    block: int,
) -> ChannelRealization:
    return draw_channels(scenario, deployment, large_scale, Utils.rng_for(config.seed, drop, block + 1))


def cell_free_sinrs(config: ExperimentConfig, scenario: ScenarioConfig, deployment: Deployment, drop: int) -> list[np.ndarray]:
    """Per-block cell-free SINRs of a drop, on streams of their own so the RA-MIMO draws stay untouched."""
    aps = access_point_grid(scenario)
    large_scale = access_point_large_scale(scenario, aps, deployment.ue_positions, Utils.rng_for(config.seed, drop, 0, 1))
    return [
        cfmmimo_sinr(aps, deployment.ue_positions, scenario, Utils.rng_for(config.seed, drop, block + 1, 1), large_scale)
        for block in range(config.blocks_per_drop)
    ]


def _ue_rows(sinrs: np.ndarray, **labels) -> list[dict]:
    return [{**labels, "ue": k, "sinr_db": float(to_db(s))} for k, s in enumerate(sinrs)]


#----------------------#
#   PER-DROP TASKS     #
#----------------------#

def sinr_cdf_drop(config: ExperimentConfig, drop: int) -> DropResult:
    result = DropResult()

    for i, count in enumerate(config.repeater_counts):
        scenario = config.scenario.with_repeaters(count)
        with StageTimer(result.timings, "draw"):
            deployment, large_scale = drop_setup(config, scenario, drop)

        for block in range(config.blocks_per_drop):
            with StageTimer(result.timings, "draw"):
                real = block_realization(config, scenario, deployment, large_scale, drop, block)
            with StageTimer(result.timings, "evaluate"):
                if i == 0:
                    mmimo = lmmse_sinrs(real, np.zeros(real.num_repeaters))
                    result.rows += _ue_rows(mmimo, system=System.MassiveMimo.value, L=0, drop=drop, block=block)
                sinrs = lmmse_sinrs(real, max_pow_alpha(real, scenario))
                result.rows += _ue_rows(sinrs, system=System.MaxPow.value, L=count, drop=drop, block=block)

        if i == 0 and config.include_cfmmimo:
            with StageTimer(result.timings, "cell-free"):
                for block, sinrs in enumerate(cell_free_sinrs(config, scenario, deployment, drop)):
                    result.rows += _ue_rows(sinrs, system=System.CellFree.value, L=0, drop=drop, block=block)

    return result


def pruning_sweep_drop(config: ExperimentConfig, drop: int) -> DropResult:
    result = DropResult()
    scenario = config.scenario

    with StageTimer(result.timings, "draw"):
        deployment, large_scale = drop_setup(config, scenario, drop)
        blocks = [
            block_realization(config, scenario, deployment, large_scale, drop, block)
            for block in range(config.blocks_per_drop)
        ]

    with StageTimer(result.timings, "evaluate"):
        for threshold in config.prune_thresholds_m:
            pruned = prune_by_bs_distance(deployment, threshold)
            removed = 1.0 - pruned.num_active / max(pruned.num_repeaters, 1)
            for block, real in enumerate(blocks):
                sinrs = lmmse_sinrs(real, max_pow_alpha(real, scenario, pruned.active_mask))
                result.rows += _ue_rows(
                    sinrs, threshold_m=float(threshold), removed_fraction=removed, drop=drop, block=block,
                )

    return result


def maxmin_edge_drop(config: ExperimentConfig, drop: int) -> DropResult:
    result = DropResult()
    scenario = config.scenario

    with StageTimer(result.timings, "draw"):
        deployment, large_scale = drop_setup(config, scenario, drop)

    cell_free = []
    if config.include_cfmmimo:
        with StageTimer(result.timings, "cell-free"):
            cell_free = cell_free_sinrs(config, scenario, deployment, drop)

    def row(system: System, block: int, floor: float, iterations: int = 0, status: str = "") -> dict:
        return {
            "system": system.value, "drop": drop, "block": block,
            "min_sinr_db": float(to_db(floor)), "iterations": iterations, "status": status,
        }

    for block in range(config.blocks_per_drop):
        with StageTimer(result.timings, "draw"):
            real = block_realization(config, scenario, deployment, large_scale, drop, block)

        with StageTimer(result.timings, "evaluate"):
            result.rows.append(row(System.MassiveMimo, block, lmmse_sinrs(real, np.zeros(real.num_repeaters)).min()))
            if cell_free:
                result.rows.append(row(System.CellFree, block, cell_free[block].min()))
            result.rows.append(row(System.MaxPow, block, lmmse_sinrs(real, max_pow_alpha(real, scenario)).min()))

        with StageTimer(result.timings, "optimize"):
            outcome = maxmin_ccp(real, scenario, config.optimizer)
        result.rows.append(row(System.MaxMin, block, outcome.sinr_floor, outcome.iterations, outcome.status.value))

        result.runs += 1
        result.failures += int(outcome.status is CcpStatus.MaxIterations)
        if config.trace:
            result.traces.append(outcome.trace.to_frame(drop=drop, block=block))

    return result


def energy_tradeoff_drop(config: ExperimentConfig, drop: int) -> DropResult:
    result = DropResult()
    scenario = config.scenario
    energy = config.energy
    model = PowerModel.from_scenario(scenario)

    with StageTimer(result.timings, "draw"):
        deployment, large_scale = drop_setup(config, scenario, drop)
        blocks = [
            block_realization(config, scenario, deployment, large_scale, drop, block)
            for block in range(config.blocks_per_drop)
        ]

    with StageTimer(result.timings, "observe"):
        indicators, outcomes = observe_activations(blocks[:energy.observation_blocks], scenario, energy, config.optimizer)
    result.runs += len(outcomes)
    result.failures += sum(o.status is CcpStatus.MaxIterations for o in outcomes)
    if config.trace:
        result.traces += [o.trace.to_frame(drop=drop, block=t) for t, o in enumerate(outcomes)]

    states = {rule: decide_states(indicators, rule) for rule in SleepRule}
    with StageTimer(result.timings, "schedule"):
        schedules = {
            Policy.MaxPow: long_term_schedule([RepeaterState.Active] * scenario.num_repeaters, blocks, scenario),
            Policy.LongOr: long_term_schedule(states[SleepRule.Or], blocks, scenario),
            Policy.LongMajority: long_term_schedule(states[SleepRule.Majority], blocks, scenario),
        }
    with StageTimer(result.timings, "optimize"):
        for policy, rule in ((Policy.ShortOr, SleepRule.Or), (Policy.ShortMajority, SleepRule.Majority)):
            schedules[policy], short_outcomes = short_term_schedule(
                states[rule], blocks, energy.sinr_threshold, scenario, config.optimizer,
            )
            result.runs += len(short_outcomes)
            result.failures += sum(o.status is CcpStatus.MaxIterations for o in short_outcomes)

    with StageTimer(result.timings, "evaluate"):
        for policy, schedule in schedules.items():
            min_se = schedule_min_se(schedule, blocks)
            result.rows.append({
                "policy": policy.value,
                "drop": drop,
                "mean_power_w": total_power(schedule, blocks, model),
                "mean_min_se": float(min_se.mean()),
                "outage": outage_probability(min_se[None, :], energy.se_target, energy.outage_mode),
                "active_repeaters": int(schedule.active_mask.sum()),
                "fallback_blocks": int(schedule.fallback.sum()),
            })

    return result


#----------------------#
#   FAN-OUT            #
#----------------------#

def run_drops(config: ExperimentConfig, task: Callable[[ExperimentConfig, int], DropResult], show_progress: bool = True) -> list[DropResult]:
    """Runs `task` for every drop, in a process pool when more than one worker is configured."""
    description = f"{config.experiment} ({config.drops} drops)"
    drops = range(config.drops)

    if config.workers <= 1:
        return [task(config, d) for d in track(drops, description=description, disable=not show_progress)]

    with ProcessPoolExecutor(max_workers=config.workers) as executor:
        futures = executor.map(task, [config] * config.drops, drops)
        return list(track(futures, description=description, total=config.drops, disable=not show_progress))


def _collect(config: ExperimentConfig, results: list[DropResult], started: float) -> MetricRecord:
    columns = RESULT_COLUMNS[config.experiment]
    rows = [row for r in results for row in r.rows]
    traces = [t for r in results for t in r.traces]

    timings: dict[str, float] = defaultdict(float)
    for r in results:
        for stage, seconds in r.timings.items():
            timings[stage] += seconds
    timings["total"] = time.perf_counter() - started

    return MetricRecord(
        experiment=config.experiment,
        results=pd.DataFrame.from_records(rows, columns=columns),
        traces=pd.concat(traces, ignore_index=True).reindex(columns=TRACE_COLUMNS) if traces
        else pd.DataFrame(columns=TRACE_COLUMNS),
        timings=dict(timings),
        runs=sum(r.runs for r in results),
        failures=sum(r.failures for r in results),
    )


def _percentile_summary(frame: pd.DataFrame, keys: list[str], value: str) -> pd.DataFrame:
    if frame.empty:
        return pd.DataFrame(columns=keys + ["samples", "p10_db", "p50_db"])
    grouped = frame.groupby(keys, sort=False)[value]
    return pd.DataFrame({
        "samples": grouped.size(),
        "p10_db": grouped.quantile(0.10),
        "p50_db": grouped.quantile(0.50),
    }).reset_index()


#----------------------#
#   EXPERIMENTS        #
#----------------------#

def run_sinr_cdf(config: ExperimentConfig, show_progress: bool = True) -> MetricRecord:
    started = time.perf_counter()
    with logfire.span("sinr-cdf", drops=config.drops, repeater_counts=config.repeater_counts):
        record = _collect(config, run_drops(config, sinr_cdf_drop, show_progress), started)
    record.summary = _percentile_summary(record.results, ["system", "L"], "sinr_db")
    return record


def run_pruning_sweep(config: ExperimentConfig, show_progress: bool = True) -> MetricRecord:
    started = time.perf_counter()
    with logfire.span("pruning-sweep", drops=config.drops, thresholds=config.prune_thresholds_m):
        record = _collect(config, run_drops(config, pruning_sweep_drop, show_progress), started)
    record.summary = _percentile_summary(record.results, ["threshold_m", "removed_fraction"], "sinr_db")
    return record


def run_maxmin_edge(config: ExperimentConfig, show_progress: bool = True) -> MetricRecord:
    started = time.perf_counter()
    with logfire.span("maxmin-edge", drops=config.drops, distribution=config.ue_distribution.value):
        record = _collect(config, run_drops(config, maxmin_edge_drop, show_progress), started)
    record.summary = _percentile_summary(record.results, ["system"], "min_sinr_db")
    return record


def run_energy_tradeoff(config: ExperimentConfig, show_progress: bool = True) -> MetricRecord:
    started = time.perf_counter()
    with logfire.span("energy-tradeoff", drops=config.drops, se_target=config.energy.se_target):
        record = _collect(config, run_drops(config, energy_tradeoff_drop, show_progress), started)

    results = record.results
    if results.empty:
        record.summary = pd.DataFrame(columns=["policy", "mean_power_w", "reduction_pct", "mean_min_se", "outage"])
        return record

    summary = results.groupby("policy", sort=False).agg(
        mean_power_w=("mean_power_w", "mean"),
        mean_min_se=("mean_min_se", "mean"),
        outage=("outage", "mean"),
    ).reset_index()
    baseline = float(summary.loc[summary["policy"] == Policy.MaxPow.value, "mean_power_w"].iloc[0])
    summary.insert(2, "reduction_pct", 100.0 * (1.0 - summary["mean_power_w"] / baseline))
    record.summary = summary
    return record


EXPERIMENTS: dict[str, Callable[[ExperimentConfig, bool], MetricRecord]] = {
    "sinr-cdf": run_sinr_cdf,
    "pruning-sweep": run_pruning_sweep,
    "maxmin-edge": run_maxmin_edge,
    "energy-tradeoff": run_energy_tradeoff,
}


def run_experiment(config: ExperimentConfig, show_progress: bool = True) -> MetricRecord:
    return EXPERIMENTS[config.experiment](config, show_progress)

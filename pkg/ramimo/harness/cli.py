# NOTES:
# Command-line surface: one subcommand per experiment, plus `solve` (one-shot optimizer on a dumped realization),
# `draw` (dump a realization bundle) and `presets`.
#
# Exit codes: 0 success, 2 configuration error, 3 optimizer non-convergence on more than 5% of runs.

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import logfire_api as logfire
import numpy as np
from colorama import Fore
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from _utils.utils import Utils
from ramimo.channels import ChannelRealization
from ramimo.energy import se_to_sinr_threshold
from ramimo.errors import ConfigError, RamimoError, ScenarioError
from ramimo.harness.config import PRESETS, ExperimentConfig, load_config
from ramimo.harness.experiments import block_realization, drop_setup, run_experiment
from ramimo.harness.records import MetricRecord, emit_csv, emit_manifest, emit_trace
from ramimo.optimizer.ccp import CcpStatus, maxmin_ccp, minpow_fpp

EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
MAX_FAILURE_RATE = 0.05

console = Console()


def fail(message: str, code: int):
    print(Fore.MAGENTA + f"Error: {message}" + Fore.RESET, file=sys.stderr)
    sys.exit(code)


def config_options(command):
    @click.option("--preset", type=str, default=None, help="Named preset, see `ramimo presets`.")
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                  help="YAML / JSON config file or a previous manifest.json.")
    @click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                  help="Dotted override, e.g. --set scenario.num_ues=4 (repeatable).")
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        return command(*args, **kwargs)

    return wrapper


def experiment_options(command):
    @config_options
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory.")
    @click.option("--workers", type=int, default=None, help="Worker processes for the drops.")
    @click.option("--trace/--no-trace", default=None, help="Write per-iteration optimizer traces.")
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        return command(*args, **kwargs)

    return wrapper


def resolve(experiment: str | None, preset, config_path, overrides, **explicit) -> ExperimentConfig:
    try:
        return load_config(experiment, preset, config_path, list(overrides), **explicit)
    except (ConfigError, ScenarioError) as e:
        fail(str(e), EXIT_CONFIG)


def print_summary(record: MetricRecord):
    table = Table(title=f"{record.experiment} summary")
    for column in record.summary.columns:
        table.add_column(str(column))
    for row in record.summary.itertuples(index=False):
        table.add_row(*[f"{v:.3f}" if isinstance(v, float) else str(v) for v in row])
    console.print(table)

    timings = ", ".join(f"{stage} {seconds:.1f}s" for stage, seconds in record.timings.items())
    console.print(f"[dim]wall clock: {timings}[/dim]")


def run_and_emit(experiment: str, preset, config_path, overrides, out_dir, workers, trace):
    config = resolve(experiment, preset, config_path, overrides, out_dir=out_dir, workers=workers, trace=trace)

    try:
        record = run_experiment(config)
    except (ScenarioError, ConfigError) as e:
        fail(str(e), EXIT_CONFIG)

    out = Path(config.out_dir)
    emit_csv(record, out / "results.csv")
    emit_manifest(record, config, out / "manifest.json")
    if config.trace:
        emit_trace(record, out / "trace.csv")

    print_summary(record)
    console.print(f"[green]wrote {out / 'results.csv'}[/green]")

    if record.failure_rate > MAX_FAILURE_RATE:
        logfire.warn("optimizer failed to converge on {rate:.1%} of runs", rate=record.failure_rate)
        fail(
            f"optimizer did not converge on {record.failures} of {record.runs} runs ({record.failure_rate:.1%})",
            EXIT_NONCONVERGENCE,
        )


@click.group()
def cli():
    """Uplink repeater-assisted massive MIMO simulator."""
    load_dotenv()
    logfire.configure(send_to_logfire="if-token-present")


@cli.command("sinr-cdf")
@experiment_options
def sinr_cdf(preset, config_path, overrides, out_dir, workers, trace):
    """SINR CDFs of mMIMO, RA-MIMO MaxPow per repeater count and cell-free mMIMO."""
    run_and_emit("sinr-cdf", preset, config_path, overrides, out_dir, workers, trace)


@cli.command("pruning-sweep")
@experiment_options
def pruning_sweep(preset, config_path, overrides, out_dir, workers, trace):
    """SINR CDFs as the repeaters closest to the BS are switched off."""
    run_and_emit("pruning-sweep", preset, config_path, overrides, out_dir, workers, trace)


@cli.command("maxmin-edge")
@experiment_options
def maxmin_edge(preset, config_path, overrides, out_dir, workers, trace):
    """Minimum UE SINR per drop under max-min amplification and the baselines."""
    run_and_emit("maxmin-edge", preset, config_path, overrides, out_dir, workers, trace)


@cli.command("energy-tradeoff")
@experiment_options
def energy_tradeoff(preset, config_path, overrides, out_dir, workers, trace):
    """Power consumption and SE outage of MaxPow and the sleep policies."""
    run_and_emit("energy-tradeoff", preset, config_path, overrides, out_dir, workers, trace)


@cli.command("draw")
@config_options
@click.option("--drop", type=int, default=0, show_default=True)
@click.option("--block", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True, help="Realization JSON file.")
def draw(preset, config_path, overrides, drop, block, out_path):
    """Dump one coherence block's channels as a JSON bundle."""
    config = resolve(None, preset, config_path, overrides)
    try:
        deployment, large_scale = drop_setup(config, config.scenario, drop)
        realization = block_realization(config, config.scenario, deployment, large_scale, drop, block)
    except ScenarioError as e:
        fail(str(e), EXIT_CONFIG)

    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(realization.to_json(), encoding="utf-8")
    console.print(
        f"[green]wrote {path}[/green] (M={realization.num_antennas}, "
        f"L={realization.num_repeaters}, K={realization.num_ues})"
    )


@cli.command("solve")
@config_options
@click.option("--realization", "realization_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--mode", type=click.Choice(["maxmin", "minpow"]), default="maxmin", show_default=True)
@click.option("--se-target", type=float, default=None, help="MinPow SE target; defaults to the configured one.")
@click.option("--trace-out", type=click.Path(dir_okay=False), default=None, help="CSV of the iteration trace.")
def solve(preset, config_path, overrides, realization_path, mode, se_target, trace_out):
    """Run the optimizer once on a dumped realization."""
    config = resolve(None, preset, config_path, overrides)

    try:
        realization = ChannelRealization.from_json(Path(realization_path).read_text(encoding="utf-8"))
        scenario = config.scenario
        if mode == "maxmin":
            outcome = maxmin_ccp(realization, scenario, config.optimizer)
        else:
            threshold = se_to_sinr_threshold(se_target if se_target is not None else config.energy.se_target)
            outcome = minpow_fpp(realization, scenario, threshold, config.optimizer)
    except (RamimoError, ValueError, KeyError) as e:
        fail(str(e), EXIT_CONFIG)

    if trace_out:
        outcome.trace.to_frame().to_csv(trace_out, index=False, float_format="%.10g")

    console.print_json(json.dumps({
        "mode": mode,
        "status": outcome.status.value,
        "iterations": outcome.iterations,
        "feasible": outcome.feasible,
        "sinr_floor_db": float(Utils.linear_to_db(outcome.sinr_floor)),
        "sinrs_db": np.round(Utils.linear_to_db(outcome.sinrs), 4).tolist(),
        "objective": outcome.objective,
        "alpha": outcome.alpha.tolist(),
        "seconds": round(outcome.seconds, 3),
    }))

    if outcome.status is CcpStatus.MaxIterations:
        sys.exit(EXIT_NONCONVERGENCE)


@cli.command("presets")
def presets():
    """List the named presets."""
    table = Table(title="presets")
    table.add_column("name")
    table.add_column("settings")
    for name, values in PRESETS.items():
        table.add_row(name, json.dumps(values) if values else "(scenario defaults)")
    console.print(table)

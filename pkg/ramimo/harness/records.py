# NOTES:
# Metric records produced by the experiments and the artifacts written from them:
# results.csv, manifest.json (resolved config, seed, git describe, stage timings, summary) and trace.csv.

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import git
import logfire_api as logfire
import pandas as pd

from ramimo.harness.config import ExperimentConfig, config_to_dict

# documented headers of results.csv per experiment
RESULT_COLUMNS: dict[str, list[str]] = {
    "sinr-cdf": ["system", "L", "drop", "block", "ue", "sinr_db"],
    "pruning-sweep": ["threshold_m", "removed_fraction", "drop", "block", "ue", "sinr_db"],
    "maxmin-edge": ["system", "drop", "block", "min_sinr_db", "iterations", "status"],
    "energy-tradeoff": [
        "policy", "drop", "mean_power_w", "mean_min_se", "outage", "active_repeaters", "fallback_blocks",
    ],
}

TRACE_COLUMNS = [
    "drop", "block", "iteration", "objective", "min_sinr", "max_slack", "relative_change", "status", "solve_seconds",
]


@dataclass
class MetricRecord:
    experiment: str
    results: pd.DataFrame
    summary: pd.DataFrame = field(default_factory=pd.DataFrame)
    traces: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=TRACE_COLUMNS))
    timings: dict[str, float] = field(default_factory=dict)
    runs: int = 0
    failures: int = 0

    @property
    def failure_rate(self) -> float:
        return self.failures / self.runs if self.runs else 0.0

    @staticmethod
    def empty(experiment: str) -> MetricRecord:
        return MetricRecord(experiment=experiment, results=pd.DataFrame(columns=RESULT_COLUMNS[experiment]))


def git_describe() -> str:
    try:
        repo = git.Repo(search_parent_directories=True)
        return repo.git.describe("--always", "--dirty", "--tags")
    except (git.InvalidGitRepositoryError, git.NoSuchPathError, git.GitCommandError) as e:
        logfire.debug("no git description available: {error}", error=str(e))
        return "unknown"


def _write_frame(frame: pd.DataFrame, columns: list[str], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.reindex(columns=columns).to_csv(path, index=False, float_format="%.10g")
    return path


def emit_csv(record: MetricRecord, path: str | Path) -> Path:
    """results.csv with the experiment's documented headers; an empty record writes headers only."""
    return _write_frame(record.results, RESULT_COLUMNS[record.experiment], Path(path))


def emit_trace(record: MetricRecord, path: str | Path) -> Path:
    return _write_frame(record.traces, TRACE_COLUMNS, Path(path))


def emit_manifest(record: MetricRecord, config: ExperimentConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "experiment": record.experiment,
        "seed": config.seed,
        "git_describe": git_describe(),
        "config": config_to_dict(config),
        "timings_s": record.timings,
        "runs": record.runs,
        "failures": record.failures,
        "summary": json.loads(record.summary.to_json(orient="records")) if not record.summary.empty else [],
    }
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path

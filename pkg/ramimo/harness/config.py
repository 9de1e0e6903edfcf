# NOTES:
# Experiment configuration, resolved in layers: environment defaults -> named preset -> config file (YAML, JSON,
# or a previous run's manifest.json) -> dotted --set overrides. The result is one validated ExperimentConfig.

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any, Literal, Optional

from typing_extensions import Self

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from ramimo.energy import EnergyConfig
from ramimo.errors import ConfigError
from ramimo.geometry import ScenarioConfig, UeDistribution
from ramimo.optimizer.ccp import OptimizerConfig

Experiment = Literal["sinr-cdf", "pruning-sweep", "maxmin-edge", "energy-tradeoff"]

DEFAULT_PRUNE_THRESHOLDS_M = [0.0, 300.0, 450.0, 600.0, 700.0, 800.0, 1000.0, 1500.0]


class ExperimentConfig(BaseModel):
    experiment: Experiment = Field(default="sinr-cdf")
    preset: Optional[str] = Field(default=None, description="Preset the configuration started from")
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    energy: EnergyConfig = Field(default_factory=EnergyConfig)
    drops: int = Field(default=100, ge=1, description="UE setups")
    blocks_per_drop: int = Field(default=50, ge=1, description="Coherence blocks per setup")
    seed: int = Field(default=0, description="Master seed of every random stream")
    workers: int = Field(default=1, ge=1, description="Processes the drops fan out to")
    repeater_counts: list[int] = Field(default_factory=lambda: [16, 64, 100, 400], description="L values of the SINR CDF")
    prune_thresholds_m: list[float] = Field(default_factory=lambda: list(DEFAULT_PRUNE_THRESHOLDS_M))
    ue_distribution: UeDistribution = Field(default=UeDistribution.Uniform)
    include_cfmmimo: bool = Field(default=True, description="Evaluate the cell-free reference")
    out_dir: str = Field(default="results")
    trace: bool = Field(default=False, description="Write per-iteration optimizer traces")

    @model_validator(mode="after")
    def check_experiment(self) -> Self:
        if self.energy.observation_blocks > self.blocks_per_drop and self.experiment == "energy-tradeoff":
            raise ConfigError("observation window is longer than a setup")
        for count in self.repeater_counts if self.experiment == "sinr-cdf" else []:
            self.scenario.with_repeaters(count)
        return self


PRESETS: dict[str, dict[str, Any]] = {
    "defaults": {},
    "sinr-cdf-full": {
        "experiment": "sinr-cdf",
        "scenario": {"num_bs_antennas": 64, "num_ues": 8},
        "repeater_counts": [16, 64, 100, 400],
        "drops": 100, "blocks_per_drop": 50,
    },
    "sinr-cdf-desk": {
        "experiment": "sinr-cdf",
        "scenario": {"num_bs_antennas": 16, "num_ues": 4, "num_repeaters": 16},
        "repeater_counts": [16],
        "drops": 20, "blocks_per_drop": 10,
    },
    "pruning-sweep-full": {
        "experiment": "pruning-sweep",
        "scenario": {"num_bs_antennas": 64, "num_repeaters": 64, "num_ues": 8},
        "drops": 100, "blocks_per_drop": 50,
    },
    "pruning-sweep-desk": {
        "experiment": "pruning-sweep",
        "scenario": {"num_bs_antennas": 16, "num_repeaters": 64, "num_ues": 4},
        "drops": 20, "blocks_per_drop": 10,
    },
    "maxmin-edge-full": {
        "experiment": "maxmin-edge",
        "scenario": {"num_bs_antennas": 64, "num_repeaters": 64, "num_ues": 8},
        "ue_distribution": "cell-edge",
        "drops": 100, "blocks_per_drop": 1,
    },
    "maxmin-edge-desk": {
        "experiment": "maxmin-edge",
        "scenario": {"num_bs_antennas": 16, "num_repeaters": 16, "num_ues": 4},
        "ue_distribution": "cell-edge",
        "drops": 10, "blocks_per_drop": 1,
    },
    "energy-tradeoff-full": {
        "experiment": "energy-tradeoff",
        "scenario": {"num_bs_antennas": 64, "num_repeaters": 64, "num_ues": 4},
        "energy": {"observation_blocks": 5, "se_target": 1.5},
        "include_cfmmimo": False,
        "drops": 100, "blocks_per_drop": 50,
    },
    "energy-tradeoff-desk": {
        "experiment": "energy-tradeoff",
        "scenario": {"num_bs_antennas": 16, "num_repeaters": 16, "num_ues": 2},
        "energy": {"observation_blocks": 5, "se_target": 1.5},
        "include_cfmmimo": False,
        "drops": 5, "blocks_per_drop": 10,
    },
}


def deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(text: str) -> dict:
    """
    'scenario.num_ues=4' -> {'scenario': {'num_ues': 4}}; the value is read with YAML scalar rules.

    Example call: parse_override("optimizer.solver=ECOS")
    """
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form key=value")

    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"override '{text}' has an empty key")

    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse value of '{key}': {e}") from e

    nested: dict = {parts[-1]: value}
    for part in reversed(parts[:-1]):
        nested = {part: nested}
    return nested


def read_config_file(path: str | Path) -> dict:
    """YAML or JSON mapping; a run manifest contributes its resolved `config` section."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse config file {path}: {e}") from e

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    if "config" in data and "git_describe" in data:
        return data["config"]
    return data


def environment_defaults() -> dict:
    """RAMIMO_WORKERS, RAMIMO_OUT_DIR and RAMIMO_SOLVER, when set."""
    defaults: dict = {}
    if workers := os.getenv("RAMIMO_WORKERS"):
        if not workers.strip().isdigit():
            raise ConfigError(f"RAMIMO_WORKERS must be a positive integer, got '{workers}'")
        defaults["workers"] = int(workers)
    if out_dir := os.getenv("RAMIMO_OUT_DIR"):
        defaults["out_dir"] = out_dir
    if solver := os.getenv("RAMIMO_SOLVER"):
        defaults["optimizer"] = {"solver": solver}
    return defaults


def load_config(
    experiment: Experiment | None = None,
    preset: str | None = None,
    config_path: str | Path | None = None,
    overrides: list[str] | tuple[str, ...] = (),
    **explicit: Any,
) -> ExperimentConfig:
    """
    Resolves every configuration layer into a validated ExperimentConfig.

    Args:
        experiment (Experiment | None): experiment the configuration is for; None keeps the file's choice.
        preset (str | None): name in PRESETS.
        config_path (str | Path | None): YAML / JSON file or manifest.json.
        overrides (list[str]): dotted key=value strings, applied last but before `explicit`.
        explicit: top-level values from dedicated CLI flags (None values are ignored).
    Returns:
        ExperimentConfig: the resolved configuration.
    """
    layers = [environment_defaults()]

    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset '{preset}'; known: {sorted(PRESETS)}")
        layers.append({**PRESETS[preset], "preset": preset})

    if config_path is not None:
        layers.append(read_config_file(config_path))

    layers.extend(parse_override(o) for o in overrides)
    layers.append({k: v for k, v in explicit.items() if v is not None})
    if experiment is not None:
        layers.append({"experiment": experiment})

    merged: dict = {}
    for layer in layers:
        merged = deep_merge(merged, layer)

    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration:\n{e}") from e


def config_to_dict(config: ExperimentConfig) -> dict:
    return json.loads(config.model_dump_json())

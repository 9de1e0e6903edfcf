# NOTES:
# Repeater energy control: the power-consumption model, activation thresholding of optimized gains, the OR and
# majority sleep rules, and the long-term (MaxPow on the awake set) vs short-term (MinPow on the awake set)
# amplification policies.
#
# Sleep decisions come from the first T coherence blocks of a setup; the resulting schedule then runs on every
# block of that setup.

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal, Sequence

from typing_extensions import Self

import logfire_api as logfire
import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, Field, model_validator

from ramimo.channels import ChannelRealization
from ramimo.errors import ScenarioError
from ramimo.geometry import ScenarioConfig
from ramimo.mimo import gain_upper_bounds, lmmse_sinrs, max_pow_alpha, repeater_output_powers, spectral_efficiency
from ramimo.optimizer.ccp import CcpOutcome, OptimizerConfig, minpow_fpp


class RepeaterState(Enum):
    Active = "active"
    Sleep = "sleep"


class SleepRule(Enum):
    Or = "or"
    Majority = "majority"


class PowerModel(BaseModel):
    p_stat: float = Field(default=24.26, gt=0, description="Static consumption of an awake repeater (W)")
    delta_p: float = Field(default=2.0, gt=0, description="Slope of the load-dependent consumption")
    p_sleep: float = Field(default=4.72, gt=0, description="Consumption of a sleeping repeater (W)")

    @model_validator(mode="after")
    def check_sleep_below_static(self) -> Self:
        if self.p_sleep >= self.p_stat:
            raise ScenarioError("sleep power must be below the static power")
        return self

    @staticmethod
    def from_scenario(config: ScenarioConfig) -> PowerModel:
        return PowerModel(p_stat=config.p_stat_w, delta_p=config.delta_p, p_sleep=config.p_sleep_w)


class EnergyConfig(BaseModel):
    observation_blocks: int = Field(default=5, ge=1, description="T, blocks observed before deciding sleep states")
    se_target: float = Field(default=1.5, gt=0, description="Per-UE spectral efficiency requirement (bit/s/Hz)")
    alpha_thr_fraction: float = Field(default=0.01, ge=0, lt=1, description="Activation threshold, share of the gain cap")
    outage_mode: Literal["setup", "block"] = Field(default="setup", description="Where the SE outage event is counted")

    @property
    def sinr_threshold(self) -> float:
        return se_to_sinr_threshold(self.se_target)


@dataclass
class ActivationIndicators:
    indicators: np.ndarray  # (T, L) bool

    def __post_init__(self):
        self.indicators = np.asarray(self.indicators, dtype=bool)
        if self.indicators.ndim != 2:
            raise ValueError("activation indicators must be a T x L matrix")

    @property
    def num_blocks(self) -> int:
        return self.indicators.shape[0]

    @property
    def num_repeaters(self) -> int:
        return self.indicators.shape[1]

    def column(self, l: int) -> np.ndarray:
        return self.indicators[:, l]


@dataclass
class SleepSchedule:
    states: list[RepeaterState]
    alphas: np.ndarray                        # (B, L); zero columns for sleeping repeaters
    feasible: np.ndarray = field(default=None)  # (B,) per-block target met by the optimizer
    fallback: np.ndarray = field(default=None)  # (B,) block fell back to MaxPow on the awake set

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float).reshape(-1, len(self.states))
        num_blocks = len(self.alphas)
        self.feasible = np.ones(num_blocks, dtype=bool) if self.feasible is None else np.asarray(self.feasible, dtype=bool)
        self.fallback = np.zeros(num_blocks, dtype=bool) if self.fallback is None else np.asarray(self.fallback, dtype=bool)
        if np.any(self.alphas[:, ~self.active_mask] != 0.0):
            raise ValueError("sleeping repeaters must have zero gain in every block")

    @property
    def active_mask(self) -> np.ndarray:
        return np.array([s is RepeaterState.Active for s in self.states], dtype=bool)

    @property
    def num_blocks(self) -> int:
        return len(self.alphas)

    def to_json(self, indent: int = None) -> str:
        return json.dumps(
            {
                "states": [s.value for s in self.states],
                "alphas": self.alphas.tolist(),
                "feasible": self.feasible.tolist(),
                "fallback": self.fallback.tolist(),
            },
            indent=indent,
        )


def se_to_sinr_threshold(se_target: float) -> float:
    """SINR_th = 2^SE - 1; 1.5 bit/s/Hz maps to about 1.8284."""
    return float(2.0**se_target - 1.0)


#----------------------#
#   POWER MODEL        #
#----------------------#

def repeater_power(state: RepeaterState, p_out: float, model: PowerModel) -> float:
    """
    Consumption of one repeater in watts.

    Example call: repeater_power(RepeaterState.Active, 1.0, PowerModel())  # 26.26
    """
    if state is RepeaterState.Sleep:
        return model.p_sleep
    return model.p_stat + model.delta_p * p_out


def block_power(states: Sequence[RepeaterState], p_out: ArrayLike, model: PowerModel) -> float:
    return float(sum(repeater_power(s, float(p), model) for s, p in zip(states, np.asarray(p_out, dtype=float))))


def total_power(schedule: SleepSchedule, realizations: Sequence[ChannelRealization], model: PowerModel) -> float:
    """Mean over blocks of the summed consumption of all repeaters."""
    if len(realizations) != schedule.num_blocks:
        raise ValueError(f"{schedule.num_blocks} scheduled blocks for {len(realizations)} realizations")
    if schedule.num_blocks == 0:
        return 0.0

    powers = [
        block_power(schedule.states, repeater_output_powers(real, alpha), model)
        for real, alpha in zip(realizations, schedule.alphas)
    ]
    return float(np.mean(powers))


#----------------------#
#   SLEEP DECISIONS    #
#----------------------#

def activation_indicator(alpha: ArrayLike, alpha_thr: ArrayLike) -> np.ndarray | bool:
    """I = 1(alpha > alpha_thr), strict."""
    result = np.asarray(alpha, dtype=float) > np.asarray(alpha_thr, dtype=float)
    return bool(result) if result.ndim == 0 else result


def or_rule(column: ArrayLike) -> RepeaterState:
    return RepeaterState.Active if np.any(np.asarray(column, dtype=bool)) else RepeaterState.Sleep


def majority_rule(column: ArrayLike) -> RepeaterState:
    """Active only on a strict majority of blocks; a tie sleeps."""
    column = np.asarray(column, dtype=bool)
    return RepeaterState.Active if column.sum() > len(column) / 2 else RepeaterState.Sleep


def decide_states(indicators: ActivationIndicators, rule: SleepRule) -> list[RepeaterState]:
    decide = or_rule if rule is SleepRule.Or else majority_rule
    return [decide(indicators.column(l)) for l in range(indicators.num_repeaters)]


def observe_activations(
    realizations: Sequence[ChannelRealization],
    config: ScenarioConfig,
    energy: EnergyConfig,
    settings: OptimizerConfig | None = None,
) -> tuple[ActivationIndicators, list[CcpOutcome]]:
    """
    Runs MinPow on every observed block with all repeaters available and thresholds the gains.

    Args:
        realizations (Sequence[ChannelRealization]): the T observation blocks.
        config (ScenarioConfig): scenario caps.
        energy (EnergyConfig): SE target and activation threshold.
        settings (OptimizerConfig | None): optimizer settings for the MinPow runs.
    Returns:
        tuple[ActivationIndicators, list[CcpOutcome]]: the T x L indicators and the MinPow outcome of every block.
    """
    rows, outcomes = [], []
    for t, real in enumerate(realizations):
        outcome = minpow_fpp(real, config, energy.sinr_threshold, settings)
        threshold = energy.alpha_thr_fraction * gain_upper_bounds(real, config)
        rows.append(activation_indicator(outcome.alpha, threshold))
        outcomes.append(outcome)
        logfire.debug(
            "observation block {block}: {active} gains above threshold",
            block=t, active=int(np.sum(rows[-1])), feasible=outcome.feasible,
        )

    num_repeaters = realizations[0].num_repeaters if realizations else 0
    indicators = np.array(rows, dtype=bool).reshape(len(rows), num_repeaters)
    return ActivationIndicators(indicators=indicators), outcomes


#----------------------#
#   POLICIES           #
#----------------------#

def long_term_schedule(
    states: Sequence[RepeaterState],
    realizations: Sequence[ChannelRealization],
    config: ScenarioConfig,
) -> SleepSchedule:
    """Awake repeaters run at their per-block MaxPow gain, sleeping ones at zero."""
    states = list(states)
    mask = np.array([s is RepeaterState.Active for s in states], dtype=bool)
    alphas = np.array([max_pow_alpha(real, config, mask) for real in realizations]).reshape(len(realizations), len(states))
    return SleepSchedule(states=states, alphas=alphas)


def short_term_schedule(
    states: Sequence[RepeaterState],
    realizations: Sequence[ChannelRealization],
    sinr_thresholds: ArrayLike,
    config: ScenarioConfig,
    settings: OptimizerConfig | None = None,
) -> tuple[SleepSchedule, list[CcpOutcome]]:
    """
    MinPow per block over the awake repeaters only. A block the optimizer cannot serve falls back to MaxPow
    on the awake set and is flagged.

    Returns:
        tuple[SleepSchedule, list[CcpOutcome]]: the schedule and the MinPow outcome of every block.
    """
    states = list(states)
    mask = np.array([s is RepeaterState.Active for s in states], dtype=bool)
    alphas = np.zeros((len(realizations), len(states)))
    feasible = np.ones(len(realizations), dtype=bool)
    fallback = np.zeros(len(realizations), dtype=bool)
    outcomes = []

    for b, real in enumerate(realizations):
        outcome = minpow_fpp(real.subset(mask), config, sinr_thresholds, settings)
        outcomes.append(outcome)
        if outcome.feasible:
            alphas[b, mask] = outcome.alpha
            continue

        feasible[b] = False
        fallback[b] = True
        alphas[b] = max_pow_alpha(real, config, mask)
        logfire.warn("block {block} infeasible on the awake set, falling back to MaxPow", block=b)

    return SleepSchedule(states=states, alphas=alphas, feasible=feasible, fallback=fallback), outcomes


def schedule_min_se(schedule: SleepSchedule, realizations: Sequence[ChannelRealization]) -> np.ndarray:
    """Per-block minimum UE spectral efficiency under the schedule's gains."""
    return np.array([
        float(np.min(spectral_efficiency(lmmse_sinrs(real, alpha)), initial=np.inf))
        for real, alpha in zip(realizations, schedule.alphas)
    ])


def outage_probability(min_se: ArrayLike, se_target: float, mode: Literal["setup", "block"] = "setup") -> float:
    """
    Fraction of outage events. `min_se` is (setups, blocks); per setup the block-averaged minimum SE is compared
    to the target, per block every entry is.
    """
    min_se = np.atleast_2d(np.asarray(min_se, dtype=float))
    if min_se.size == 0:
        return 0.0
    if mode == "setup":
        return float(np.mean(min_se.mean(axis=1) < se_target))
    return float(np.mean(min_se < se_target))

# NOTES:
# Scenario geometry: the scenario configuration (simulation parameter table), grid deployments of repeaters
# and cell-free access points, UE drops and distance-based repeater pruning.
#
# The BS sits in the middle of the square area; repeaters sit at the centres of a sqrt(L) x sqrt(L) grid of cells.
# The stability cap on the repeater gain is only known for a handful of grid sizes and is never interpolated.

from __future__ import annotations

import json
import math
from enum import Enum
from typing import Literal, Optional

from typing_extensions import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from _utils.utils import Utils
from ramimo.errors import ScenarioError

# amplifier stability caps for grid deployments, in dB
STABILITY_CAPS_DB: dict[int, float] = {16: 70.0, 64: 58.0, 100: 54.0, 400: 42.0}


class UeDistribution(Enum):
    Uniform = "uniform"
    CellEdge = "cell-edge"


class ScenarioConfig(BaseModel):
    area_side_m: float = Field(default=2000.0, gt=0, description="Side of the square simulation area")
    bs_position_m: tuple[float, float] = Field(default=(1000.0, 1000.0), description="Ground position of the BS")
    bs_height_m: float = Field(default=25.0, gt=0)
    num_bs_antennas: int = Field(default=64, ge=1, description="M, BS array size (also the cell-free AP count)")
    num_repeaters: int = Field(default=64, ge=0, description="L")
    num_ues: int = Field(default=8, ge=0, description="K")
    repeater_height_m: float = Field(default=15.0, gt=0)
    ue_height_m: float = Field(default=1.5, gt=0)
    uplink_power_w: float = Field(default=Utils.dbm_to_watts(20.0), gt=0, description="rho_u")
    p_max_w: float = Field(default=Utils.dbm_to_watts(38.0), gt=0, description="Repeater output power limit")
    alpha_max_db: Optional[float] = Field(default=None, description="Gain cap; None reads the stability table")
    alpha_db_reading: Literal["amplitude", "power"] = Field(
        default="amplitude",
        description="amplitude: the cap is 10 log10(alpha); power: the cap is 20 log10(alpha), the power gain",
    )
    bandwidth_hz: float = Field(default=20e6, gt=0)
    carrier_hz: float = Field(default=3.5e9, gt=0)
    noise_figure_db: float = Field(default=5.0)
    k_factor_db: float = Field(default=9.0)
    shadowing: bool = Field(default=True, description="Log-normal shadow fading on every link")
    p_stat_w: float = Field(default=24.26, gt=0)
    delta_p: float = Field(default=2.0, gt=0)
    p_sleep_w: float = Field(default=4.72, gt=0)
    epsilon: float = Field(default=1e-5, gt=0, description="CCP solution accuracy")
    rng_seed: int = Field(default=0)
    deployment: Literal["grid", "custom"] = Field(default="grid")

    @model_validator(mode="after")
    def check_scenario(self) -> Self:
        if self.deployment == "grid":
            _grid_side(self.num_repeaters)
        if self.alpha_max_db is None:
            alpha_max_lookup(self.num_repeaters)
        if self.p_sleep_w >= self.p_stat_w:
            raise ScenarioError("sleep power must be below the static power")
        return self

    @property
    def alpha_max(self) -> float:
        gain_db = self.alpha_max_db if self.alpha_max_db is not None else alpha_max_lookup(self.num_repeaters)
        if self.alpha_db_reading == "amplitude":
            return float(Utils.db_to_linear(gain_db))
        return Utils.gain_db_to_amplitude(gain_db)

    @property
    def bs_position(self) -> np.ndarray:
        return np.array([*self.bs_position_m, self.bs_height_m])

    def with_repeaters(self, num_repeaters: int) -> ScenarioConfig:
        """Same scenario with another repeater count; the gain cap is re-read from the stability table."""
        return ScenarioConfig.model_validate(
            {**self.model_dump(), "num_repeaters": num_repeaters, "alpha_max_db": None}
        )


class Deployment(BaseModel):
    """
    Positions of one drop. Validating with `context={"scenario": config}` also checks that every point lies in
    the area and that repeater and UE heights are the configured ones.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    repeater_positions: np.ndarray
    ue_positions: np.ndarray
    bs_position: np.ndarray
    active_mask: Optional[np.ndarray] = None

    @field_validator("repeater_positions", "ue_positions", mode="before")
    @classmethod
    def as_points(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=float).reshape(-1, 3)

    @field_validator("bs_position", mode="before")
    @classmethod
    def as_point(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=float).reshape(3)

    @field_validator("active_mask", mode="before")
    @classmethod
    def as_mask(cls, value) -> Optional[np.ndarray]:
        return None if value is None else np.asarray(value, dtype=bool).reshape(-1)

    @model_validator(mode="after")
    def check_layout(self, info: ValidationInfo) -> Self:
        if self.active_mask is None:
            self.active_mask = np.ones(len(self.repeater_positions), dtype=bool)
        if self.active_mask.shape != (len(self.repeater_positions),):
            raise ScenarioError("active mask length must match the repeater count")

        scenario: ScenarioConfig | None = (info.context or {}).get("scenario")
        if scenario is None:
            return self

        for name, points, height in (
            ("repeater", self.repeater_positions, scenario.repeater_height_m),
            ("UE", self.ue_positions, scenario.ue_height_m),
        ):
            if np.any((points[:, :2] < 0.0) | (points[:, :2] > scenario.area_side_m)):
                raise ScenarioError(f"{name} positions must lie inside the {scenario.area_side_m} m area")
            if not np.allclose(points[:, 2], height):
                raise ScenarioError(f"{name} heights must be {height} m")
        if not np.allclose(self.bs_position, scenario.bs_position):
            raise ScenarioError("BS position differs from the scenario")
        return self

    @property
    def num_repeaters(self) -> int:
        return len(self.repeater_positions)

    @property
    def num_active(self) -> int:
        return int(self.active_mask.sum())

    def bs_distances_2d(self) -> np.ndarray:
        return np.linalg.norm(self.repeater_positions[:, :2] - self.bs_position[:2], axis=1)

    def to_json(self, indent: int = None) -> str:
        return json.dumps(
            {
                "repeater_positions": self.repeater_positions.tolist(),
                "ue_positions": self.ue_positions.tolist(),
                "bs_position": self.bs_position.tolist(),
                "active_mask": self.active_mask.tolist(),
            },
            indent=indent,
        )

    @staticmethod
    def from_json(text: str) -> Deployment:
        return Deployment.model_validate(json.loads(text))


def _grid_side(count: int) -> int:
    side = math.isqrt(count)
    if side * side != count:
        raise ScenarioError(f"grid requires square count, got {count}")
    return side


def grid_positions(count: int, area_side: float) -> np.ndarray:
    """
    Cell centres of a sqrt(count) x sqrt(count) grid over the square area, row-major.

    Example call: grid_positions(16, 2000.0)  # spacing 500 m, first point (250, 250)

    Args:
        count (int): number of grid points, a perfect square.
        area_side (float): side of the area in meters.
    Returns:
        np.ndarray: (count, 2) ground positions.
    """
    if area_side <= 0:
        raise ScenarioError("area side must be positive")

    side = _grid_side(count)
    if side == 0:
        return np.zeros((0, 2))

    spacing = area_side / side
    centres = spacing / 2.0 + spacing * np.arange(side)
    xs, ys = np.meshgrid(centres, centres, indexing="xy")
    return np.column_stack([xs.ravel(), ys.ravel()])


def alpha_max_lookup(num_repeaters: int) -> float:
    """Tabulated stability cap (dB) for a grid of `num_repeaters` repeaters."""
    try:
        return STABILITY_CAPS_DB[num_repeaters]
    except KeyError:
        raise ScenarioError(
            f"no stability cap tabulated for L={num_repeaters}; "
            f"tabulated: {sorted(STABILITY_CAPS_DB)}"
        ) from None


def prune_by_bs_distance(deployment: Deployment, threshold_m: float) -> Deployment:
    """Deactivates every repeater closer (2D) to the BS than `threshold_m`; positions are kept."""
    if threshold_m < 0:
        raise ScenarioError("pruning threshold must be non-negative")

    keep = deployment.bs_distances_2d() >= threshold_m
    return Deployment(
        repeater_positions=deployment.repeater_positions.copy(),
        ue_positions=deployment.ue_positions.copy(),
        bs_position=deployment.bs_position.copy(),
        active_mask=deployment.active_mask & keep,
    )


def uniform_ue_drop(num_ues: int, area_side: float, rng: np.random.Generator, height: float = 1.5) -> np.ndarray:
    xy = rng.uniform(0.0, area_side, size=(num_ues, 2))
    return np.column_stack([xy, np.full(num_ues, height)])


def cell_edge_ue_drop(
    num_ues: int,
    rng: np.random.Generator,
    low: float = 1800.0,
    high: float = 2000.0,
    height: float = 1.5,
) -> np.ndarray:
    xy = rng.uniform(low, high, size=(num_ues, 2))
    return np.column_stack([xy, np.full(num_ues, height)])


def repeater_grid(config: ScenarioConfig) -> np.ndarray:
    xy = grid_positions(config.num_repeaters, config.area_side_m)
    return np.column_stack([xy, np.full(len(xy), config.repeater_height_m)])


def access_point_grid(config: ScenarioConfig) -> np.ndarray:
    """Cell-free APs: one per BS antenna on the repeater grid recipe, at repeater height."""
    xy = grid_positions(config.num_bs_antennas, config.area_side_m)
    return np.column_stack([xy, np.full(len(xy), config.repeater_height_m)])


def build_deployment(
    config: ScenarioConfig,
    rng: np.random.Generator,
    distribution: UeDistribution = UeDistribution.Uniform,
) -> Deployment:
    match distribution:
        case UeDistribution.CellEdge:
            ues = cell_edge_ue_drop(
                config.num_ues, rng,
                low=0.9 * config.area_side_m, high=config.area_side_m,
                height=config.ue_height_m,
            )
        case _:
            ues = uniform_ue_drop(config.num_ues, config.area_side_m, rng, height=config.ue_height_m)

    return Deployment.model_validate(
        {"repeater_positions": repeater_grid(config), "ue_positions": ues, "bs_position": config.bs_position},
        context={"scenario": config},
    )

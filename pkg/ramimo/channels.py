# NOTES:
# Channel model: 3GPP TR 38.901 UMa pathloss and LOS probability, log-normal shadowing and Rician small-scale
# fading for the three link classes (UE -> repeater, repeater -> BS, UE -> BS), plus the UE -> access point
# links of the cell-free reference system.
#
# Large-scale quantities (LOS state, shadowing) are frozen per UE drop; small-scale fading is redrawn per
# coherence block. Repeater -> BS links are always LOS (both ends elevated). NLOS links are Rayleigh.

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike

from _utils.utils import Utils
from ramimo.errors import ChannelError
from ramimo.geometry import Deployment, ScenarioConfig

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_PER_HZ = -174.0
MIN_DISTANCE_2D_M = 1.0
SHADOWING_STD_DB = {True: 4.0, False: 6.0}


class LinkClass(Enum):
    UeBs = "ue-bs"
    UeRepeater = "ue-repeater"
    RepeaterBs = "repeater-bs"
    UeAccessPoint = "ue-ap"


#----------------------#
#     LARGE SCALE      #
#----------------------#

def uma_pathloss(
    d2d: ArrayLike,
    h_tx: float,
    h_rx: float,
    fc_hz: float,
    los: ArrayLike,
) -> np.ndarray | float:
    """
    UMa pathloss in dB (positive loss).

    `h_tx` is the elevated end (BS, repeater or AP), `h_rx` the lower end. Distances below 1 m are clamped.
    The NLOS value never drops below the LOS value at the same geometry.

    Example call: uma_pathloss(100.0, 25.0, 1.5, 3.5e9, los=True)
    """
    scalar = np.ndim(d2d) == 0 and np.ndim(los) == 0
    d2d = np.maximum(np.asarray(d2d, dtype=float), MIN_DISTANCE_2D_M)
    los = np.asarray(los, dtype=bool)

    fc_ghz = fc_hz / 1e9
    d3d = np.sqrt(d2d**2 + (h_tx - h_rx) ** 2)
    d_bp = 4.0 * (h_tx - 1.0) * (h_rx - 1.0) * fc_hz / SPEED_OF_LIGHT

    pl_close = 28.0 + 22.0 * np.log10(d3d) + 20.0 * np.log10(fc_ghz)
    pl_far = (
        28.0 + 40.0 * np.log10(d3d) + 20.0 * np.log10(fc_ghz)
        - 9.0 * np.log10(d_bp**2 + (h_tx - h_rx) ** 2)
    )
    pl_los = np.where(d2d <= d_bp, pl_close, pl_far)
    pl_nlos = 13.54 + 39.08 * np.log10(d3d) + 20.0 * np.log10(fc_ghz) - 0.6 * (h_rx - 1.5)

    pathloss = np.where(los, pl_los, np.maximum(pl_los, pl_nlos))
    return float(pathloss) if scalar else pathloss


def los_probability(d2d: ArrayLike, link_class: LinkClass, h_ut: float = 1.5) -> np.ndarray | float:
    """UMa LOS probability over 2D distance; repeater -> BS links are LOS by policy."""
    scalar = np.ndim(d2d) == 0
    d2d = np.maximum(np.asarray(d2d, dtype=float), MIN_DISTANCE_2D_M)

    if link_class is LinkClass.RepeaterBs:
        probability = np.ones_like(d2d)
    else:
        c_prime = 0.0 if h_ut <= 13.0 else ((h_ut - 13.0) / 10.0) ** 1.5
        far = (18.0 / d2d + np.exp(-d2d / 63.0) * (1.0 - 18.0 / d2d)) * (
            1.0 + c_prime * 1.25 * (d2d / 100.0) ** 3 * np.exp(-d2d / 150.0)
        )
        probability = np.where(d2d <= 18.0, 1.0, np.minimum(far, 1.0))

    return float(probability) if scalar else probability


def noise_power(bandwidth_hz: float, noise_figure_db: float) -> float:
    """Thermal noise power in watts: -174 dBm/Hz + 10 log10(BW) + NF."""
    noise_dbm = THERMAL_NOISE_DBM_PER_HZ + 10.0 * np.log10(bandwidth_hz) + noise_figure_db
    return Utils.dbm_to_watts(noise_dbm)


@dataclass
class LargeScale:
    beta_ue_rep: np.ndarray   # (L, K)
    beta_rep_bs: np.ndarray   # (L,)
    beta_ue_bs: np.ndarray    # (K,)
    los_ue_rep: np.ndarray
    los_rep_bs: np.ndarray
    los_ue_bs: np.ndarray


def _link_gains(
    d2d: np.ndarray,
    h_tx: float,
    h_rx: float,
    link_class: LinkClass,
    config: ScenarioConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    los = rng.uniform(size=d2d.shape) < los_probability(d2d, link_class, h_ut=h_rx)
    pathloss_db = uma_pathloss(d2d, h_tx, h_rx, config.carrier_hz, los)
    if config.shadowing:
        std_db = np.where(los, SHADOWING_STD_DB[True], SHADOWING_STD_DB[False])
        pathloss_db = pathloss_db + std_db * rng.standard_normal(size=d2d.shape)
    return np.minimum(Utils.db_to_linear(-pathloss_db), 1.0), los


def compute_large_scale(config: ScenarioConfig, deployment: Deployment, rng: np.random.Generator) -> LargeScale:
    """
    LOS states, pathloss and shadowing for one UE drop.

    Draw order is UE -> BS first, so the direct links of a drop do not depend on the repeater count.
    """
    ues = deployment.ue_positions
    reps = deployment.repeater_positions
    bs = deployment.bs_position

    d_ue_bs = np.linalg.norm(ues[:, :2] - bs[:2], axis=1)
    beta_ue_bs, los_ue_bs = _link_gains(d_ue_bs, bs[2], config.ue_height_m, LinkClass.UeBs, config, rng)

    d_ue_rep = np.linalg.norm(reps[:, None, :2] - ues[None, :, :2], axis=2)
    beta_ue_rep, los_ue_rep = _link_gains(
        d_ue_rep, config.repeater_height_m, config.ue_height_m, LinkClass.UeRepeater, config, rng
    )

    d_rep_bs = np.linalg.norm(reps[:, :2] - bs[:2], axis=1)
    beta_rep_bs, los_rep_bs = _link_gains(
        d_rep_bs, bs[2], config.repeater_height_m, LinkClass.RepeaterBs, config, rng
    )

    return LargeScale(
        beta_ue_rep=beta_ue_rep.reshape(len(reps), len(ues)),
        beta_rep_bs=beta_rep_bs,
        beta_ue_bs=beta_ue_bs,
        los_ue_rep=los_ue_rep.reshape(len(reps), len(ues)),
        los_rep_bs=los_rep_bs,
        los_ue_bs=los_ue_bs,
    )


def access_point_large_scale(
    config: ScenarioConfig,
    ap_positions: np.ndarray,
    ue_positions: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """(M, K) gains and LOS flags of the UE -> AP links of the cell-free reference."""
    d2d = np.linalg.norm(ap_positions[:, None, :2] - ue_positions[None, :, :2], axis=2)
    h_ap = float(ap_positions[0, 2]) if len(ap_positions) else config.repeater_height_m
    beta, los = _link_gains(d2d, h_ap, config.ue_height_m, LinkClass.UeAccessPoint, config, rng)
    return beta.reshape(d2d.shape), los.reshape(d2d.shape)


#----------------------#
#     SMALL SCALE      #
#----------------------#

def array_response(angle_pair: tuple[ArrayLike, ArrayLike], num_antennas: int) -> np.ndarray:
    """
    Half-wavelength ULA response to sources at (azimuth, elevation) radians; azimuth 0 is broadside.

    Scalar angles give an (M,) vector, angle arrays of length n give an (M, n) matrix. Entries are unit modulus.
    """
    azimuth, elevation = (np.asarray(a, dtype=float) for a in angle_pair)
    phase = np.pi * np.sin(azimuth) * np.cos(elevation)
    m = np.arange(num_antennas)
    return np.exp(1j * np.multiply.outer(m, phase))


def bs_angles(positions: np.ndarray, bs_position: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth/elevation of each source as seen from the BS array (array axis along y)."""
    delta = np.asarray(positions, dtype=float).reshape(-1, 3) - bs_position
    ground = np.hypot(delta[:, 0], delta[:, 1])
    azimuth = np.arctan2(delta[:, 1], delta[:, 0])
    elevation = np.arctan2(delta[:, 2], ground)
    return azimuth, elevation


def rician_draw(
    beta: ArrayLike,
    k_factor: ArrayLike,
    steering: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    sqrt(beta) * (sqrt(k/(1+k)) e^{j phi} a + sqrt(1/(1+k)) w), w ~ CN(0, I), phi ~ U[0, 2 pi).

    `steering` is one (n,) vector or an (n, c) matrix of c columns; `beta` and `k_factor` broadcast per column.
    `k_factor = inf` gives the pure LOS term.
    """
    steering = np.asarray(steering, dtype=complex)
    columns = steering.shape[1:] if steering.ndim > 1 else ()
    beta = np.broadcast_to(np.asarray(beta, dtype=float), columns)
    k_factor = np.broadcast_to(np.asarray(k_factor, dtype=float), columns)

    scatter = (rng.standard_normal(steering.shape) + 1j * rng.standard_normal(steering.shape)) / np.sqrt(2.0)
    phase = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=columns))

    with np.errstate(invalid="ignore"):
        los_amp = np.where(np.isinf(k_factor), 1.0, np.sqrt(k_factor / (1.0 + k_factor)))
        nlos_amp = np.where(np.isinf(k_factor), 0.0, np.sqrt(1.0 / (1.0 + k_factor)))

    return np.sqrt(beta) * (los_amp * phase * steering + nlos_amp * scatter)


@dataclass
class ChannelRealization:
    h: np.ndarray          # (L, K) UE k -> repeater l
    g: np.ndarray          # (M, L) repeater l -> BS
    h_bar: np.ndarray      # (M, K) UE k -> BS
    noise_rep: float
    noise_bs: float
    uplink_power: float

    @property
    def num_antennas(self) -> int:
        return self.g.shape[0]

    @property
    def num_repeaters(self) -> int:
        return self.h.shape[0]

    @property
    def num_ues(self) -> int:
        return self.h_bar.shape[1]

    def check_finite(self):
        for name in ("h", "g", "h_bar"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ChannelError(f"non-finite entries in channel '{name}'")

    def subset(self, mask: ArrayLike) -> ChannelRealization:
        """Realization with only the repeaters selected by `mask`."""
        mask = np.asarray(mask, dtype=bool)
        return ChannelRealization(
            h=self.h[mask], g=self.g[:, mask], h_bar=self.h_bar,
            noise_rep=self.noise_rep, noise_bs=self.noise_bs, uplink_power=self.uplink_power,
        )

    def to_json(self, indent: int = None) -> str:
        """Matrix bundle: each matrix as row-major nested lists of [re, im] pairs."""
        def pack(matrix: np.ndarray) -> dict:
            pairs = np.stack([matrix.real, matrix.imag], axis=-1)
            return {"shape": list(matrix.shape), "data": pairs.reshape(-1, 2).tolist()}

        return json.dumps(
            {
                "h": pack(self.h), "g": pack(self.g), "h_bar": pack(self.h_bar),
                "noise_rep": self.noise_rep, "noise_bs": self.noise_bs, "uplink_power": self.uplink_power,
            },
            indent=indent,
        )

    @staticmethod
    def from_json(text: str) -> ChannelRealization:
        data = json.loads(text)

        def unpack(entry: dict) -> np.ndarray:
            pairs = np.asarray(entry["data"], dtype=float).reshape(-1, 2)
            return (pairs[:, 0] + 1j * pairs[:, 1]).reshape(entry["shape"])

        return ChannelRealization(
            h=unpack(data["h"]), g=unpack(data["g"]), h_bar=unpack(data["h_bar"]),
            noise_rep=float(data["noise_rep"]), noise_bs=float(data["noise_bs"]),
            uplink_power=float(data["uplink_power"]),
        )


def draw_channels(
    config: ScenarioConfig,
    deployment: Deployment,
    large_scale: LargeScale,
    rng: np.random.Generator,
) -> ChannelRealization:
    """
    One coherence block of channels. Inactive repeaters still get channels.

    Draw order is direct channels, then repeater -> BS, then UE -> repeater.
    """
    num_antennas = config.num_bs_antennas
    k_los = float(Utils.db_to_linear(config.k_factor_db))

    def k_factors(los: np.ndarray) -> np.ndarray:
        return np.where(los, k_los, 0.0)

    ue_steering = array_response(bs_angles(deployment.ue_positions, deployment.bs_position), num_antennas)
    h_bar = rician_draw(large_scale.beta_ue_bs, k_factors(large_scale.los_ue_bs), ue_steering, rng)

    rep_steering = array_response(bs_angles(deployment.repeater_positions, deployment.bs_position), num_antennas)
    g = rician_draw(large_scale.beta_rep_bs, k_factors(large_scale.los_rep_bs), rep_steering, rng)

    num_links = large_scale.beta_ue_rep.size
    h = rician_draw(
        large_scale.beta_ue_rep.ravel(),
        k_factors(large_scale.los_ue_rep.ravel()),
        np.ones((1, num_links)),
        rng,
    ).reshape(large_scale.beta_ue_rep.shape)

    sigma2 = noise_power(config.bandwidth_hz, config.noise_figure_db)
    return ChannelRealization(
        h=h,
        g=g.reshape(num_antennas, deployment.num_repeaters),
        h_bar=h_bar.reshape(num_antennas, len(deployment.ue_positions)),
        noise_rep=sigma2,
        noise_bs=sigma2,
        uplink_power=config.uplink_power_w,
    )


def draw_access_point_channels(
    beta: np.ndarray,
    los: np.ndarray,
    config: ScenarioConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """(M, K) scalar Rician channels of the UE -> AP links."""
    k_los = float(Utils.db_to_linear(config.k_factor_db))
    draws = rician_draw(beta.ravel(), np.where(los.ravel(), k_los, 0.0), np.ones((1, beta.size)), rng)
    return draws.reshape(beta.shape)

# NOTES:
# Uplink RA-MIMO link model: composite channels z_k = sum_l alpha_l h_lk g_l + h_bar_k, the colored-noise
# covariance C_k seen by UE k, LMMSE combining and SINR, repeater output power and the MaxPow assignment.
#
# alpha = 0 is plain massive MIMO; there is no separate code path for it. The cell-free reference reuses the
# same LMMSE evaluation with the AP channels in place of the direct channels and no repeaters.
# All solves go through Cholesky factorizations of C_k.

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as spalg
from numpy.typing import ArrayLike

from ramimo.channels import (
    ChannelRealization,
    access_point_large_scale,
    draw_access_point_channels,
    noise_power,
)
from ramimo.errors import ChannelError, ScenarioError
from ramimo.geometry import ScenarioConfig


@dataclass(frozen=True)
class AmplificationVector:
    alpha: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        """[alpha; 1], the direct path appended with a fixed unit gain."""
        return np.append(self.alpha, 1.0)

    @property
    def squared(self) -> np.ndarray:
        return self.alpha**2

    def within(self, upper: ArrayLike, tol: float = 1e-8) -> bool:
        return bool(np.all(self.alpha >= -tol) and np.all(self.alpha <= np.asarray(upper) + tol))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.alpha, dtype=dtype)


@dataclass
class CompositeChannel:
    z: np.ndarray          # (M, K)
    stacked_h: np.ndarray  # (K, M, L+1)

    def consistency_error(self, alpha: ArrayLike) -> float:
        """Largest relative gap between z_k and H~_k [alpha; 1]."""
        stacked_alpha = np.append(np.asarray(alpha, dtype=float), 1.0)
        rebuilt = np.einsum("kml,l->mk", self.stacked_h, stacked_alpha)
        scale = max(np.linalg.norm(self.z), np.finfo(float).tiny)
        return float(np.linalg.norm(rebuilt - self.z) / scale)


@dataclass
class NoiseCovariance:
    c: np.ndarray  # (M, M) Hermitian positive definite

    def factor(self) -> tuple[np.ndarray, bool]:
        try:
            return spalg.cho_factor(self.c, lower=True, check_finite=False)
        except np.linalg.LinAlgError as e:
            raise ChannelError(f"colored-noise covariance is not positive definite: {e}") from e


def _alpha(realization: ChannelRealization, alpha: ArrayLike) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.shape != (realization.num_repeaters,):
        raise ValueError(f"expected {realization.num_repeaters} gains, got {alpha.shape[0]}")
    return alpha


#----------------------#
#  COMPOSITE CHANNELS  #
#----------------------#

def stack_H(realization: ChannelRealization, k: int) -> np.ndarray:
    """H~_k = [h_1k g_1, ..., h_Lk g_L, h_bar_k], an M x (L+1) matrix."""
    return np.column_stack([realization.g * realization.h[:, k], realization.h_bar[:, k]])


def composite_matrix(realization: ChannelRealization, alpha: ArrayLike) -> np.ndarray:
    """(M, K) matrix whose columns are the composite channels z_k."""
    alpha = _alpha(realization, alpha)
    return realization.g @ (alpha[:, None] * realization.h) + realization.h_bar


def composite_channel(realization: ChannelRealization, alpha: ArrayLike) -> CompositeChannel:
    stacked = np.stack([stack_H(realization, k) for k in range(realization.num_ues)]) if realization.num_ues else \
        np.zeros((0, realization.num_antennas, realization.num_repeaters + 1), dtype=complex)
    return CompositeChannel(z=composite_matrix(realization, alpha), stacked_h=stacked)


#----------------------#
#   COLORED NOISE      #
#----------------------#

def _covariance_base(realization: ChannelRealization, alpha: np.ndarray, z: np.ndarray) -> np.ndarray:
    """rho sum_i z_i z_i^H + sigma_r^2 sum_l alpha_l^2 g_l g_l^H + sigma_BS^2 I (all UEs included)."""
    rho = realization.uplink_power
    repeater_noise = (realization.g * (alpha**2 * realization.noise_rep)) @ realization.g.conj().T
    base = rho * (z @ z.conj().T) + repeater_noise
    base[np.diag_indices_from(base)] += realization.noise_bs
    return base


def colored_noise_cov(realization: ChannelRealization, alpha: ArrayLike, k: int) -> NoiseCovariance:
    alpha = _alpha(realization, alpha)
    z = composite_matrix(realization, alpha)
    base = _covariance_base(realization, alpha, z)
    c = base - realization.uplink_power * np.outer(z[:, k], z[:, k].conj())
    return NoiseCovariance(c=0.5 * (c + c.conj().T))


def noise_covariances(realization: ChannelRealization, alpha: ArrayLike) -> tuple[np.ndarray, list[NoiseCovariance]]:
    """Composite channels and every UE's covariance, sharing one base matrix."""
    realization.check_finite()
    alpha = _alpha(realization, alpha)
    z = composite_matrix(realization, alpha)
    base = _covariance_base(realization, alpha, z)

    covariances = []
    for k in range(realization.num_ues):
        c = base - realization.uplink_power * np.outer(z[:, k], z[:, k].conj())
        covariances.append(NoiseCovariance(c=0.5 * (c + c.conj().T)))
    return z, covariances


#----------------------#
#   LMMSE COMBINING    #
#----------------------#

def lmmse_combiner(realization: ChannelRealization, alpha: ArrayLike, k: int) -> np.ndarray:
    """Unnormalized LMMSE combiner w_k = C_k^{-1} z_k."""
    realization.check_finite()
    alpha = _alpha(realization, alpha)
    z = composite_matrix(realization, alpha)
    factor = colored_noise_cov(realization, alpha, k).factor()
    return spalg.cho_solve(factor, z[:, k], check_finite=False)


def lmmse_sinr(realization: ChannelRealization, alpha: ArrayLike, k: int) -> float:
    """SINR_k = rho z_k^H C_k^{-1} z_k (linear)."""
    w = lmmse_combiner(realization, alpha, k)
    z_k = composite_matrix(realization, alpha)[:, k]
    return float(realization.uplink_power * np.real(np.vdot(z_k, w)))


def lmmse_sinrs(realization: ChannelRealization, alpha: ArrayLike) -> np.ndarray:
    """Every UE's LMMSE SINR at the given gains."""
    z, covariances = noise_covariances(realization, alpha)
    sinrs = np.empty(realization.num_ues)
    for k, cov in enumerate(covariances):
        w = spalg.cho_solve(cov.factor(), z[:, k], check_finite=False)
        sinrs[k] = realization.uplink_power * np.real(np.vdot(z[:, k], w))
    return sinrs


def spectral_efficiency(sinr: ArrayLike) -> np.ndarray | float:
    """log2(1 + SINR) in bit/s/Hz, no prelog overhead."""
    return np.log2(1.0 + np.asarray(sinr, dtype=float))


#----------------------#
#   REPEATER POWER     #
#----------------------#

def repeater_scale(realization: ChannelRealization) -> np.ndarray:
    """c_l = sqrt(rho ||h_l||^2 + sigma_r^2) for every repeater."""
    received = realization.uplink_power * np.sum(np.abs(realization.h) ** 2, axis=1)
    return np.sqrt(received + realization.noise_rep)


def repeater_output_powers(realization: ChannelRealization, alpha: ArrayLike) -> np.ndarray:
    alpha = _alpha(realization, alpha)
    return (repeater_scale(realization) * alpha) ** 2


def repeater_output_power(realization: ChannelRealization, alpha: ArrayLike, l: int) -> float:
    """P_out,l = alpha_l^2 (rho ||h_l||^2 + sigma_r^2) in watts."""
    return float(repeater_output_powers(realization, alpha)[l])


def gain_upper_bounds(realization: ChannelRealization, config: ScenarioConfig) -> np.ndarray:
    """min{alpha_max, sqrt(P_max) / c_l} per repeater."""
    return np.minimum(config.alpha_max, np.sqrt(config.p_max_w) / repeater_scale(realization))


def max_feasible_alpha(realization: ChannelRealization, config: ScenarioConfig, l: int) -> float:
    """MaxPow gain of repeater l."""
    return float(gain_upper_bounds(realization, config)[l])


def max_pow_alpha(
    realization: ChannelRealization,
    config: ScenarioConfig,
    active_mask: ArrayLike | None = None,
) -> np.ndarray:
    """MaxPow assignment; repeaters outside `active_mask` get zero gain."""
    upper = gain_upper_bounds(realization, config)
    if active_mask is None:
        return upper
    return np.where(np.asarray(active_mask, dtype=bool), upper, 0.0)


#----------------------#
#   CELL-FREE MIMO     #
#----------------------#

def cfmmimo_sinr(
    ap_positions: np.ndarray,
    ue_positions: np.ndarray,
    config: ScenarioConfig,
    rng: np.random.Generator,
    large_scale: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """
    Per-UE SINR of centralized MMSE combining over single-antenna APs.

    `large_scale` is the (beta, los) pair of a UE drop; when omitted it is drawn from `rng` first.

    Args:
        ap_positions (np.ndarray): (M, 3) AP positions, M equal to the BS antenna count.
        ue_positions (np.ndarray): (K, 3) UE positions.
        config (ScenarioConfig): scenario parameters.
        rng (np.random.Generator): stream for the small-scale (and, if needed, large-scale) draws.
    Returns:
        np.ndarray: (K,) linear SINRs.
    """
    ap_positions = np.asarray(ap_positions, dtype=float).reshape(-1, 3)
    ue_positions = np.asarray(ue_positions, dtype=float).reshape(-1, 3)
    if len(ap_positions) != config.num_bs_antennas:
        raise ScenarioError(
            f"cell-free reference needs {config.num_bs_antennas} APs, got {len(ap_positions)}"
        )

    if large_scale is None:
        large_scale = access_point_large_scale(config, ap_positions, ue_positions, rng)
    beta, los = large_scale
    h_hat = draw_access_point_channels(beta, los, config, rng)

    sigma2 = noise_power(config.bandwidth_hz, config.noise_figure_db)
    realization = ChannelRealization(
        h=np.zeros((0, len(ue_positions)), dtype=complex),
        g=np.zeros((len(ap_positions), 0), dtype=complex),
        h_bar=h_hat,
        noise_rep=sigma2,
        noise_bs=sigma2,
        uplink_power=config.uplink_power_w,
    )
    return lmmse_sinrs(realization, np.zeros(0))

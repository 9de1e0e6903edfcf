# NOTES:
# Convex surrogate of the SINR quadratic form z_k^H C_k^{-1} z_k around an expansion point alpha0:
#
#   z^H C^{-1} z >= 2 Re(b^H z) - tr(D C),   b = C0^{-1} z0,  D = b b^H
#
# Substituting z_i = H~_i [alpha; 1] and C_k gives, per UE k, a real constraint function
#
#   lhs_k(alpha) = r_k^T [alpha; 1] - rho sum_{i!=k} |w_ik^T [alpha; 1]|^2 - sum_l g~_lk alpha_l^2 - d_k
#
# with w_ik = b_k^H H~_i, so every Q_ik = Re(w_ik^* w_ik^T) is PSD by construction and the quadratic part is a
# plain sum of squares. The bound is tight at alpha0 and a global under-estimator elsewhere.

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as spalg
from numpy.typing import ArrayLike

from ramimo.channels import ChannelRealization
from ramimo.mimo import noise_covariances


@dataclass
class LinearizationPoint:
    alpha0: np.ndarray
    b: np.ndarray       # (M, K), column k is C_k(alpha0)^{-1} z_k(alpha0)
    forms: np.ndarray   # (K,) z_k^H C_k^{-1} z_k at alpha0

    def d_matrix(self, k: int) -> np.ndarray:
        return np.outer(self.b[:, k], self.b[:, k].conj())


class EliminatedConstraint(NamedTuple):
    """lhs(alpha) = linear . alpha + constant - ||factor @ alpha + offset||^2 over the L free gains."""
    linear: np.ndarray
    constant: float
    factor: np.ndarray
    offset: np.ndarray


@dataclass
class ConstraintCoeffs:
    r: np.ndarray             # (L+1,)
    interference: np.ndarray  # (K-1, L+1) complex rows w_ik, i != k
    g_tilde: np.ndarray       # (L,)
    d: float
    rho: float

    @property
    def num_repeaters(self) -> int:
        return len(self.g_tilde)

    @property
    def q_matrices(self) -> np.ndarray:
        """Re(F_ik) = Re(w^* w^T) for every interferer, (K-1, L+1, L+1)."""
        w = self.interference
        return np.real(w.conj()[:, :, None] * w[:, None, :])

    def lhs(self, alpha: ArrayLike) -> np.ndarray | float:
        """Surrogate value at alpha; accepts a batch (..., L)."""
        alpha = np.asarray(alpha, dtype=float)
        full = np.concatenate([alpha, np.ones(alpha.shape[:-1] + (1,))], axis=-1)
        interference = np.sum(np.abs(full @ self.interference.T) ** 2, axis=-1) if len(self.interference) else 0.0
        value = full @ self.r - self.rho * interference - (alpha**2) @ self.g_tilde - self.d
        return float(value) if np.ndim(value) == 0 else value

    def quadratic_blocks(self) -> tuple[np.ndarray, np.ndarray, float]:
        """
        The total quadratic part rho sum Q_ik + diag([g~; 0]) split around the fixed last entry:
        (L x L block, cross vector, scalar).
        """
        num = self.num_repeaters
        total = np.zeros((num + 1, num + 1))
        if len(self.interference):
            total += self.rho * self.q_matrices.sum(axis=0)
        total[:num, :num] += np.diag(self.g_tilde)
        return total[:num, :num], total[:num, num], float(total[num, num])

    def eliminated(self) -> EliminatedConstraint:
        """The constraint in the L free gains only, with the quadratic part as one sum of squares."""
        num = self.num_repeaters
        w_free, w_fixed = self.interference[:, :num], self.interference[:, num]
        root_rho = np.sqrt(self.rho)
        factor = np.vstack([
            root_rho * w_free.real,
            root_rho * w_free.imag,
            np.diag(np.sqrt(self.g_tilde)),
        ])
        offset = np.concatenate([root_rho * w_fixed.real, root_rho * w_fixed.imag, np.zeros(num)])
        return EliminatedConstraint(
            linear=self.r[:num].copy(),
            constant=float(self.r[num] - self.d),
            factor=factor,
            offset=offset,
        )


def linearize(realization: ChannelRealization, alpha0: ArrayLike) -> LinearizationPoint:
    """Expansion point of the surrogate for every UE, via factorized solves."""
    alpha0 = np.asarray(alpha0, dtype=float)
    z, covariances = noise_covariances(realization, alpha0)

    b = np.zeros_like(z)
    forms = np.zeros(realization.num_ues)
    for k, cov in enumerate(covariances):
        b[:, k] = spalg.cho_solve(cov.factor(), z[:, k], check_finite=False)
        forms[k] = np.real(np.vdot(z[:, k], b[:, k]))

    return LinearizationPoint(alpha0=alpha0, b=b, forms=forms)


def assemble_coeffs(realization: ChannelRealization, linearization: LinearizationPoint, k: int) -> ConstraintCoeffs:
    b = linearization.b[:, k]
    b_conj = b.conj()
    via_repeater = b_conj @ realization.g       # b^H g_l
    direct = b_conj @ realization.h_bar         # b^H h_bar_i

    # row i is b^H H~_i
    rows = np.column_stack([realization.h.T * via_repeater[None, :], direct])

    return ConstraintCoeffs(
        r=2.0 * np.real(rows[k]),
        interference=np.delete(rows, k, axis=0),
        g_tilde=realization.noise_rep * np.abs(via_repeater) ** 2,
        d=float(realization.noise_bs * np.real(np.vdot(b, b))),
        rho=realization.uplink_power,
    )


def assemble_all(realization: ChannelRealization, linearization: LinearizationPoint) -> list[ConstraintCoeffs]:
    return [assemble_coeffs(realization, linearization, k) for k in range(realization.num_ues)]

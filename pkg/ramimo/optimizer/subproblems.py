# NOTES:
# Convex subproblems solved at every CCP iteration, built with cvxpy.
#
# The solver never sees alpha directly: gains are normalized as alpha = u * x with x in [0, 1] (u = box upper
# bound), and every constraint is multiplied by rho_u so it reads in SINR units. Each surrogate constraint is an
# affine term minus a sum of squares, which cvxpy turns into a second-order cone.
#
# Non-convergence of the conic solver is reported through SolveStatus, never raised.

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum
from typing import Literal, Optional, Sequence

import cvxpy as cp
import logfire_api as logfire
import numpy as np
from numpy.typing import ArrayLike

from ramimo.errors import OptimizerError
from ramimo.optimizer.surrogate import ConstraintCoeffs

# iteration-cap keyword of each supported conic solver
SOLVER_ITERATION_KWARG = {"CLARABEL": "max_iter", "ECOS": "max_iters", "SCS": "max_iters"}


class SolveStatus(Enum):
    Optimal = "optimal"
    Infeasible = "infeasible"
    MaxIterations = "max-iterations"


@dataclass
class SubproblemSolution:
    alpha: np.ndarray
    status: SolveStatus
    objective: float
    t: Optional[float] = None                # max-min level, SINR / rho_u units
    slacks: Optional[np.ndarray] = None      # min-pow slacks f_k, SINR / rho_u units
    solve_seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is SolveStatus.Optimal


def _status(problem: cp.Problem) -> SolveStatus:
    match problem.status:
        case cp.OPTIMAL | cp.OPTIMAL_INACCURATE:
            return SolveStatus.Optimal
        case cp.INFEASIBLE | cp.INFEASIBLE_INACCURATE:
            return SolveStatus.Infeasible
        case _:
            return SolveStatus.MaxIterations


def _check_box(box_upper: ArrayLike, coeffs: Sequence[ConstraintCoeffs]) -> np.ndarray:
    box_upper = np.asarray(box_upper, dtype=float).reshape(-1)
    if np.any(box_upper < 0) or not np.all(np.isfinite(box_upper)):
        raise OptimizerError("box upper bounds must be finite and non-negative")
    for c in coeffs:
        if c.num_repeaters != len(box_upper):
            raise OptimizerError(f"coefficients have {c.num_repeaters} gains, box has {len(box_upper)}")
    return box_upper


def _surrogate_terms(coeffs: ConstraintCoeffs, box_upper: np.ndarray, x: cp.Variable) -> tuple[cp.Expression, cp.Expression]:
    """(affine part, sum of squares) of rho_u * lhs(u * x)."""
    scale = coeffs.rho
    elim = coeffs.eliminated()
    affine = scale * (elim.linear * box_upper) @ x + scale * elim.constant
    squares = cp.sum_squares(np.sqrt(scale) * ((elim.factor * box_upper[None, :]) @ x + elim.offset))
    return affine, squares


def _solve(problem: cp.Problem, solver: str, max_iterations: int) -> float:
    if solver not in cp.installed_solvers():
        raise OptimizerError(f"solver '{solver}' is not installed; available: {cp.installed_solvers()}")

    kwargs = {}
    if solver in SOLVER_ITERATION_KWARG:
        kwargs[SOLVER_ITERATION_KWARG[solver]] = max_iterations

    started = time.perf_counter()
    try:
        problem.solve(solver=solver, warm_start=True, **kwargs)
    except cp.SolverError as e:
        logfire.warn("conic solver failed: {error}", error=str(e), solver=solver)
    return time.perf_counter() - started


def _warm_x(warm_alpha: ArrayLike | None, box_upper: np.ndarray) -> np.ndarray:
    if warm_alpha is None:
        return np.ones_like(box_upper)
    safe = np.where(box_upper > 0, box_upper, 1.0)
    return np.clip(np.asarray(warm_alpha, dtype=float) / safe, 0.0, 1.0)


#----------------------#
#   MAX-MIN            #
#----------------------#

def solve_maxmin_subproblem(
    coeffs: Sequence[ConstraintCoeffs],
    box_upper: ArrayLike,
    warm_alpha: ArrayLike | None = None,
    solver: str = "CLARABEL",
    max_iterations: int = 100,
) -> SubproblemSolution:
    """
    maximize t  s.t.  lhs_k(alpha) >= t for every UE,  0 <= alpha <= box_upper.

    Example call: solve_maxmin_subproblem(assemble_all(realization, lin), gain_upper_bounds(realization, config))

    Args:
        coeffs (Sequence[ConstraintCoeffs]): one surrogate constraint per UE.
        box_upper (ArrayLike): per-repeater upper bound on alpha.
        warm_alpha (ArrayLike | None): previous iterate; returned as-is if the solver yields no point.
    Returns:
        SubproblemSolution: alpha, t in SINR / rho_u units, and the solve status.
    """
    box_upper = _check_box(box_upper, coeffs)
    num = len(box_upper)

    if num == 0 or not np.any(box_upper > 0):
        alpha = np.zeros(num)
        t = min((c.lhs(alpha) for c in coeffs), default=0.0)
        return SubproblemSolution(alpha=alpha, status=SolveStatus.Optimal, objective=t, t=t)

    x = cp.Variable(num, name="x")
    tau = cp.Variable(name="tau")
    constraints = [x >= 0, x <= 1]
    for c in coeffs:
        affine, squares = _surrogate_terms(c, box_upper, x)
        constraints.append(squares + tau <= affine)

    x.value = _warm_x(warm_alpha, box_upper)
    problem = cp.Problem(cp.Maximize(tau), constraints)
    seconds = _solve(problem, solver, max_iterations)
    status = _status(problem)

    if x.value is None:
        alpha = box_upper * _warm_x(warm_alpha, box_upper)
        status = SolveStatus.MaxIterations if status is SolveStatus.Optimal else status
    else:
        alpha = np.clip(box_upper * np.asarray(x.value).reshape(-1), 0.0, box_upper)

    # report the level actually reached by the clipped point
    t = min(c.lhs(alpha) for c in coeffs) if coeffs else 0.0
    logfire.debug("max-min subproblem {status}", status=status.value, t=t, seconds=seconds)
    return SubproblemSolution(alpha=alpha, status=status, objective=t, t=t, solve_seconds=seconds)


#----------------------#
#   MIN-POWER (FPP)    #
#----------------------#

def default_lambda(sinr_thresholds: ArrayLike, rho: float) -> float:
    """10 * max_k(SINR_th,k / rho_u) * K; all-zero targets get weight 1."""
    sinr_thresholds = np.asarray(sinr_thresholds, dtype=float).reshape(-1)
    value = 10.0 * np.max(sinr_thresholds / rho, initial=0.0) * sinr_thresholds.size
    return float(value) if value > 0 else 1.0


def minpow_objective(alpha: ArrayLike, scale: ArrayLike, objective: Literal["l1", "l2"] = "l1") -> float:
    """sum c_l alpha_l (l1) or sum (c_l alpha_l)^2, the total output power (l2)."""
    weighted = np.asarray(scale, dtype=float) * np.asarray(alpha, dtype=float)
    return float(np.sum(weighted) if objective == "l1" else np.sum(weighted**2))


def solve_minpow_subproblem(
    coeffs: Sequence[ConstraintCoeffs],
    box_upper: ArrayLike,
    sinr_thresholds: ArrayLike,
    lambda_reg: float,
    repeater_scale: ArrayLike,
    objective: Literal["l1", "l2"] = "l1",
    warm_alpha: ArrayLike | None = None,
    solver: str = "CLARABEL",
    max_iterations: int = 100,
) -> SubproblemSolution:
    """
    minimize power(alpha) + lambda sum f_k  s.t.  lhs_k(alpha) + f_k >= SINR_th,k / rho_u,  f >= 0,  boxes.

    `objective` on the returned solution is the power term only; the slack penalty is left out so that
    objectives of successive iterations compare directly.
    """
    if lambda_reg <= 0:
        raise OptimizerError("slack regularization must be positive")

    box_upper = _check_box(box_upper, coeffs)
    num = len(box_upper)
    thresholds = np.asarray(sinr_thresholds, dtype=float).reshape(-1)
    if len(thresholds) != len(coeffs):
        raise OptimizerError(f"{len(thresholds)} thresholds for {len(coeffs)} UEs")
    scale = np.asarray(repeater_scale, dtype=float).reshape(-1)

    if num == 0 or not np.any(box_upper > 0):
        alpha = np.zeros(num)
        slacks = np.array([max(th / c.rho - c.lhs(alpha), 0.0) for c, th in zip(coeffs, thresholds)])
        return SubproblemSolution(alpha=alpha, status=SolveStatus.Optimal, objective=0.0, slacks=slacks)

    x = cp.Variable(num, name="x")
    # slacks in SINR units; f_k = scaled_slack_k / rho_u
    scaled_slack = cp.Variable(len(coeffs), name="slack", nonneg=True)
    constraints = [x >= 0, x <= 1]
    for k, c in enumerate(coeffs):
        affine, squares = _surrogate_terms(c, box_upper, x)
        constraints.append(squares + thresholds[k] <= affine + scaled_slack[k])

    weights = scale * box_upper
    power = cp.sum(cp.multiply(weights, x)) if objective == "l1" else cp.sum_squares(cp.multiply(weights, x))
    rho = coeffs[0].rho if coeffs else 1.0

    x.value = _warm_x(warm_alpha, box_upper)
    problem = cp.Problem(cp.Minimize(power + (lambda_reg / rho) * cp.sum(scaled_slack)), constraints)
    seconds = _solve(problem, solver, max_iterations)
    status = _status(problem)

    if x.value is None:
        alpha = box_upper * _warm_x(warm_alpha, box_upper)
        status = SolveStatus.MaxIterations if status is SolveStatus.Optimal else status
    else:
        alpha = np.clip(box_upper * np.asarray(x.value).reshape(-1), 0.0, box_upper)

    slacks = np.array([max(th / c.rho - c.lhs(alpha), 0.0) for c, th in zip(coeffs, thresholds)])
    value = minpow_objective(alpha, scale, objective)
    logfire.debug("min-power subproblem {status}", status=status.value, power=value, max_slack=float(slacks.max(initial=0.0)))
    return SubproblemSolution(alpha=alpha, status=status, objective=value, slacks=slacks, solve_seconds=seconds)


def max_violation(solution: SubproblemSolution, coeffs: Sequence[ConstraintCoeffs], sinr_thresholds: ArrayLike | None = None) -> float:
    """Largest violation of the linearized constraints at the returned point, relative to 1 + |rhs|."""
    worst = 0.0
    for k, c in enumerate(coeffs):
        if sinr_thresholds is None:
            rhs = solution.t
            value = c.lhs(solution.alpha)
        else:
            rhs = float(np.asarray(sinr_thresholds)[k]) / c.rho
            value = c.lhs(solution.alpha) + solution.slacks[k]
        worst = max(worst, (rhs - value) / (1.0 + abs(rhs)))
    return worst

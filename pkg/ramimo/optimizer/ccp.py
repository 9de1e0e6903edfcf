# NOTES:
# Convex-concave procedure over the repeater gains, as a small pydantic_graph workflow:
#
#   Linearize -> SolveSubproblem -> CheckConvergence -> (Linearize | End)
#
# The same graph drives the max-min SINR loop and the slack-regularized min-power (feasible point pursuit) loop;
# the mode on the problem picks the subproblem. Coefficients travel on the nodes, not on the state, since the
# graph snapshots its state after every step.

from __future__ import annotations

import asyncio
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal, Optional

import logfire_api as logfire
import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, Field
from pydantic_graph import BaseNode, End, Graph, GraphRunContext

from _utils.trace_history import TraceHistory, TraceRow
from ramimo.channels import ChannelRealization
from ramimo.errors import OptimizerError
from ramimo.geometry import ScenarioConfig
from ramimo.mimo import gain_upper_bounds, lmmse_sinrs, repeater_scale
from ramimo.optimizer.subproblems import (
    SolveStatus,
    SubproblemSolution,
    default_lambda,
    minpow_objective,
    solve_maxmin_subproblem,
    solve_minpow_subproblem,
)
from ramimo.optimizer.surrogate import ConstraintCoeffs, assemble_all, linearize


class OptimizerConfig(BaseModel):
    max_ccp_iterations: int = Field(default=50, ge=1, description="Cap on convexify-and-solve rounds")
    max_solver_iterations: int = Field(default=100, ge=1, description="Cap handed to the conic solver")
    solver: str = Field(default="CLARABEL", description="cvxpy solver name (CLARABEL, ECOS or SCS)")
    feasibility_tol: float = Field(default=1e-4, gt=0, description="Largest slack still counted as feasible")
    lambda_reg: Optional[float] = Field(default=None, gt=0, description="Slack penalty; None picks a default")
    minpow_objective: Literal["l1", "l2"] = Field(default="l1", description="sum c_l alpha_l or total output power")
    init: Literal["max", "zero"] = Field(default="max", description="Starting gains of the procedure")


class CcpMode(Enum):
    MaxMin = "maxmin"
    MinPow = "minpow"


class CcpStatus(Enum):
    Converged = "converged"
    MaxIterations = "max-iterations"
    Infeasible = "infeasible"


@dataclass
class CcpOutcome:
    alpha: np.ndarray
    sinrs: np.ndarray
    sinr_floor: float
    objective: float
    slacks: np.ndarray
    feasible: bool
    status: CcpStatus
    iterations: int
    trace: TraceHistory
    seconds: float

    @property
    def warning(self) -> bool:
        return self.status is not CcpStatus.Converged


def relative_change(alpha_new: ArrayLike, alpha_old: ArrayLike) -> float:
    """
    ||new - old||^2 / ||old||^2, falling back to the absolute ||new||^2 when old is zero.

    Example call: relative_change([1.0, 1.0], [1.0, 0.0])  # 1.0
    """
    alpha_new = np.asarray(alpha_new, dtype=float)
    alpha_old = np.asarray(alpha_old, dtype=float)
    denominator = float(np.sum(alpha_old**2))
    if denominator == 0.0:
        return float(np.sum(alpha_new**2))
    return float(np.sum((alpha_new - alpha_old) ** 2) / denominator)


#----------------------#
#   GRAPH              #
#----------------------#

@dataclass
class CcpProblem:
    realization: ChannelRealization
    settings: OptimizerConfig
    mode: CcpMode
    box_upper: np.ndarray
    scale: np.ndarray
    epsilon: float
    sinr_thresholds: Optional[np.ndarray] = None
    lambda_reg: float = 1.0


@dataclass
class CcpState:
    alpha: np.ndarray
    iteration: int = 0
    trace: TraceHistory = field(default_factory=TraceHistory)
    status: CcpStatus = CcpStatus.MaxIterations
    slacks: Optional[np.ndarray] = None
    best_alpha: Optional[np.ndarray] = None
    best_slacks: Optional[np.ndarray] = None
    best_key: tuple = (float("inf"),)


def _best_key(problem: CcpProblem, sinrs: np.ndarray, solution: SubproblemSolution) -> tuple:
    """Smaller is better."""
    if problem.mode is CcpMode.MaxMin:
        return (-float(sinrs.min(initial=np.inf)),)
    max_slack = float(solution.slacks.max(initial=0.0))
    feasible = max_slack <= problem.settings.feasibility_tol
    return (0.0, solution.objective) if feasible else (1.0, max_slack)


class Linearize(BaseNode[CcpState]):
    def __init__(self, problem: CcpProblem):
        self.problem = problem

    async def run(self, ctx: GraphRunContext[CcpState]) -> SolveSubproblem:
        lin = linearize(self.problem.realization, ctx.state.alpha)
        return SolveSubproblem(self.problem, assemble_all(self.problem.realization, lin))


class SolveSubproblem(BaseNode[CcpState]):
    def __init__(self, problem: CcpProblem, coeffs: list[ConstraintCoeffs]):
        self.problem = problem
        self.coeffs = coeffs

    async def run(self, ctx: GraphRunContext[CcpState]) -> CheckConvergence:
        problem = self.problem
        settings = problem.settings

        if problem.mode is CcpMode.MaxMin:
            solution = solve_maxmin_subproblem(
                self.coeffs, problem.box_upper,
                warm_alpha=ctx.state.alpha,
                solver=settings.solver,
                max_iterations=settings.max_solver_iterations,
            )
        else:
            solution = solve_minpow_subproblem(
                self.coeffs, problem.box_upper, problem.sinr_thresholds,
                lambda_reg=problem.lambda_reg,
                repeater_scale=problem.scale,
                objective=settings.minpow_objective,
                warm_alpha=ctx.state.alpha,
                solver=settings.solver,
                max_iterations=settings.max_solver_iterations,
            )

        return CheckConvergence(problem, solution)


class CheckConvergence(BaseNode[CcpState]):
    def __init__(self, problem: CcpProblem, solution: SubproblemSolution):
        self.problem = problem
        self.solution = solution

    async def run(self, ctx: GraphRunContext[CcpState]) -> Linearize | End[None]:
        problem, solution, state = self.problem, self.solution, ctx.state

        change = relative_change(solution.alpha, state.alpha)
        state.iteration += 1
        sinrs = lmmse_sinrs(problem.realization, solution.alpha)
        max_slack = float(solution.slacks.max(initial=0.0)) if solution.slacks is not None else float("nan")

        state.trace.append(TraceRow(
            iteration=state.iteration,
            objective=solution.objective,
            min_sinr=float(sinrs.min(initial=np.inf)),
            max_slack=max_slack,
            relative_change=change,
            status=solution.status.value,
            solve_seconds=solution.solve_seconds,
        ))

        if solution.status is SolveStatus.MaxIterations:
            logfire.warn("subproblem hit the solver cap at iteration {iteration}", iteration=state.iteration)

        key = _best_key(problem, sinrs, solution)
        if key < state.best_key:
            state.best_key = key
            state.best_alpha = solution.alpha.copy()
            state.best_slacks = solution.slacks

        state.alpha = solution.alpha
        state.slacks = solution.slacks

        if solution.status is SolveStatus.Infeasible:
            state.status = CcpStatus.Infeasible
            return End(None)

        if change <= problem.epsilon:
            state.status = CcpStatus.Converged
            return End(None)

        if state.iteration >= problem.settings.max_ccp_iterations:
            state.status = CcpStatus.MaxIterations
            return End(None)

        return Linearize(problem)


ccp_graph = Graph(nodes=[Linearize, SolveSubproblem, CheckConvergence])


#----------------------#
#   ENTRY POINTS       #
#----------------------#

def _initial_alpha(settings: OptimizerConfig, box_upper: np.ndarray) -> np.ndarray:
    return box_upper.copy() if settings.init == "max" else np.zeros_like(box_upper)


def _run(problem: CcpProblem) -> CcpOutcome:
    started = time.perf_counter()
    alpha0 = _initial_alpha(problem.settings, problem.box_upper)
    state = CcpState(alpha=alpha0)

    sinrs0 = lmmse_sinrs(problem.realization, alpha0)
    state.trace.append(TraceRow(
        iteration=0,
        objective=minpow_objective(alpha0, problem.scale, problem.settings.minpow_objective)
        if problem.mode is CcpMode.MinPow else float(sinrs0.min(initial=np.inf)) / problem.realization.uplink_power,
        min_sinr=float(sinrs0.min(initial=np.inf)),
        max_slack=float("nan"),
        relative_change=float("nan"),
        status="init",
        solve_seconds=0.0,
    ))

    with logfire.span("ccp {mode}", mode=problem.mode.value, num_repeaters=len(alpha0)):
        asyncio.run(ccp_graph.run(Linearize(problem), state=state))

    # capped runs hand back the best iterate seen instead of the last one
    if state.status is CcpStatus.Converged or state.best_alpha is None:
        alpha, slacks = state.alpha, state.slacks
    else:
        alpha, slacks = state.best_alpha, state.best_slacks
        logfire.warn(
            "ccp {mode} stopped without converging ({status}) after {iterations} iterations",
            mode=problem.mode.value, status=state.status.value, iterations=state.iteration,
        )

    sinrs = lmmse_sinrs(problem.realization, alpha)
    floor = float(sinrs.min(initial=np.inf)) if len(sinrs) else float("inf")
    slacks = np.zeros(problem.realization.num_ues) if slacks is None else np.asarray(slacks)

    if problem.mode is CcpMode.MaxMin:
        objective = floor
        feasible = True
    else:
        objective = minpow_objective(alpha, problem.scale, problem.settings.minpow_objective)
        feasible = bool(slacks.max(initial=0.0) <= problem.settings.feasibility_tol)

    return CcpOutcome(
        alpha=alpha,
        sinrs=sinrs,
        sinr_floor=floor,
        objective=objective,
        slacks=slacks,
        feasible=feasible,
        status=state.status,
        iterations=state.iteration,
        trace=state.trace,
        seconds=time.perf_counter() - started,
    )


def maxmin_ccp(
    realization: ChannelRealization,
    config: ScenarioConfig,
    settings: OptimizerConfig | None = None,
) -> CcpOutcome:
    """
    Max-min SINR amplification: iterate convexify-and-solve from the MaxPow gains until the gains settle.

    Example call: maxmin_ccp(realization, ScenarioConfig()).sinr_floor

    Args:
        realization (ChannelRealization): channels of one coherence block.
        config (ScenarioConfig): supplies the gain and power caps and the stopping accuracy epsilon.
        settings (OptimizerConfig | None): iteration caps, solver and initialization.
    Returns:
        CcpOutcome: gains, true LMMSE SINRs at those gains and the floor min_k SINR_k.
    """
    settings = settings or OptimizerConfig()
    problem = CcpProblem(
        realization=realization,
        settings=settings,
        mode=CcpMode.MaxMin,
        box_upper=gain_upper_bounds(realization, config),
        scale=repeater_scale(realization),
        epsilon=config.epsilon,
    )
    return _run(problem)


def minpow_fpp(
    realization: ChannelRealization,
    config: ScenarioConfig,
    sinr_thresholds: ArrayLike,
    settings: OptimizerConfig | None = None,
) -> CcpOutcome:
    """Least repeater power meeting per-UE SINR targets; `feasible` reports whether every slack vanished."""
    settings = settings or OptimizerConfig()
    thresholds = np.broadcast_to(np.asarray(sinr_thresholds, dtype=float), (realization.num_ues,)).copy()
    if np.any(thresholds < 0):
        raise OptimizerError("SINR thresholds must be non-negative")

    lambda_reg = settings.lambda_reg or default_lambda(thresholds, realization.uplink_power)
    problem = CcpProblem(
        realization=realization,
        settings=settings,
        mode=CcpMode.MinPow,
        box_upper=gain_upper_bounds(realization, config),
        scale=repeater_scale(realization),
        epsilon=config.epsilon,
        sinr_thresholds=thresholds,
        lambda_reg=lambda_reg,
    )
    return _run(problem)

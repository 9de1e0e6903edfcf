from ramimo.optimizer.ccp import CcpOutcome, CcpStatus, OptimizerConfig, maxmin_ccp, minpow_fpp, relative_change
from ramimo.optimizer.subproblems import SolveStatus, SubproblemSolution, solve_maxmin_subproblem, solve_minpow_subproblem
from ramimo.optimizer.surrogate import ConstraintCoeffs, LinearizationPoint, assemble_coeffs, linearize

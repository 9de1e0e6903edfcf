import numpy as np
import pytest

from ramimo.errors import OptimizerError
from ramimo.mimo import repeater_scale
from ramimo.optimizer.subproblems import (
    SolveStatus,
    default_lambda,
    max_violation,
    minpow_objective,
    solve_maxmin_subproblem,
    solve_minpow_subproblem,
)
from ramimo.optimizer.surrogate import ConstraintCoeffs, assemble_all, linearize


def concave_1d(a: float, g: float, c0: float = 0.0) -> ConstraintCoeffs:
    """lhs(alpha) = a alpha + c0 - g alpha^2."""
    return ConstraintCoeffs(
        r=np.array([a, c0]),
        interference=np.zeros((0, 2), dtype=complex),
        g_tilde=np.array([g]),
        d=0.0,
        rho=1.0,
    )


def grid_maxmin(coeffs, upper: np.ndarray, points: int = 1001) -> tuple[float, np.ndarray]:
    xs = np.linspace(0.0, upper[0], points)
    ys = np.linspace(0.0, upper[1], points)
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    level = np.min([c.lhs(grid) for c in coeffs], axis=0)
    best = int(np.argmax(level))
    return float(level[best]), grid[best]


def refined_grid_maxmin(coeffs, upper: np.ndarray) -> float:
    """Coarse grid at 1e-3 of the box, then a fine grid around the coarse winner."""
    coarse, point = grid_maxmin(coeffs, upper)
    step = upper / 1000.0
    low = np.maximum(point - 2 * step, 0.0)
    high = np.minimum(point + 2 * step, upper)
    xs = np.linspace(low[0], high[0], 201)
    ys = np.linspace(low[1], high[1], 201)
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    fine = float(np.max(np.min([c.lhs(grid) for c in coeffs], axis=0)))
    return max(coarse, fine)


def test_one_dimensional_vertex():
    solution = solve_maxmin_subproblem([concave_1d(a=2.0, g=1.0, c0=0.5)], np.array([5.0]))

    assert solution.status is SolveStatus.Optimal
    # flat at the vertex: a solver gap of eps in t moves alpha by about sqrt(eps)
    assert solution.alpha[0] == pytest.approx(1.0, abs=1e-3)
    assert solution.t == pytest.approx(1.5, abs=1e-6)


def test_one_dimensional_vertex_clipped_by_box():
    solution = solve_maxmin_subproblem([concave_1d(a=2.0, g=1.0)], np.array([0.4]))

    assert solution.alpha[0] == pytest.approx(0.4, abs=1e-6)
    assert solution.t == pytest.approx(2.0 * 0.4 - 0.16, abs=1e-6)


def test_degenerate_box(make_realization):
    real = make_realization(4, 2, 2, seed=0)
    coeffs = assemble_all(real, linearize(real, np.zeros(2)))

    solution = solve_maxmin_subproblem(coeffs, np.zeros(2))

    np.testing.assert_array_equal(solution.alpha, 0.0)
    assert solution.t == pytest.approx(min(c.lhs(np.zeros(2)) for c in coeffs))


@pytest.mark.parametrize("seed", range(20))
def test_maxmin_matches_grid_search(make_realization, seed):
    real = make_realization(4, 2, 2, seed=seed)
    rng = np.random.default_rng(seed)
    upper = rng.uniform(0.5, 1.0, 2)
    coeffs = assemble_all(real, linearize(real, rng.uniform(0.0, 1.0, 2) * upper))

    solution = solve_maxmin_subproblem(coeffs, upper)
    oracle = refined_grid_maxmin(coeffs, upper)

    assert solution.status is SolveStatus.Optimal
    assert solution.t == pytest.approx(oracle, abs=1e-3 * (1.0 + abs(oracle)))
    assert solution.t >= oracle - 1e-3 * (1.0 + abs(oracle))
    assert max_violation(solution, coeffs) <= 1e-6
    assert np.all((solution.alpha >= 0) & (solution.alpha <= upper + 1e-8))


def test_no_repeaters():
    coeffs = [
        ConstraintCoeffs(r=np.array([3.0]), interference=np.zeros((0, 1), dtype=complex),
                         g_tilde=np.zeros(0), d=1.0, rho=1.0),
    ]

    solution = solve_maxmin_subproblem(coeffs, np.zeros(0))

    assert solution.alpha.shape == (0,)
    assert solution.t == pytest.approx(2.0)


def test_box_mismatch_is_rejected():
    with pytest.raises(OptimizerError):
        solve_maxmin_subproblem([concave_1d(1.0, 1.0)], np.ones(2))


def test_minpow_zero_thresholds_switches_everything_off(make_realization):
    real = make_realization(4, 3, 2, seed=1)
    coeffs = assemble_all(real, linearize(real, np.zeros(3)))

    solution = solve_minpow_subproblem(
        coeffs, np.ones(3), np.zeros(2), lambda_reg=10.0, repeater_scale=repeater_scale(real),
    )

    assert solution.status is SolveStatus.Optimal
    np.testing.assert_allclose(solution.alpha, 0.0, atol=1e-6)
    np.testing.assert_allclose(solution.slacks, 0.0, atol=1e-7)
    assert solution.objective == pytest.approx(0.0, abs=1e-5)


def test_minpow_unreachable_threshold_leaves_slack(make_realization):
    real = make_realization(4, 3, 1, seed=2)
    coeffs = assemble_all(real, linearize(real, np.full(3, 0.5)))
    best = solve_maxmin_subproblem(coeffs, np.ones(3)).t

    threshold = real.uplink_power * (best + 1.0)
    solution = solve_minpow_subproblem(
        coeffs, np.ones(3), [threshold], lambda_reg=1e3, repeater_scale=repeater_scale(real),
    )

    # the best reachable level falls short by exactly one unit
    assert 1.0 - 1e-6 <= solution.slacks[0] <= 1.05


def test_minpow_large_penalty_meets_reachable_targets(make_realization):
    real = make_realization(5, 3, 2, seed=3)
    coeffs = assemble_all(real, linearize(real, np.full(3, 0.5)))
    best = solve_maxmin_subproblem(coeffs, np.ones(3)).t
    thresholds = np.full(2, 0.5 * best * real.uplink_power)

    solution = solve_minpow_subproblem(
        coeffs, np.ones(3), thresholds, lambda_reg=1e4, repeater_scale=repeater_scale(real),
    )

    assert solution.slacks.max() <= 1e-6
    assert max_violation(solution, coeffs, thresholds) <= 1e-6
    for c, th in zip(coeffs, thresholds):
        assert c.lhs(solution.alpha) >= th / c.rho - 1e-6


def test_minpow_l2_objective_is_output_power(make_realization):
    real = make_realization(4, 3, 2, seed=4)
    coeffs = assemble_all(real, linearize(real, np.full(3, 0.5)))
    scale = repeater_scale(real)
    best = solve_maxmin_subproblem(coeffs, np.ones(3)).t

    solution = solve_minpow_subproblem(
        coeffs, np.ones(3), np.full(2, 0.5 * best), lambda_reg=1e3, repeater_scale=scale, objective="l2",
    )

    assert solution.objective == pytest.approx(np.sum((scale * solution.alpha) ** 2))
    assert minpow_objective(solution.alpha, scale, "l1") == pytest.approx(np.sum(scale * solution.alpha))


def test_minpow_rejects_non_positive_penalty(make_realization):
    real = make_realization(4, 2, 2, seed=5)
    coeffs = assemble_all(real, linearize(real, np.zeros(2)))

    with pytest.raises(OptimizerError):
        solve_minpow_subproblem(coeffs, np.ones(2), np.zeros(2), lambda_reg=0.0, repeater_scale=np.ones(2))


def test_default_lambda():
    assert default_lambda(np.array([1.8284, 0.5]), rho=0.1) == pytest.approx(10.0 * 18.284 * 2)
    assert default_lambda(np.array([0.01, 0.0]), rho=1.0) == pytest.approx(0.2)
    assert default_lambda(np.zeros(3), rho=1.0) == 1.0

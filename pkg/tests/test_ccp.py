import numpy as np
import pytest

from ramimo.mimo import gain_upper_bounds, lmmse_sinrs, max_pow_alpha, repeater_scale
from ramimo.optimizer.ccp import CcpStatus, OptimizerConfig, maxmin_ccp, minpow_fpp, relative_change

SHORT_RUN = OptimizerConfig(max_ccp_iterations=20)


def test_relative_change_examples():
    assert relative_change([0.5, 0.2], [0.5, 0.2]) == 0.0
    assert relative_change([1.0, 1.0], [1.0, 0.0]) == pytest.approx(1.0)
    # zero previous iterate falls back to the absolute squared norm
    assert relative_change([3.0, 4.0], [0.0, 0.0]) == pytest.approx(25.0)


def test_maxmin_without_repeaters(make_realization, unit_config):
    real = make_realization(4, 0, 3, seed=0)

    outcome = maxmin_ccp(real, unit_config)

    assert outcome.alpha.shape == (0,)
    assert outcome.iterations == 1
    assert outcome.status is CcpStatus.Converged
    assert outcome.sinr_floor == pytest.approx(lmmse_sinrs(real, np.zeros(0)).min())


@pytest.mark.parametrize("seed", range(20))
def test_maxmin_true_floor_never_decreases(make_realization, unit_config, seed):
    real = make_realization(4, 3, 3, seed=seed)

    outcome = maxmin_ccp(real, unit_config, SHORT_RUN)
    floors = outcome.trace.to_frame()["min_sinr"].to_numpy()

    assert len(floors) == outcome.iterations + 1
    for before, after in zip(floors[:-1], floors[1:]):
        assert after >= before - 1e-6 * (1.0 + abs(before))


@pytest.mark.parametrize("seed", range(5))
def test_maxmin_is_self_consistent_and_beats_max_pow(make_realization, unit_config, seed):
    real = make_realization(5, 4, 3, seed=seed)

    outcome = maxmin_ccp(real, unit_config, SHORT_RUN)
    max_pow_floor = lmmse_sinrs(real, max_pow_alpha(real, unit_config)).min()

    assert outcome.sinr_floor == pytest.approx(lmmse_sinrs(real, outcome.alpha).min(), rel=1e-9)
    assert outcome.sinr_floor >= max_pow_floor - 1e-6 * max_pow_floor
    upper = gain_upper_bounds(real, unit_config)
    assert np.all((outcome.alpha >= 0) & (outcome.alpha <= upper + 1e-8))


def test_maxmin_iteration_cap_returns_best_iterate(make_realization, unit_config):
    real = make_realization(4, 3, 2, seed=1)
    settings = OptimizerConfig(max_ccp_iterations=1, init="zero")

    outcome = maxmin_ccp(real, unit_config, settings)

    assert outcome.status is CcpStatus.MaxIterations
    assert outcome.warning
    assert outcome.iterations == 1


@pytest.mark.parametrize("seed", range(5))
def test_fpp_meets_targets_below_maxmin_floor(make_realization, unit_config, seed):
    real = make_realization(5, 4, 2, seed=seed)
    floor = maxmin_ccp(real, unit_config, SHORT_RUN).sinr_floor

    # 3 dB below what max-min reaches
    outcome = minpow_fpp(real, unit_config, floor / 2.0, SHORT_RUN)

    assert outcome.feasible
    assert outcome.slacks.max() <= 1e-4
    # slack tolerance is in SINR / rho units
    assert outcome.sinrs.min() >= floor / 2.0 - 1e-4 * real.uplink_power


def test_fpp_flags_targets_above_maxmin_floor(make_realization, unit_config):
    real = make_realization(5, 4, 2, seed=7)
    floor = maxmin_ccp(real, unit_config, SHORT_RUN).sinr_floor

    outcome = minpow_fpp(real, unit_config, 10.0 * floor, SHORT_RUN)

    assert not outcome.feasible
    assert outcome.slacks.max() > 1e-4


def test_fpp_uses_less_than_max_pow_for_easy_targets(make_realization, unit_config):
    real = make_realization(5, 4, 3, seed=8)
    max_pow = max_pow_alpha(real, unit_config)
    easy = 0.01 * lmmse_sinrs(real, max_pow).min()

    outcome = minpow_fpp(real, unit_config, easy, SHORT_RUN)

    assert outcome.feasible
    assert outcome.objective < np.sum(repeater_scale(real) * max_pow)


def test_fpp_objective_non_increasing_once_feasible(make_realization, unit_config):
    real = make_realization(5, 4, 2, seed=9)
    floor = maxmin_ccp(real, unit_config, SHORT_RUN).sinr_floor

    outcome = minpow_fpp(real, unit_config, floor / 2.0, SHORT_RUN)
    trace = outcome.trace.to_frame().iloc[1:]

    rows = list(trace.itertuples(index=False))
    for before, after in zip(rows[:-1], rows[1:]):
        if before.max_slack <= 1e-7:
            assert after.objective <= before.objective + 1e-5 * (1.0 + before.objective)


def test_fpp_without_repeaters(make_realization, unit_config):
    real = make_realization(4, 0, 2, seed=2)
    threshold = 0.5 * lmmse_sinrs(real, np.zeros(0)).min()

    outcome = minpow_fpp(real, unit_config, threshold)

    assert outcome.feasible
    assert outcome.alpha.shape == (0,)
    assert outcome.objective == 0.0


def test_fpp_l2_objective(make_realization, unit_config):
    real = make_realization(5, 4, 2, seed=10)
    easy = 0.1 * lmmse_sinrs(real, max_pow_alpha(real, unit_config)).min()

    outcome = minpow_fpp(real, unit_config, easy, OptimizerConfig(max_ccp_iterations=20, minpow_objective="l2"))

    assert outcome.feasible
    assert outcome.objective == pytest.approx(np.sum((repeater_scale(real) * outcome.alpha) ** 2))

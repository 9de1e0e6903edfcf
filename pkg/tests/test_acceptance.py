"""
Reduced-size runs of the full presets, checked against the headline numbers with their stated tolerances.
Each takes from tens of minutes to hours:

    RAMIMO_WORKERS=8 pytest -m slow

They run in the default operating regime (gain caps read as amplitude dB).
"""

import numpy as np
import pytest

from ramimo.harness.config import load_config
from ramimo.harness.experiments import Policy, System, block_realization, drop_setup, run_experiment
from ramimo.optimizer.ccp import maxmin_ccp, minpow_fpp

pytestmark = pytest.mark.slow


def percentile(frame, query: str, column: str, q: float) -> float:
    return float(np.percentile(frame.query(query)[column], q))


def test_repeaters_lift_the_weak_tail_and_approach_cell_free():
    config = load_config(
        "sinr-cdf", preset="sinr-cdf-full", overrides=["drops=30", "blocks_per_drop=20", "repeater_counts=[64, 400]"],
    )
    results = run_experiment(config, show_progress=False).results

    mmimo_p10 = percentile(results, "system == 'mMIMO'", "sinr_db", 10)
    dense_p10 = percentile(results, "system == 'RA-MIMO MaxPow' and L == 400", "sinr_db", 10)
    assert dense_p10 - mmimo_p10 >= 20.0 - 3.0

    ra_p50 = percentile(results, "system == 'RA-MIMO MaxPow' and L == 64", "sinr_db", 50)
    cf_p50 = percentile(results, "system == 'cfmMIMO'", "sinr_db", 50)
    assert abs(cf_p50 - ra_p50) <= 3.0


def test_pruning_near_repeaters_costs_little_until_half_are_gone():
    config = load_config(
        "pruning-sweep", preset="pruning-sweep-full",
        overrides=["drops=30", "blocks_per_drop=20", "prune_thresholds_m=[0, 450, 800]"],
    )
    results = run_experiment(config, show_progress=False).results
    medians = results.groupby("threshold_m")["sinr_db"].median()
    removed = results.groupby("threshold_m")["removed_fraction"].first()

    assert removed[450.0] == pytest.approx(12 / 64)
    assert removed[800.0] == pytest.approx(0.5)
    assert medians[0.0] - medians[450.0] <= 1.5
    assert medians[0.0] - medians[800.0] == pytest.approx(5.0, abs=2.5)


def test_maxmin_helps_cell_edge_users():
    config = load_config("maxmin-edge", preset="maxmin-edge-full", overrides=["drops=30", "include_cfmmimo=false"])
    record = run_experiment(config, show_progress=False)
    medians = record.results.groupby("system")["min_sinr_db"].median()

    assert medians[System.MaxMin.value] - medians[System.MaxPow.value] == pytest.approx(4.0, abs=2.0)
    assert medians[System.MaxPow.value] - medians[System.MassiveMimo.value] >= 8.0
    assert record.failure_rate <= 0.05


def test_sleep_policies_save_most_of_the_power():
    config = load_config("energy-tradeoff", preset="energy-tradeoff-full", overrides=["drops=30"])
    summary = run_experiment(config, show_progress=False).summary.set_index("policy")
    reduction = summary["reduction_pct"]

    assert reduction[Policy.LongMajority.value] == pytest.approx(70.0, abs=10.0)
    assert summary.loc[Policy.LongMajority.value, "outage"] <= 0.02
    assert reduction[Policy.LongOr.value] >= 55.0
    assert reduction[Policy.LongMajority.value] >= 55.0
    for short, long in ((Policy.ShortOr, Policy.LongOr), (Policy.ShortMajority, Policy.LongMajority)):
        assert reduction[short.value] - reduction[long.value] <= 10.0


def test_single_block_solves_in_bounded_time():
    config = load_config("maxmin-edge", preset="maxmin-edge-full")
    deployment, large_scale = drop_setup(config, config.scenario, 0)
    real = block_realization(config, config.scenario, deployment, large_scale, 0, 0)

    maxmin = maxmin_ccp(real, config.scenario, config.optimizer)
    minpow = minpow_fpp(real, config.scenario, config.energy.sinr_threshold, config.optimizer)

    assert maxmin.seconds <= 60.0
    assert minpow.seconds <= 120.0

import numpy as np
import pytest

from _utils.trace_history import TraceHistory, TraceRow
from _utils.utils import Utils


def row(iteration: int, min_sinr: float = 1.0) -> TraceRow:
    return TraceRow(
        iteration=iteration, objective=0.5, min_sinr=min_sinr, max_slack=0.0,
        relative_change=0.1, status="optimal", solve_seconds=0.01,
    )


def test_trace_history_rejects_foreign_rows():
    with pytest.raises(TypeError):
        TraceHistory().append({"iteration": 1})


def test_trace_history_frame_has_leading_labels():
    history = TraceHistory().append(row(0)).append(row(1, 2.0))

    frame = history.to_frame(drop=3, block=1)

    assert list(frame.columns[:2]) == ["drop", "block"]
    assert len(history) == 2
    assert history.last().min_sinr == 2.0
    assert frame["drop"].tolist() == [3, 3]


def test_trace_history_empty_frame_keeps_columns():
    frame = TraceHistory().to_frame(drop=0)
    assert frame.empty
    assert "relative_change" in frame.columns


def test_unit_conversions():
    assert Utils.dbm_to_watts(30.0) == pytest.approx(1.0)
    assert Utils.watts_to_dbm(0.1) == pytest.approx(20.0)
    assert Utils.db_to_linear(10.0) == pytest.approx(10.0)
    assert Utils.linear_to_db(100.0) == pytest.approx(20.0)
    # amplifier gains are amplitude dB
    assert Utils.gain_db_to_amplitude(20.0) == pytest.approx(10.0)


def test_rng_for_is_addressed_by_key():
    first = Utils.rng_for(7, 2, 1).standard_normal(4)
    again = Utils.rng_for(7, 2, 1).standard_normal(4)
    other = Utils.rng_for(7, 2, 2).standard_normal(4)

    np.testing.assert_array_equal(first, again)
    assert not np.allclose(first, other)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vigil.behavior import (
    FALSE_ALARM,
    LAPSE,
    TIMEOUT,
    VALID,
    build_targets,
    classify_trial,
    read_targets_csv,
    smooth_rt,
    write_targets_csv,
)
from vigil.ingest import EventLog, Trial


class TestClassify:
    @pytest.mark.parametrize(
        "rt,expected",
        [
            (95.0, FALSE_ALARM),
            (520.0, LAPSE),
            (350.0, VALID),
            (None, TIMEOUT),
            (100.0, VALID),   # boundary: "shorter than" read strictly
            (500.0, VALID),   # boundary: "longer than" read strictly
            (99.999, FALSE_ALARM),
            (500.001, LAPSE),
        ],
    )
    def test_table(self, rt, expected):
        assert classify_trial(rt) == expected


class TestSmoothing:
    def test_window_of_five(self):
        out = smooth_rt([300.0, 310.0, 320.0, 330.0, 340.0])
        assert out[4] == pytest.approx(320.0)

    def test_first_value_is_itself(self):
        out = smooth_rt([412.5, 300.0])
        assert out[0] == 412.5

    def test_truncated_start(self):
        out = smooth_rt([100.0, 200.0, 300.0])
        assert out.tolist() == [100.0, 150.0, 200.0]

    def test_constant_series(self):
        out = smooth_rt([250.0] * 12)
        assert np.allclose(out, 250.0)

    def test_empty(self):
        assert smooth_rt([]).size == 0

    def test_no_future_leakage(self):
        rts = [300.0, 310.0, 290.0, 305.0, 315.0, 320.0]
        base = smooth_rt(rts)
        altered = smooth_rt(rts[:4] + [999.0, 999.0])
        assert np.array_equal(base[:4], altered[:4])


def make_events(rts, start=1.0, step=7.0):
    trials = tuple(
        Trial(index=i + 1, onset_s=start + step * i, rt_ms=rt) for i, rt in enumerate(rts)
    )
    return EventLog(trials)


class TestBuildTargets:
    def test_all_timeouts_empty(self):
        events = make_events([None, None, None])
        assert build_targets(events) == {}

    def test_exclusion_precedes_smoothing(self):
        events = make_events([400.0, 90.0, 420.0])
        targets = build_targets(events)
        assert set(targets) == {1, 3}
        assert targets[1] == 400.0
        assert targets[3] == pytest.approx((400.0 + 420.0) / 2.0)

    def test_boundary_values_survive(self):
        events = make_events([100.0, 500.0])
        targets = build_targets(events)
        assert set(targets) == {1, 2}

    def test_keys_are_original_indices(self):
        events = make_events([300.0, 550.0, None, 320.0, 60.0, 340.0])
        targets = build_targets(events)
        assert set(targets) == {1, 4, 6}
        assert targets[6] == pytest.approx((300.0 + 320.0 + 340.0) / 3.0)

    def test_output_length_equals_valid_count(self):
        rts = [300.0, 90.0, 501.0, 310.0, None, 305.0, 480.0]
        events = make_events(rts)
        targets = build_targets(events)
        n_valid = sum(1 for rt in rts if rt is not None and 100.0 <= rt <= 500.0)
        assert len(targets) == n_valid


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(min_value=100.0, max_value=480.0), min_size=1, max_size=30),
    st.floats(min_value=-15.0, max_value=15.0),
)
def test_smoothing_shift_equivariance(rts, c):
    base = smooth_rt(rts)
    shifted = smooth_rt([r + c for r in rts])
    assert np.allclose(shifted, base + c, atol=1e-9)


def test_targets_csv_round_trip(tmp_path):
    events = make_events([300.0, 90.0, 320.0, None])
    targets = build_targets(events)
    path = tmp_path / "t.csv"
    write_targets_csv(events, targets, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "trial,rt_ms_raw,outcome,rt_ms_smoothed"
    assert lines[2].startswith("2,90.0,false_alarm,")
    assert lines[4] == "4,,timeout,"
    assert read_targets_csv(path) == targets

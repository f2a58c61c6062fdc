import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vigil.ingest import (
    CHANNELS_30,
    DEFAULT_MONTAGE,
    EventLog,
    Montage,
    Recording,
    Trial,
    bandpass_fir,
    common_average_reference,
    design_bandpass,
    downsample,
    filter_transient_samples,
    load_events,
    load_recording,
    save_events,
    save_recording,
)


def make_recording(n_channels=2, n_samples=100, rate=500.0, seed=0):
    rng = np.random.default_rng(seed)
    return Recording(
        participant_id="p0",
        channel_labels=tuple(f"ch{i}" for i in range(n_channels)),
        sample_rate_hz=rate,
        samples=rng.standard_normal((n_channels, n_samples)),
    )


class TestContainer:
    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        samples = rng.standard_normal((3, 77)).astype(np.float32)
        rec = Recording("p1", ("a", "b", "c"), 500.0, samples)
        save_recording(rec, tmp_path / "p1.json")
        loaded = load_recording(tmp_path / "p1.json")
        assert loaded.participant_id == "p1"
        assert loaded.channel_labels == ("a", "b", "c")
        assert loaded.sample_rate_hz == 500.0
        assert np.array_equal(loaded.samples, samples)

    def test_sample_count_follows_file_size(self, tmp_path):
        rec = Recording("p", ("a", "b"), 500.0, np.zeros((2, 500), dtype=np.float32))
        save_recording(rec, tmp_path / "p.json")
        assert (tmp_path / "p.f32").stat().st_size == 4000
        assert load_recording(tmp_path / "p.json").n_samples == 500

    def test_size_mismatch_rejected(self, tmp_path):
        rec = Recording("p", tuple(CHANNELS_30), 500.0, np.zeros((30, 40), dtype=np.float32))
        save_recording(rec, tmp_path / "p.json")
        raw = (tmp_path / "p.f32").read_bytes()
        (tmp_path / "p.f32").write_bytes(raw[: 40 * 4 * 29])  # sized for 29 channels
        with pytest.raises(ValueError, match="divisible|holds"):
            load_recording(tmp_path / "p.json")

    def test_non_divisible_file_rejected(self, tmp_path):
        rec = Recording("p", ("a", "b"), 500.0, np.zeros((2, 10), dtype=np.float32))
        save_recording(rec, tmp_path / "p.json")
        raw = (tmp_path / "p.f32").read_bytes()
        (tmp_path / "p.f32").write_bytes(raw + b"\x00")
        with pytest.raises(ValueError, match="divisible"):
            load_recording(tmp_path / "p.json")

    def test_malformed_header_rejected(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(ValueError, match="malformed"):
            load_recording(tmp_path / "bad.json")
        (tmp_path / "missing.json").write_text(json.dumps({"participant_id": "p"}))
        with pytest.raises(ValueError, match="missing field"):
            load_recording(tmp_path / "missing.json")

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            Recording("p", ("a", "a"), 500.0, np.zeros((2, 10)))

    def test_samples_read_only(self):
        rec = make_recording()
        with pytest.raises(ValueError):
            rec.samples[0, 0] = 1.0


class TestEvents:
    def test_parse_row(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("trial,onset_s,rt_ms\n1,12.5,345.2\n2,18.0,\n")
        events = load_events(path)
        assert events.trials[0] == Trial(1, 12.5, 345.2)
        assert events.trials[1].rt_ms is None  # timeout

    def test_round_trip(self, tmp_path):
        events = EventLog((Trial(1, 1.25, 250.0), Trial(2, 9.5, None), Trial(3, 17.0, 1999.5)))
        save_events(events, tmp_path / "e.csv")
        assert load_events(tmp_path / "e.csv") == events

    def test_non_increasing_onsets_rejected(self):
        with pytest.raises(ValueError, match="onsets"):
            EventLog((Trial(1, 10.0, 300.0), Trial(2, 9.0, 300.0)))

    def test_rt_range_enforced(self):
        with pytest.raises(ValueError, match="rt_ms"):
            EventLog((Trial(1, 1.0, 2400.0),))
        with pytest.raises(ValueError, match="rt_ms"):
            EventLog((Trial(1, 1.0, 0.0),))

    def test_indices_start_at_one(self):
        with pytest.raises(ValueError, match="start at 1"):
            EventLog((Trial(2, 1.0, 300.0),))


class TestMontage:
    def test_builtin_covers_30_channels(self):
        assert len(DEFAULT_MONTAGE.regions) == 30
        counts = {}
        for code in DEFAULT_MONTAGE.regions.values():
            counts[code] = counts.get(code, 0) + 1
        assert counts == {"F": 9, "LT": 4, "RT": 4, "P": 8, "O": 5}
        DEFAULT_MONTAGE.check_covers(CHANNELS_30)

    def test_known_assignments(self):
        assert DEFAULT_MONTAGE.region_of("P7") == "LT"
        assert DEFAULT_MONTAGE.region_of("O1") == "O"
        assert DEFAULT_MONTAGE.region_of("F3") == "F"
        assert DEFAULT_MONTAGE.region_of("P8") == "RT"
        assert DEFAULT_MONTAGE.region_of("Cz") == "P"

    def test_unknown_region_code_rejected(self):
        with pytest.raises(ValueError, match="region code"):
            Montage({"X1": "Z"})

    def test_missing_channel_detected(self):
        with pytest.raises(ValueError, match="not in montage"):
            DEFAULT_MONTAGE.region_of("XX")


class TestCommonAverageReference:
    def test_zero_mean_input_unchanged(self):
        t = np.linspace(0, 1, 200)
        a = np.sin(2 * np.pi * 3 * t)
        rec = Recording("p", ("a", "b"), 200.0, np.vstack([a, -a]))
        out = common_average_reference(rec)
        assert np.allclose(out.samples, rec.samples, atol=1e-12)

    def test_constant_offset_removed(self):
        rec = make_recording(4, 300)
        centered = common_average_reference(rec)
        shifted = Recording("p", rec.channel_labels, 500.0, np.asarray(centered.samples) + 7.5)
        out = common_average_reference(shifted)
        assert np.abs(out.samples - centered.samples).max() < 1e-10

    def test_column_means_vanish(self):
        out = common_average_reference(make_recording(5, 400, seed=3))
        assert np.abs(out.samples.mean(axis=0)).max() < 1e-10

    def test_idempotent(self):
        rec = make_recording(6, 256, seed=4)
        once = common_average_reference(rec)
        twice = common_average_reference(once)
        assert np.abs(twice.samples - once.samples).max() < 1e-10

    def test_single_channel_rejected(self):
        with pytest.raises(ValueError, match=">= 2"):
            common_average_reference(make_recording(1, 50))


class TestBandpass:
    ORDER = 3300

    def test_kernel_exactly_symmetric(self):
        h = design_bandpass(0.1, 47.0, self.ORDER, 500.0)
        assert len(h) == self.ORDER + 1
        for k in range(self.ORDER + 1):
            assert h[k] == h[self.ORDER - k]

    def test_dc_rejected(self):
        rec = Recording("p", ("a", "b"), 500.0, np.ones((2, 8000)))
        out = bandpass_fir(rec, 0.1, 47.0, self.ORDER)
        margin = filter_transient_samples(self.ORDER)
        assert np.abs(out.samples[:, margin:-margin]).max() < 0.01

    def test_10hz_passband_unity(self):
        # oracle: evaluate the designed frequency response at 10 Hz directly
        h = design_bandpass(0.1, 47.0, self.ORDER, 500.0)
        w = 2 * np.pi * 10.0 / 500.0
        gain = np.abs((h * np.exp(-1j * w * np.arange(h.size))).sum())
        assert abs(gain - 1.0) < 0.01

        t = np.arange(20000) / 500.0
        x = np.sin(2 * np.pi * 10.0 * t)
        rec = Recording("p", ("a", "b"), 500.0, np.vstack([x, x]))
        out = bandpass_fir(rec, 0.1, 47.0, self.ORDER)
        steady = out.samples[0, 5000:15000]  # 200 whole cycles
        # projection onto the tone recovers the amplitude exactly
        amp = 2.0 * np.abs(np.mean(steady * np.exp(-2j * np.pi * 10.0 * t[5000:15000])))
        assert abs(amp - 1.0) < 0.01
        assert abs(amp - gain) < 1e-3

    def test_zero_phase_pulse(self):
        pulse = np.zeros(8000)
        pulse[4000] = 1.0
        rec = Recording("p", ("a",) , 500.0, pulse[None, :])
        out = bandpass_fir(rec, 0.1, 47.0, self.ORDER)
        assert int(np.argmax(out.samples[0])) == 4000

    def test_linearity(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((1, 4000))
        y = rng.standard_normal((1, 4000))
        a, b = 2.5, -0.75

        def run(s):
            return bandpass_fir(Recording("p", ("c",), 500.0, s), 1.0, 40.0, 500).samples

        lhs = run(a * x + b * y)
        rhs = a * run(x) + b * run(y)
        scale = np.abs(rhs).max()
        assert np.abs(lhs - rhs).max() / scale < 1e-9

    def test_band_validation(self):
        rec = make_recording(2, 100, rate=500.0)
        with pytest.raises(ValueError, match="band"):
            bandpass_fir(rec, 0.0, 47.0, 100)
        with pytest.raises(ValueError, match="band"):
            bandpass_fir(rec, 0.1, 260.0, 100)
        with pytest.raises(ValueError, match="even"):
            bandpass_fir(rec, 0.1, 47.0, 101)


class TestDownsample:
    def test_identity(self):
        rec = make_recording(2, 100)
        assert downsample(rec, 1) is rec

    def test_halving(self):
        rec = make_recording(2, 1000, rate=1000.0)
        out = downsample(rec, 2)
        assert out.sample_rate_hz == 500.0
        assert np.array_equal(out.samples, rec.samples[:, ::2])

    def test_ceil_length(self):
        rec = make_recording(1, 1001, rate=1000.0)
        assert downsample(rec, 2).n_samples == 501

    def test_composition(self):
        rec = make_recording(2, 1200, rate=1200.0)
        ab = downsample(downsample(rec, 2), 3)
        direct = downsample(rec, 6)
        assert np.array_equal(ab.samples, direct.samples)
        assert ab.sample_rate_hz == direct.sample_rate_hz

    def test_bad_factor(self):
        with pytest.raises(ValueError, match="positive integer"):
            downsample(make_recording(), 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=6), st.integers(min_value=0, max_value=10_000))
def test_car_idempotent_property(n_channels, seed):
    rec = make_recording(n_channels, 64, seed=seed)
    once = common_average_reference(rec)
    twice = common_average_reference(once)
    assert np.abs(twice.samples - once.samples).max() < 1e-10

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hrv_loop, moments_loop
from psgdct.errors import EmptySignalError, InvalidInputError, InvalidParameterError
from psgdct.features import (
    EventAnnotation,
    EventKind,
    FeatureSchema,
    StaticFeatures,
    assemble_feature_image,
    detect_r_peaks,
    event_stats,
    hrv_metrics,
    rr_from_peaks,
    stat_descriptors,
)
from psgdct.sigprep import ChannelKind, ChannelSignal, Window
from psgdct.synth import SynthConfig, generate_ground_truth, render_ecg


def ecg_window(x, fs, masked_fraction=0.0):
    return Window(ChannelKind.ECG, 0, np.asarray(x, dtype=float), fs, masked_fraction)


def match_beats(detected, truth, tol):
    """Greedy one-to-one matching within ``tol`` samples: (hits, false detections)."""
    detected = list(detected)
    used = set()
    hits = 0
    for t in truth:
        best = None
        for i, d in enumerate(detected):
            if i not in used and abs(d - t) <= tol and (best is None or abs(d - t) < abs(detected[best] - t)):
                best = i
        if best is not None:
            used.add(best)
            hits += 1
    return hits, len(detected) - len(used)


class TestRPeaks:
    def test_one_hz_train(self):
        fs = 125
        beats = 0.5 + np.arange(60.0)
        x = render_ecg(beats, fs, 60 * fs, np.random.default_rng(0))
        peaks = detect_r_peaks(ecg_window(x, fs))
        assert len(peaks) == 60
        np.testing.assert_allclose(np.diff(peaks), 125, atol=2)
        assert np.all(np.abs(peaks - np.round(beats * fs)) <= 2)

    def test_all_zero(self):
        assert detect_r_peaks(ecg_window(np.zeros(7500), 125)).size == 0

    def test_fully_masked(self):
        x = render_ecg(0.5 + np.arange(60.0), 125, 7500, np.random.default_rng(0))
        assert detect_r_peaks(ecg_window(x, 125, masked_fraction=1.0)).size == 0

    def test_rate_ramp(self):
        fs, dur = 125, 120.0
        beats, t = [], 0.4
        while t < dur:
            beats.append(t)
            bpm = 50 + 40 * t / dur
            t += 60.0 / bpm
        x = render_ecg(np.array(beats), fs, int(dur * fs), np.random.default_rng(1))
        peaks = detect_r_peaks(ecg_window(x, fs))
        assert abs(len(peaks) - len(beats)) <= 2

    def test_refractory_and_order(self):
        fs = 125
        cfg = SynthConfig(n_records=1, duration_h=5 / 60, seed=3)
        gt = generate_ground_truth(cfg, 0)
        x = render_ecg(gt.beat_times_s, fs, int(300 * fs), np.random.default_rng(3))
        peaks = detect_r_peaks(ecg_window(x, fs))
        assert np.all(np.diff(peaks) >= math.ceil(0.25 * fs))

    def test_low_fs_rejected(self):
        with pytest.raises(InvalidParameterError):
            detect_r_peaks(ecg_window(np.zeros(1000), 50))

    def test_recovery_over_100_records(self):
        tp = fp = total = 0
        for seed in range(100):
            cfg = SynthConfig(n_records=1, duration_h=5 / 60, seed=1000 + seed)
            gt = generate_ground_truth(cfg, 0, label=seed % 2)
            fs = 125
            x = render_ecg(gt.beat_times_s, fs, int(300 * fs), np.random.default_rng(seed))
            peaks = detect_r_peaks(ecg_window(x, fs))
            hits, false = match_beats(peaks, np.round(gt.beat_times_s * fs), tol=int(0.05 * fs))
            tp += hits
            fp += false
            total += gt.beat_times_s.size
        assert tp / total >= 0.98
        assert fp / total <= 0.02


class TestRR:
    def test_regular(self):
        np.testing.assert_array_equal(rr_from_peaks([0, 125, 250], 125), [1000, 1000])

    def test_single_peak(self):
        assert rr_from_peaks([10], 125).size == 0

    def test_non_physiologic_dropped(self):
        # 25 samples = 200 ms is rejected, 125 samples = 1000 ms kept
        np.testing.assert_array_equal(rr_from_peaks([0, 25, 150], 125), [1000])

    def test_not_increasing(self):
        with pytest.raises(InvalidInputError):
            rr_from_peaks([0, 100, 100], 125)


class TestHrv:
    def test_worked_example(self):
        m = hrv_metrics([800, 810, 790, 805])
        assert m.mean_rr == pytest.approx(801.25)
        assert m.sdnn == pytest.approx(7.395, abs=5e-4)
        assert m.rmssd == pytest.approx(15.546, abs=5e-4)
        assert m.nn50 == 0 and m.pnn50 == 0

    def test_constant(self):
        m = hrv_metrics([800, 800, 800])
        assert (m.sdnn, m.rmssd, m.pnn50) == (0, 0, 0)

    def test_alternating(self):
        m = hrv_metrics([800, 860, 800])
        assert m.mean_rr == pytest.approx(820)
        assert m.sdnn == pytest.approx(28.284, abs=5e-4)
        assert m.rmssd == pytest.approx(60)
        assert m.nn50 == 2 and m.pnn50 == 100

    def test_exactly_50_not_counted(self):
        assert hrv_metrics([800, 850, 800]).nn50 == 0

    def test_empty_and_single(self):
        m = hrv_metrics([])
        assert all(math.isnan(v) for v in (m.mean_rr, m.sdnn, m.rmssd, m.nn50, m.pnn50))
        m = hrv_metrics([900])
        assert m.mean_rr == 900 and math.isnan(m.sdnn) and math.isnan(m.pnn50)

    def test_random_sequences_match_loop(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            rr = rng.uniform(300, 2000, size=int(rng.integers(2, 501)))
            m = hrv_metrics(rr)
            ref = hrv_loop(list(rr))
            got = (m.mean_rr, m.sdnn, m.rmssd, m.nn50, m.pnn50)
            for a, b in zip(got, ref):
                assert a == pytest.approx(b, abs=1e-9, rel=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(300, 2000), min_size=2, max_size=200), st.floats(-250, 250))
    def test_shift_invariance(self, rr, c):
        a, b = hrv_metrics(rr), hrv_metrics(np.array(rr) + c)
        assert b.sdnn == pytest.approx(a.sdnn, abs=1e-9)
        assert b.rmssd == pytest.approx(a.rmssd, abs=1e-9)
        assert b.mean_rr == pytest.approx(a.mean_rr + c, abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(300, 2000), min_size=2, max_size=200))
    def test_ranges(self, rr):
        m = hrv_metrics(rr)
        assert 0 <= m.pnn50 <= 100
        assert m.nn50 <= len(rr) - 1
        assert m.sdnn >= 0 and m.rmssd >= 0


class TestStats:
    def test_symmetric(self):
        assert stat_descriptors(np.array([-1.0, 0.0, 1.0]))["skew"] == 0

    def test_constant(self):
        d = stat_descriptors(np.full(10, 4.2))
        assert d == {"mean": pytest.approx(4.2), "std": pytest.approx(0.0, abs=1e-12), "skew": 0.0, "kurt": 0.0}

    def test_worked_example(self):
        d = stat_descriptors(np.array([0.0, 0.0, 0.0, 4.0]))
        assert d["mean"] == pytest.approx(1.0)
        assert d["std"] == pytest.approx(math.sqrt(3))
        assert d["skew"] == pytest.approx(1.1547005383792515, abs=1e-9)
        assert d["kurt"] == pytest.approx(-0.6666666666666665, abs=1e-9)

    def test_random_against_loop(self):
        x = np.random.default_rng(5).gamma(2.0, size=500)
        d = stat_descriptors(x)
        ref = moments_loop(list(x))
        assert [d["mean"], d["std"], d["skew"], d["kurt"]] == pytest.approx(list(ref), abs=1e-9)

    def test_fully_masked(self):
        w = Window(ChannelKind.EEG, 0, np.zeros(10), 1.0, masked_fraction=1.0)
        assert all(math.isnan(v) for v in stat_descriptors(w).values())


class TestEvents:
    def test_no_events(self):
        d = event_stats([], 0, 600)
        assert set(d.values()) == {0.0}

    def test_single_apnea(self):
        d = event_stats([EventAnnotation(EventKind.APNEA, 100, 20)], 0, 600)
        assert d["apnea_count"] == 1 and d["apnea_total_s"] == 20 and d["apnea_mean_s"] == 20
        assert d["hypopnea_count"] == 0

    def test_straddling_event_counted_once(self):
        ev = [EventAnnotation(EventKind.HYPOPNEA, 590, 30)]  # midpoint 605 s
        per_window = [event_stats(ev, w * 600, 600)["hypopnea_count"] for w in range(3)]
        # oracle: exhaustive midpoint membership
        expected = [float(w * 600 <= 605 < (w + 1) * 600) for w in range(3)]
        assert per_window == expected == [0.0, 1.0, 0.0]

    def test_bad_window(self):
        with pytest.raises(InvalidParameterError):
            event_stats([], 0, 0)

    def test_bad_event(self):
        with pytest.raises(InvalidInputError):
            EventAnnotation(EventKind.AROUSAL, 10, 0)


class TestAssemble:
    def test_zscore_rows(self):
        cols = [{"a": 1.0, "b": 5.0, "c": -2.0}, {"a": 3.0, "b": 6.0, "c": 4.0}]
        img = assemble_feature_image(cols, ["a", "b", "c"])
        assert img.matrix.shape == (3, 2)
        np.testing.assert_allclose(img.matrix.mean(axis=1), 0, atol=1e-10)
        np.testing.assert_allclose(img.matrix, [[-1, 1], [-1, 1], [-1, 1]])

    def test_median_imputation(self):
        cols = [{"a": 1.0}, {"a": float("nan")}, {"a": 3.0}]
        img = assemble_feature_image(cols, ["a"])
        # imputed row [1, 2, 3] z-scored
        np.testing.assert_allclose(img.matrix[0], np.array([-1, 0, 1]) / np.std([1, 2, 3]))

    def test_all_missing_row(self):
        cols = [{"a": 1.0, "b": float("nan")}, {"a": 2.0}]
        img = assemble_feature_image(cols, ["a", "b"])
        np.testing.assert_array_equal(img.matrix[1], 0.0)

    def test_no_windows(self):
        with pytest.raises(EmptySignalError):
            assemble_feature_image([], ["a"])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.one_of(st.floats(-1e6, 1e6), st.just(float("nan")), st.just(float("inf"))),
                             min_size=4, max_size=4), min_size=1, max_size=12))
    def test_always_finite(self, columns):
        labels = ["a", "b", "c", "d"]
        img = assemble_feature_image([dict(zip(labels, c)) for c in columns], labels)
        assert np.all(np.isfinite(img.matrix))

    def test_schema_row_count_independent_of_record(self):
        def chans(n):
            return [
                ChannelSignal(np.random.default_rng(i).normal(size=n), fs, kind, name)
                for i, (name, kind, fs) in enumerate([
                    ("EEG1", ChannelKind.EEG, 100.0), ("ECG", ChannelKind.ECG, 125.0),
                    ("Airflow", ChannelKind.RESPIRATION, 10.0), ("SpO2", ChannelKind.SPO2, 1.0),
                ])
            ]
        a = FeatureSchema.for_channels(chans(100)).row_labels()
        b = FeatureSchema.for_channels(chans(5000)).row_labels()
        assert a == b
        assert len(a) == 4 + 4 + 4 + 3 + 5


class TestStatic:
    def test_roundtrip(self):
        s = StaticFeatures.from_sequence([60, 1, 2, 30.5, 130, 80])
        np.testing.assert_array_equal(s.as_array(), [60, 1, 2, 30.5, 130, 80])

    @pytest.mark.parametrize("values", [
        [17, 1, 0, 30, 130, 80], [60, 2, 0, 30, 130, 80], [60, 1, 0, 90, 130, 80],
        [60, 1, 0, 30, 300, 80], [60, 1, 0, 30, 130, 30], [60, 1, 0, float("nan"), 130, 80],
    ])
    def test_ranges(self, values):
        with pytest.raises(InvalidInputError):
            StaticFeatures.from_sequence(values)

    def test_wrong_length(self):
        with pytest.raises(InvalidInputError):
            StaticFeatures.from_sequence([1, 2, 3])

"""Deterministic synthetic PSG records with known ground truth.

Signals are crude surrogates: the ECG is a train of Gaussian bumps (no P or
T morphology beyond a small broad bump), EEG is coloured noise with an alpha
rhythm, respiration is a slow sinusoid that collapses during apneas.  They
exist to validate the detector and to give the learning pipeline a signal
with a known dependence on the label.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import InvalidParameterError
from .features import EventAnnotation, EventKind, StaticFeatures
from .formats import SignalRecord
from .sigprep import ChannelKind, ChannelSignal

DEFAULT_FS = {"EEG": 100.0, "ECG": 125.0, "Respiration": 10.0, "SpO2": 1.0}

# events per hour for a negative record
BASE_EVENT_RATE = {EventKind.APNEA: 4.0, EventKind.HYPOPNEA: 6.0, EventKind.AROUSAL: 5.0}
EVENT_DURATION_S = {EventKind.APNEA: (10.0, 40.0), EventKind.HYPOPNEA: (10.0, 60.0), EventKind.AROUSAL: (3.0, 15.0)}


@dataclass(frozen=True)
class SynthConfig:
    n_records: int = 200
    duration_h: float = 2.0
    fs_map: dict = field(default_factory=lambda: dict(DEFAULT_FS))
    effect_strength: float = 1.0
    seed: int = 0
    # None draws a subject-specific heart rate
    hr_bpm: float = None
    rr_sd_ms: float = 45.0
    ecg_noise: float = 0.03
    n_eeg: int = 2

    def __post_init__(self):
        if self.n_records < 1:
            raise InvalidParameterError("n_records must be >= 1")
        if not self.duration_h > 0:
            raise InvalidParameterError("duration_h must be > 0")
        if self.effect_strength < 0:
            raise InvalidParameterError("effect_strength must be >= 0")
        if self.rr_sd_ms < 0 or self.ecg_noise < 0:
            raise InvalidParameterError("noise levels must be >= 0")
        for k, fs in self.fs_map.items():
            ChannelKind(k)
            if not fs > 0:
                raise InvalidParameterError(f"sampling rate for {k} must be > 0")
        if self.fs_map.get("ECG", 125.0) < 100:
            raise InvalidParameterError("ECG sampling rate must be >= 100 Hz")


@dataclass(frozen=True)
class GroundTruth:
    beat_times_s: np.ndarray
    events: tuple
    label: int
    static: StaticFeatures


def _streams(cfg, idx):
    ss = np.random.SeedSequence([cfg.seed, idx])
    return [np.random.default_rng(s) for s in ss.spawn(6)]


def corpus_labels(cfg):
    """Balanced label vector for a corpus; half (rounded up) are positive."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xA5E1]))
    order = rng.permutation(cfg.n_records)
    return (order < (cfg.n_records + 1) // 2).astype(int)


def _beat_times(rng, duration_s, mean_rr_ms, rr_sd_ms):
    n_max = int(duration_s / 0.3) + 2
    if rr_sd_ms > 0:
        # AR(1) fluctuation keeps successive intervals correlated
        phi = 0.7
        e = rng.normal(0.0, rr_sd_ms * np.sqrt(1 - phi ** 2), n_max)
        fluct = sps.lfilter([1.0], [1.0, -phi], e)
        rr = np.clip(mean_rr_ms + fluct, 400.0, 1600.0) / 1000.0
    else:
        rr = np.full(n_max, mean_rr_ms / 1000.0)
    t = rr[0] / 2 + np.concatenate(([0.0], np.cumsum(rr[1:])))
    return t[t < duration_s]


def _events(rng, duration_s, label, effect):
    events = []
    for kind in EventKind:
        rate = BASE_EVENT_RATE[kind] * (1.0 + 1.5 * effect * label)
        lo, hi = EVENT_DURATION_S[kind]
        t = rng.exponential(3600.0 / rate)
        while True:
            dur = rng.uniform(lo, hi)
            if t + dur >= duration_s:
                break
            events.append(EventAnnotation(kind, round(t, 3), round(dur, 3)))
            t += dur + rng.exponential(3600.0 / rate)
    events.sort(key=lambda e: (e.start_s, e.kind.value))
    return tuple(events)


def _static(rng, label, effect):
    age = float(np.clip(rng.normal(58, 9), 18, 100))
    sex = int(rng.integers(0, 2))
    race = int(rng.integers(0, 4))
    bmi = float(np.clip(rng.normal(29, 4.5), 10, 80))
    sbp = float(np.clip(rng.normal(120, 10) + 20.0 * effect * label, 70, 250))
    dbp = float(np.clip(rng.normal(74, 6) + 12.0 * effect * label, 40, 150))
    return StaticFeatures(round(age, 1), sex, race, round(bmi, 2), round(sbp, 1), round(dbp, 1))


def generate_ground_truth(cfg, idx, label=None):
    if not 0 <= idx < cfg.n_records:
        raise InvalidParameterError(f"record index {idx} outside [0, {cfg.n_records})")
    r_hr, r_ev, r_st = _streams(cfg, idx)[:3]
    if label is None:
        label = int(corpus_labels(cfg)[idx])
    effect = cfg.effect_strength
    duration_s = cfg.duration_h * 3600.0
    if cfg.hr_bpm is None:
        mean_rr = float(np.clip(r_hr.normal(900.0, 80.0), 600.0, 1300.0))
    else:
        mean_rr = 60000.0 / cfg.hr_bpm
    rr_sd = cfg.rr_sd_ms * np.exp(-0.7 * effect * label)
    beats = _beat_times(r_hr, duration_s, mean_rr, rr_sd)
    return GroundTruth(
        beat_times_s=beats,
        events=_events(r_ev, duration_s, label, effect),
        label=label,
        static=_static(r_st, label, effect),
    )


def render_ecg(beat_times_s, fs, n_samples, rng, noise=0.03):
    """Gaussian-bump QRS train with a broad T bump, baseline wander and noise."""
    t = np.arange(n_samples) / fs
    x = 0.1 * np.sin(2 * np.pi * 0.2 * t + rng.uniform(0, 2 * np.pi))
    half = int(np.ceil(0.45 * fs))
    offs = np.arange(-half, half + 1)
    for bt in beat_times_s:
        c = int(round(bt * fs))
        idx = c + offs
        ok = (idx >= 0) & (idx < n_samples)
        dt = (idx[ok] / fs) - bt
        amp = 1.0 + 0.1 * rng.standard_normal()
        x[idx[ok]] += amp * np.exp(-0.5 * (dt / 0.012) ** 2)
        x[idx[ok]] += 0.25 * np.exp(-0.5 * ((dt - 0.24) / 0.045) ** 2)
    if noise > 0:
        x += rng.normal(0.0, noise, n_samples)
    return x


def _render_eeg(rng, fs, n):
    white = rng.standard_normal(n)
    brown = sps.lfilter([1.0], [1.0, -0.95], white)
    t = np.arange(n) / fs
    alpha = np.sin(2 * np.pi * 10.0 * t + rng.uniform(0, 2 * np.pi))
    return 10.0 * brown + 8.0 * alpha + 3.0 * rng.standard_normal(n)


def _event_envelope(events, fs, n, depth):
    env = np.ones(n)
    for e in events:
        if e.kind in depth:
            a, b = int(e.start_s * fs), min(n, int((e.start_s + e.duration_s) * fs))
            env[a:b] = np.minimum(env[a:b], depth[e.kind])
    return env


def _render_resp(rng, fs, n, events):
    t = np.arange(n) / fs
    breath_hz = rng.uniform(0.2, 0.3)
    env = _event_envelope(events, fs, n, {EventKind.APNEA: 0.1, EventKind.HYPOPNEA: 0.5})
    return env * np.sin(2 * np.pi * breath_hz * t) + 0.05 * rng.standard_normal(n)


def _render_spo2(rng, fs, n, events):
    drop = np.zeros(n)
    for e in events:
        if e.kind in (EventKind.APNEA, EventKind.HYPOPNEA):
            depth = 4.0 if e.kind == EventKind.APNEA else 2.0
            # desaturation lags the event end by ~20 s
            a = int((e.start_s + e.duration_s) * fs)
            b = min(n, a + int(30 * fs))
            drop[a:b] = np.maximum(drop[a:b], depth)
    k = max(1, int(10 * fs))
    drop = np.convolve(drop, np.ones(k) / k, mode="same")
    return np.clip(96.5 - drop + 0.3 * rng.standard_normal(n), 50.0, 100.0)


def generate_record(cfg, idx, label=None):
    """Build one synthetic record; fully determined by ``(cfg, idx)``."""
    gt = generate_ground_truth(cfg, idx, label=label)
    r_ecg, r_eeg, r_resp = _streams(cfg, idx)[3:]
    dur = cfg.duration_h * 3600.0
    fs = {**DEFAULT_FS, **cfg.fs_map}
    chans = []
    for i in range(cfg.n_eeg):
        n = int(dur * fs["EEG"])
        chans.append(ChannelSignal(_render_eeg(r_eeg, fs["EEG"], n), fs["EEG"], ChannelKind.EEG, f"EEG{i + 1}"))
    n = int(dur * fs["ECG"])
    chans.append(ChannelSignal(render_ecg(gt.beat_times_s, fs["ECG"], n, r_ecg, cfg.ecg_noise), fs["ECG"], ChannelKind.ECG, "ECG"))
    n = int(dur * fs["Respiration"])
    chans.append(ChannelSignal(_render_resp(r_resp, fs["Respiration"], n, gt.events), fs["Respiration"], ChannelKind.RESPIRATION, "Airflow"))
    n = int(dur * fs["SpO2"])
    chans.append(ChannelSignal(_render_spo2(r_resp, fs["SpO2"], n, gt.events), fs["SpO2"], ChannelKind.SPO2, "SpO2"))
    record = SignalRecord(
        record_id=f"rec{idx:04d}",
        channels=chans,
        events=list(gt.events),
        static=gt.static,
        label=gt.label,
    )
    return record, gt


def generate_corpus(cfg):
    return [generate_record(cfg, i)[0] for i in range(cfg.n_records)]

"""Window-level features and pseudo-image assembly.

Every window of a record contributes one column; every feature in the
schema contributes one row.  Missing values travel as ``NaN`` until
:func:`assemble_feature_image` imputes and normalizes them.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import EmptySignalError, InvalidInputError, InvalidParameterError
from .sigprep import ChannelKind

MISSING = float("nan")

RR_MIN_MS = 300.0
RR_MAX_MS = 2000.0


class EventKind(str, enum.Enum):
    APNEA = "Apnea"
    HYPOPNEA = "Hypopnea"
    AROUSAL = "Arousal"


@dataclass(frozen=True)
class EventAnnotation:
    kind: EventKind
    start_s: float
    duration_s: float

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        if self.start_s < 0 or not self.duration_s > 0:
            raise InvalidInputError(f"bad event timing: {self}")

    @property
    def midpoint_s(self):
        return self.start_s + self.duration_s / 2.0


@dataclass(frozen=True)
class HrvMetrics:
    mean_rr: float
    sdnn: float
    rmssd: float
    nn50: float
    pnn50: float


@dataclass(frozen=True)
class StaticFeatures:
    age: float
    sex: int
    race: int
    bmi: float
    sbp: float
    dbp: float

    _RANGES = {"age": (18, 100), "bmi": (10, 80), "sbp": (70, 250), "dbp": (40, 150)}

    def __post_init__(self):
        for name in ("age", "sex", "race", "bmi", "sbp", "dbp"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidInputError(f"static feature {name} is not finite")
        for name, (lo, hi) in self._RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise InvalidInputError(f"static feature {name}={v} outside [{lo}, {hi}]")
        if self.sex not in (0, 1):
            raise InvalidInputError(f"sex must be 0 or 1, got {self.sex}")
        if not 0 <= self.race <= 9:
            raise InvalidInputError(f"race code must be a small integer, got {self.race}")

    def as_array(self):
        return np.array([self.age, self.sex, self.race, self.bmi, self.sbp, self.dbp], dtype=np.float64)

    @classmethod
    def from_sequence(cls, values):
        values = list(values)
        if len(values) != 6:
            raise InvalidInputError(f"expected 6 static values, got {len(values)}")
        age, sex, race, bmi, sbp, dbp = values
        return cls(float(age), int(sex), int(race), float(bmi), float(sbp), float(dbp))


@dataclass
class FeatureImage:
    matrix: np.ndarray
    row_labels: list

    @property
    def window_count(self):
        return self.matrix.shape[1]


# --------------------------------------------------------------------------
# R-peaks and HRV
# --------------------------------------------------------------------------

def detect_r_peaks(ecg, fs=None, refractory_s=0.25, integration_s=0.15):
    """Pan-Tompkins style QRS detector.

    Band-pass 5-15 Hz, differentiate, square, integrate over a 150 ms moving
    window.  A candidate integrator peak is accepted when it exceeds half the
    running mean of the last eight accepted peak heights.  Each accepted
    candidate is refined to the largest band-passed excursion nearby.

    ``ecg`` is a :class:`~psgdct.sigprep.Window` or a plain array (then
    ``fs`` is required).  Returns sample indices relative to the window.
    """
    samples = getattr(ecg, "samples", ecg)
    fs = fs if fs is not None else getattr(ecg, "fs", None)
    if fs is None or fs < 100:
        raise InvalidParameterError(f"R-peak detection needs fs >= 100 Hz, got {fs}")
    x = np.asarray(samples, dtype=np.float64)
    if getattr(ecg, "masked_fraction", 0.0) >= 1.0:
        return np.array([], dtype=np.int64)
    if x.size < int(fs) or not np.any(x != x[0]):
        return np.array([], dtype=np.int64)

    sos = sps.butter(2, [5.0, 15.0], btype="bandpass", fs=fs, output="sos")
    band = sps.sosfiltfilt(sos, x)
    energy = np.gradient(band) ** 2
    n_int = max(1, int(round(integration_s * fs)))
    mwi = np.convolve(energy, np.ones(n_int) / n_int, mode="same")
    if mwi.max() <= 0:
        return np.array([], dtype=np.int64)

    refractory = int(np.ceil(refractory_s * fs))
    cand, props = sps.find_peaks(mwi, distance=refractory, height=1e-3 * mwi.max())
    heights = props["peak_heights"]
    if cand.size == 0:
        return np.array([], dtype=np.int64)

    # seed the running mean from the strongest candidates of the first 2 s
    early = heights[cand < 2 * fs]
    seed = np.max(early) if early.size else np.max(heights[: 8])
    recent = [seed]
    half = int(round(0.075 * fs))
    peaks = []
    for c, h in zip(cand, heights):
        if h <= 0.5 * np.mean(recent[-8:]):
            continue
        lo, hi = max(0, c - half), min(x.size, c + half + 1)
        r = lo + int(np.argmax(np.abs(band[lo:hi])))
        if peaks and r - peaks[-1] < refractory:
            continue
        peaks.append(r)
        recent.append(h)
    return np.asarray(peaks, dtype=np.int64)


def rr_from_peaks(peaks, fs):
    """R-R intervals in ms, keeping only the physiologic range [300, 2000] ms."""
    p = np.asarray(peaks, dtype=np.float64)
    if p.size < 2:
        return np.array([], dtype=np.float64)
    if np.any(np.diff(p) <= 0):
        raise InvalidInputError("peak indices must be strictly increasing")
    rr = np.diff(p) * 1000.0 / fs
    return rr[(rr >= RR_MIN_MS) & (rr <= RR_MAX_MS)]


def hrv_metrics(rr):
    """Time-domain HRV metrics of an R-R sequence (ms).

    SDNN uses population normalization.  RMSSD, NN50 and pNN50 are built from
    the successive differences.  Undefined quantities come back as NaN.
    """
    rr = np.asarray(rr, dtype=np.float64)
    n = rr.size
    if n == 0:
        return HrvMetrics(MISSING, MISSING, MISSING, MISSING, MISSING)
    mean_rr = rr.mean()
    sdnn = np.sqrt(np.mean((rr - mean_rr) ** 2)) if n > 1 else MISSING
    if n < 2:
        return HrvMetrics(float(mean_rr), MISSING, MISSING, MISSING, MISSING)
    d = np.diff(rr)
    rmssd = np.sqrt(np.sum(d ** 2) / (n - 1))
    nn50 = int(np.count_nonzero(np.abs(d) > 50.0))
    return HrvMetrics(float(mean_rr), float(sdnn), float(rmssd), float(nn50), 100.0 * nn50 / (n - 1))


# --------------------------------------------------------------------------
# Statistical descriptors and events
# --------------------------------------------------------------------------

def stat_descriptors(w):
    """Population mean, std, skewness and excess kurtosis of a window."""
    if getattr(w, "masked_fraction", 0.0) >= 1.0:
        return {"mean": MISSING, "std": MISSING, "skew": MISSING, "kurt": MISSING}
    x = np.asarray(getattr(w, "samples", w), dtype=np.float64)
    if x.size == 0:
        return {"mean": MISSING, "std": MISSING, "skew": MISSING, "kurt": MISSING}
    mean = x.mean()
    dev = x - mean
    m2 = np.mean(dev ** 2)
    std = np.sqrt(m2)
    if std < 1e-12:
        return {"mean": float(mean), "std": float(std), "skew": 0.0, "kurt": 0.0}
    skew = np.mean(dev ** 3) / m2 ** 1.5
    kurt = np.mean(dev ** 4) / m2 ** 2 - 3.0
    return {"mean": float(mean), "std": float(std), "skew": float(skew), "kurt": float(kurt)}


def event_stats(events, window_start_s, window_len_s):
    """Per-kind count, total and mean duration of events whose midpoint is in the window."""
    if not window_len_s > 0:
        raise InvalidParameterError("window length must be > 0")
    end = window_start_s + window_len_s
    out = {}
    for kind in EventKind:
        durs = [
            e.duration_s for e in events
            if e.kind == kind and window_start_s <= e.midpoint_s < end
        ]
        key = kind.value.lower()
        out[f"{key}_count"] = float(len(durs))
        out[f"{key}_total_s"] = float(sum(durs))
        out[f"{key}_mean_s"] = float(np.mean(durs)) if durs else 0.0
    return out


# --------------------------------------------------------------------------
# Schema and assembly
# --------------------------------------------------------------------------

MOMENTS = ("mean", "std", "skew", "kurt")
SPO2_STATS = ("mean", "std", "min")
HRV_STATS = ("mean_rr", "sdnn", "rmssd", "pnn50")
EVENT_ROWS = ("apnea_count", "hypopnea_count", "arousal_count", "apnea_mean_s", "hypopnea_mean_s")


@dataclass(frozen=True)
class FeatureSchema:
    """Which rows a pseudo-image has, derived from the channel layout.

    ``channels`` is an ordered tuple of ``(name, kind)``.  Records that share
    a channel layout share a schema, hence an identical row count.
    """

    channels: tuple

    @classmethod
    def for_channels(cls, channels):
        return cls(tuple((c.name, ChannelKind(c.kind)) for c in channels))

    def row_labels(self):
        rows = []
        for name, kind in self.channels:
            if kind in (ChannelKind.EEG, ChannelKind.RESPIRATION):
                rows += [f"{name}.{s}" for s in MOMENTS]
            elif kind == ChannelKind.SPO2:
                rows += [f"{name}.{s}" for s in SPO2_STATS]
            elif kind == ChannelKind.ECG:
                rows += [f"{name}.{s}" for s in HRV_STATS]
        rows += [f"events.{s}" for s in EVENT_ROWS]
        return rows


def window_features(window, name):
    """Feature values for one channel window, keyed by row label."""
    kind = window.kind
    missing = window.flagged
    if kind in (ChannelKind.EEG, ChannelKind.RESPIRATION):
        d = stat_descriptors(window)
        return {f"{name}.{k}": (MISSING if missing else d[k]) for k in MOMENTS}
    if kind == ChannelKind.SPO2:
        x = window.samples
        vals = {"mean": x.mean(), "std": x.std(), "min": x.min()}
        return {f"{name}.{k}": (MISSING if missing else float(vals[k])) for k in SPO2_STATS}
    if kind == ChannelKind.ECG:
        if missing:
            m = hrv_metrics([])
        else:
            m = hrv_metrics(rr_from_peaks(detect_r_peaks(window), window.fs))
        return {f"{name}.{k}": getattr(m, k) for k in HRV_STATS}
    return {}


def event_features(events, window_start_s, window_len_s):
    d = event_stats(events, window_start_s, window_len_s)
    return {f"events.{k}": d[k] for k in EVENT_ROWS}


def assemble_feature_image(per_window_features, row_labels):
    """Stack per-window feature dicts into a z-scored features x windows matrix.

    Missing cells (NaN or absent keys) are replaced by the row median of the
    valid cells, or 0 when a row has none.  Each row is then standardized
    with its own mean and population std; flat rows become 0.
    """
    t = len(per_window_features)
    if t == 0:
        raise EmptySignalError("record has no windows")
    m = np.array(
        [[float(col.get(label, MISSING)) for col in per_window_features] for label in row_labels],
        dtype=np.float64,
    ).reshape(len(row_labels), t)
    m[~np.isfinite(m)] = np.nan
    for r in range(m.shape[0]):
        row = m[r]
        bad = np.isnan(row)
        if bad.all():
            row[:] = 0.0
        elif bad.any():
            row[bad] = np.median(row[~bad])
        std = row.std()
        if std < 1e-12:
            row[:] = 0.0
        else:
            row[:] = (row - row.mean()) / std
    return FeatureImage(matrix=m, row_labels=list(row_labels))

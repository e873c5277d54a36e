"""Channel preprocessing: artifact masking, band-pass filtering, windowing."""

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal as sps

from .errors import EmptySignalError, InvalidInputError, InvalidParameterError


class ChannelKind(str, enum.Enum):
    EEG = "EEG"
    ECG = "ECG"
    RESPIRATION = "Respiration"
    SPO2 = "SpO2"
    OTHER = "Other"


# (low_hz, high_hz); None means the channel is not filtered.
DEFAULT_PASSBANDS = {
    ChannelKind.EEG: (0.3, 35.0),
    ChannelKind.ECG: (0.5, 40.0),
    ChannelKind.RESPIRATION: (0.05, 1.0),
    ChannelKind.SPO2: None,
    ChannelKind.OTHER: None,
}

FILTER_ORDER = 6


@dataclass(frozen=True)
class ChannelSignal:
    samples: np.ndarray
    fs: float
    kind: ChannelKind
    name: str = ""
    # True marks an invalid (artifact) sample; None means nothing masked yet.
    mask: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        if samples.ndim != 1 or samples.size == 0:
            raise EmptySignalError(f"channel {self.name!r} has no samples")
        if not self.fs > 0:
            raise InvalidParameterError(f"sampling rate must be > 0, got {self.fs}")
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != samples.shape:
                raise InvalidInputError("mask shape differs from samples")
            object.__setattr__(self, "mask", mask)

    @property
    def duration_s(self):
        return self.samples.size / self.fs

    def invalid(self):
        if self.mask is None:
            return np.zeros(self.samples.size, dtype=bool)
        return self.mask


@dataclass(frozen=True)
class WindowSpec:
    length_min: float
    overlap_fraction: float = 0.0

    def __post_init__(self):
        if not 1 <= self.length_min <= 120:
            raise InvalidParameterError(
                f"window length must be in [1, 120] minutes, got {self.length_min}"
            )
        if not 0 <= self.overlap_fraction < 1:
            raise InvalidParameterError(
                f"overlap must be in [0, 1), got {self.overlap_fraction}"
            )

    def length_samples(self, fs):
        return int(np.floor(self.length_min * 60.0 * fs + 1e-9))

    def stride_samples(self, fs):
        return max(1, int(np.floor(self.length_samples(fs) * (1 - self.overlap_fraction) + 1e-9)))


@dataclass(frozen=True)
class Window:
    kind: ChannelKind
    start_sample: int
    samples: np.ndarray
    fs: float
    masked_fraction: float = 0.0

    @property
    def flagged(self):
        """More than half of the window was artifact."""
        return self.masked_fraction > 0.5


def bandpass_filter(sig, low_hz, high_hz, order=FILTER_ORDER):
    """Zero-phase Butterworth band-pass (forward-backward second-order sections).

    ``low_hz == 0`` degenerates to a low-pass filter.
    """
    nyq = sig.fs / 2.0
    if not (0 <= low_hz < high_hz < nyq):
        raise InvalidParameterError(
            f"band [{low_hz}, {high_hz}] Hz invalid for fs={sig.fs} (Nyquist {nyq})"
        )
    sos = design_bandpass(sig.fs, low_hz, high_hz, order)
    x = sig.samples
    # sosfiltfilt needs a minimum length for its edge padding
    padlen = min(x.size - 1, 3 * (2 * len(sos) + 1))
    y = sps.sosfiltfilt(sos, x, padlen=padlen) if x.size > 1 else x.copy()
    return replace(sig, samples=y)


def design_bandpass(fs, low_hz, high_hz, order=FILTER_ORDER):
    if low_hz > 0:
        return sps.butter(order, [low_hz, high_hz], btype="bandpass", fs=fs, output="sos")
    return sps.butter(order, high_hz, btype="lowpass", fs=fs, output="sos")


def _runs(flags):
    """Start/stop index pairs of the True runs in a boolean array."""
    padded = np.concatenate(([False], flags, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return edges[0::2], edges[1::2]


def mask_artifacts(sig, clip_value, flat_seconds=5.0):
    """Mask clipped samples and flat-line runs, then interpolate over them.

    Returns ``(cleaned_signal, mask)``.  The mask is the union with any mask
    already carried by ``sig``; previously masked samples interrupt flat-line
    runs, so a second pass over cleaned output changes nothing.
    """
    if not clip_value > 0:
        raise InvalidParameterError(f"clip_value must be > 0, got {clip_value}")
    x = sig.samples
    prior = sig.invalid()
    mask = prior | ~np.isfinite(x) | (np.abs(x) >= clip_value)

    if flat_seconds is not None and x.size > 1:
        min_run = max(2, int(np.ceil(flat_seconds * sig.fs)))
        # same[i]: x[i+1] == x[i], both previously unmasked
        same = (np.diff(x) == 0) & ~prior[1:] & ~prior[:-1]
        starts, stops = _runs(same)
        for a, b in zip(starts, stops):
            # diff run [a, b) covers samples a..b inclusive
            if b - a + 1 >= min_run:
                mask[a:b + 1] = True

    if mask.all():
        raise EmptySignalError(f"channel {sig.name!r} is entirely artifact")
    y = x.copy()
    if mask.any():
        idx = np.arange(x.size)
        good = ~mask
        y[mask] = np.interp(idx[mask], idx[good], x[good])
    return replace(sig, samples=y, mask=mask), mask


def segment_windows(sig, spec):
    """Cut a channel into equal-length windows; a trailing partial window is dropped."""
    n = spec.length_samples(sig.fs)
    if n < 1 or sig.samples.size < n:
        raise EmptySignalError(
            f"channel {sig.name!r} ({sig.duration_s:.1f} s) is shorter than one "
            f"{spec.length_min}-minute window"
        )
    stride = spec.stride_samples(sig.fs)
    count = (sig.samples.size - n) // stride + 1
    invalid = sig.invalid()
    windows = []
    for i in range(count):
        start = i * stride
        windows.append(
            Window(
                kind=sig.kind,
                start_sample=start,
                samples=sig.samples[start:start + n],
                fs=sig.fs,
                masked_fraction=float(invalid[start:start + n].mean()),
            )
        )
    return windows


def preprocess(sig, clip_value=None, passband="default", flat_seconds=5.0):
    """Mask artifacts (when ``clip_value`` is given) and filter with the kind's default band."""
    if clip_value is not None:
        sig, _ = mask_artifacts(sig, clip_value, flat_seconds=flat_seconds)
    band = DEFAULT_PASSBANDS[sig.kind] if passband == "default" else passband
    if band is not None:
        lo, hi = band
        hi = min(hi, 0.45 * sig.fs)
        if lo < hi:
            sig = bandpass_filter(sig, lo, hi)
    return sig

"""Record -> pseudo-image: preprocessing, windowing and feature extraction."""

import numpy as np

from .errors import EmptySignalError
from .features import FeatureSchema, assemble_feature_image, event_features, window_features
from .sigprep import ChannelKind, WindowSpec, preprocess, segment_windows

# Amplitude beyond which a sample counts as artifact (None: no masking).
DEFAULT_CLIP = {
    ChannelKind.EEG: 500.0,
    ChannelKind.ECG: 10.0,
    ChannelKind.RESPIRATION: 50.0,
    ChannelKind.SPO2: None,
    ChannelKind.OTHER: None,
}


def extract_record(record, spec, clip=None, schema=None):
    """Compute the features x windows image for one record.

    Windows are aligned in time across channels; the record keeps as many
    windows as its shortest channel allows.
    """
    if not isinstance(spec, WindowSpec):
        spec = WindowSpec(float(spec))
    clip = {**DEFAULT_CLIP, **(clip or {})}
    schema = schema or FeatureSchema.for_channels(record.channels)

    per_channel = []
    for ch in record.channels:
        sig = preprocess(ch, clip_value=clip.get(ch.kind))
        per_channel.append((ch.name, segment_windows(sig, spec)))
    t = min(len(ws) for _, ws in per_channel) if per_channel else 0
    if t == 0:
        raise EmptySignalError(f"record {record.record_id} yields no windows")

    length_s = spec.length_min * 60.0
    stride_s = length_s * (1 - spec.overlap_fraction)
    columns = []
    for i in range(t):
        col = {}
        for name, ws in per_channel:
            col.update(window_features(ws[i], name))
        col.update(event_features(record.events, i * stride_s, length_s))
        columns.append(col)
    return assemble_feature_image(columns, schema.row_labels())


def stack_images(images, shape):
    """Zero-pad or crop each image to ``shape`` and stack into (N, 1, H, W)."""
    h, w = shape
    out = np.zeros((len(images), 1, h, w), dtype=np.float64)
    for i, img in enumerate(images):
        m = img.matrix if hasattr(img, "matrix") else np.asarray(img)
        hh, ww = min(h, m.shape[0]), min(w, m.shape[1])
        out[i, 0, :hh, :ww] = m[:hh, :ww]
    return out

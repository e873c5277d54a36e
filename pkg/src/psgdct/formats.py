"""On-disk formats.

* ``.psgc`` channel files: 16-byte little-endian header (magic ``PSGC``,
  u16 version, u16 reserved, u32 sample count, f32 sampling rate) followed
  by little-endian float32 samples.
* ``manifest.json``: one per record, referencing channel files and an
  annotation CSV (``kind,start_s,duration_s``).
* ``.feat`` feature images: UTF-8 text, a ``#FEATIMG <version>`` line, the
  window count, then one ``name,v1,...,vT`` line per feature.
* ``.ckpt`` checkpoints: magic, version, JSON header, float64 parameters.
"""

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError
from .features import EventAnnotation, FeatureImage, StaticFeatures
from .sigprep import ChannelKind, ChannelSignal

PSGC_MAGIC = b"PSGC"
PSGC_VERSION = 1
_PSGC_HEADER = struct.Struct("<4sHHIf")

MANIFEST_VERSION = 1
FEATURE_VERSION = 1
CKPT_MAGIC = b"PSGDCKPT"
CKPT_VERSION = 1
REPORT_VERSION = 1

STATIC_KEYS = ("age", "sex", "race", "bmi", "sbp", "dbp")


@dataclass
class SignalRecord:
    record_id: str
    channels: list
    events: list = field(default_factory=list)
    static: StaticFeatures = None
    label: int = None


def _check_major(found, supported, what):
    if int(found) != supported:
        raise FormatError(f"unsupported {what} version {found} (reader supports {supported})")


# -- channel files ---------------------------------------------------------

def write_channel(path, samples, fs):
    x = np.asarray(samples, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_PSGC_HEADER.pack(PSGC_MAGIC, PSGC_VERSION, 0, x.size, fs))
        fh.write(x.tobytes())


def read_channel(path):
    """Return ``(samples, fs)`` from a ``.psgc`` file."""
    data = Path(path).read_bytes()
    if len(data) < _PSGC_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, _, n, fs = _PSGC_HEADER.unpack_from(data)
    if magic != PSGC_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    _check_major(version, PSGC_VERSION, "PSGC")
    body = data[_PSGC_HEADER.size:]
    if len(body) != 4 * n:
        raise FormatError(f"{path}: expected {n} samples, found {len(body) // 4}")
    return np.frombuffer(body, dtype="<f4").astype(np.float64), float(fs)


# -- records ---------------------------------------------------------------

def write_record(record, directory):
    """Write a record as ``<directory>/manifest.json`` plus channel and event files."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    channels = []
    for ch in record.channels:
        fname = f"{ch.name}.psgc"
        write_channel(d / fname, ch.samples, ch.fs)
        channels.append({"name": ch.name, "kind": ch.kind.value, "fs": ch.fs, "path": fname})
    with open(d / "events.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "start_s", "duration_s"])
        for e in record.events:
            w.writerow([e.kind.value, repr(float(e.start_s)), repr(float(e.duration_s))])
    manifest = {
        "format_version": MANIFEST_VERSION,
        "record_id": record.record_id,
        "label": record.label,
        "static": dict(zip(STATIC_KEYS, record.static.as_array().tolist())) if record.static else None,
        "channels": channels,
        "annotations": "events.csv",
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_events(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return [EventAnnotation(r["kind"], float(r["start_s"]), float(r["duration_s"])) for r in rows]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad annotation row: {exc}") from exc


def read_record(manifest_path):
    path = Path(manifest_path)
    try:
        m = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    _check_major(m.get("format_version", -1), MANIFEST_VERSION, "manifest")
    base = path.parent
    channels = []
    seen = set()
    for entry in m["channels"]:
        if entry["name"] in seen:
            raise FormatError(f"{path}: duplicate channel {entry['name']!r}")
        seen.add(entry["name"])
        samples, fs = read_channel(base / entry["path"])
        if abs(fs - float(entry["fs"])) > 1e-3 * fs:
            raise FormatError(f"{path}: channel {entry['name']} fs mismatch")
        channels.append(ChannelSignal(samples, float(entry["fs"]), ChannelKind(entry["kind"]), entry["name"]))
    events = read_events(base / m["annotations"]) if m.get("annotations") else []
    static = None
    if m.get("static") is not None:
        static = StaticFeatures.from_sequence(m["static"][k] for k in STATIC_KEYS)
    label = m.get("label")
    if label is not None and label not in (0, 1):
        raise FormatError(f"{path}: label must be 0 or 1")
    return SignalRecord(m["record_id"], channels, events, static, label)


def find_manifests(root):
    root = Path(root)
    direct = root / "manifest.json"
    if direct.exists():
        return [direct]
    return sorted(root.glob("*/manifest.json"))


# -- feature images --------------------------------------------------------

def format_feature_image(img):
    lines = [f"#FEATIMG {FEATURE_VERSION}", str(img.window_count)]
    for label, row in zip(img.row_labels, img.matrix):
        if "," in label:
            raise InvalidInputError(f"feature name {label!r} contains a comma")
        lines.append(",".join([label] + [format(float(v), ".9g") for v in row]))
    return "\n".join(lines) + "\n"


def parse_feature_image(text, source="<string>"):
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#FEATIMG"):
        raise FormatError(f"{source}: missing #FEATIMG header")
    try:
        version = int(lines[0].split()[1])
        t = int(lines[1])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{source}: bad header") from exc
    _check_major(version, FEATURE_VERSION, f"{source}: feature image")
    labels, rows = [], []
    for lineno, line in enumerate(lines[2:], start=3):
        parts = line.split(",")
        if len(parts) != t + 1:
            raise FormatError(f"{source}:{lineno}: expected {t} values, found {len(parts) - 1}")
        labels.append(parts[0])
        try:
            rows.append([float(v) for v in parts[1:]])
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: {exc}") from exc
    return FeatureImage(np.array(rows, dtype=np.float64).reshape(len(labels), t), labels)


def write_feature_image(img, path):
    Path(path).write_text(format_feature_image(img), encoding="utf-8")


def read_feature_image(path):
    return parse_feature_image(Path(path).read_text(encoding="utf-8"), source=str(path))


# -- checkpoints -----------------------------------------------------------

def write_checkpoint_bytes(path, header, params):
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    p = np.asarray(params, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<HI", CKPT_VERSION, len(head)))
        fh.write(head)
        fh.write(p.tobytes())


def read_checkpoint_bytes(path):
    data = Path(path).read_bytes()
    if data[:len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint")
    off = len(CKPT_MAGIC)
    if len(data) < off + 6:
        raise FormatError(f"{path}: truncated checkpoint header")
    version, hlen = struct.unpack_from("<HI", data, off)
    _check_major(version, CKPT_VERSION, "checkpoint")
    off += 6
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint header: {exc}") from exc
    body = data[off + hlen:]
    if len(body) % 8:
        raise FormatError(f"{path}: parameter block is not a whole number of float64")
    return header, np.frombuffer(body, dtype="<f8").copy()


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")

import json
import struct

import numpy as np
import pytest

from psgdct import formats
from psgdct.errors import FormatError
from psgdct.features import FeatureImage
from psgdct.synth import SynthConfig, generate_record


def test_channel_roundtrip_and_header(tmp_path):
    x = np.random.default_rng(0).normal(size=1000)
    p = tmp_path / "c.psgc"
    formats.write_channel(p, x, 125.0)
    raw = p.read_bytes()
    assert len(raw) == 16 + 4 * 1000
    assert struct.unpack("<4sHHIf", raw[:16]) == (b"PSGC", 1, 0, 1000, 125.0)
    y, fs = formats.read_channel(p)
    assert fs == 125.0
    np.testing.assert_array_equal(y, x.astype(np.float32).astype(np.float64))


@pytest.mark.parametrize("mutate, msg", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:4] + struct.pack("<H", 2) + b[6:], "version"),
    (lambda b: b[:-4], "samples"),
    (lambda b: b[:10], "truncated"),
])
def test_channel_rejects(tmp_path, mutate, msg):
    p = tmp_path / "c.psgc"
    formats.write_channel(p, np.zeros(4), 10.0)
    p.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(FormatError, match=msg):
        formats.read_channel(p)


def test_record_roundtrip(tmp_path):
    rec, _ = generate_record(SynthConfig(n_records=2, duration_h=0.02, seed=4), 1)
    formats.write_record(rec, tmp_path / rec.record_id)
    assert formats.find_manifests(tmp_path) == [tmp_path / rec.record_id / "manifest.json"]
    back = formats.read_record(tmp_path / rec.record_id / "manifest.json")
    assert back.record_id == rec.record_id and back.label == rec.label and back.static == rec.static
    assert back.events == rec.events
    for a, b in zip(rec.channels, back.channels):
        assert (a.name, a.kind, a.fs) == (b.name, b.kind, b.fs)
        np.testing.assert_allclose(b.samples, a.samples, rtol=1e-6, atol=1e-6)


def test_manifest_version_rejected(tmp_path):
    rec, _ = generate_record(SynthConfig(n_records=1, duration_h=0.01), 0)
    formats.write_record(rec, tmp_path)
    m = json.loads((tmp_path / "manifest.json").read_text())
    m["format_version"] = 2
    (tmp_path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(FormatError, match="version"):
        formats.read_record(tmp_path / "manifest.json")


def test_feature_image_text_layout():
    img = FeatureImage(np.array([[1.0, 2.5], [1 / 3, -4e-12]]), ["a_mean", "b_std"])
    text = formats.format_feature_image(img)
    assert text == "#FEATIMG 1\n2\na_mean,1,2.5\nb_std,0.333333333,-4e-12\n"
    back = formats.parse_feature_image(text)
    assert back.row_labels == ["a_mean", "b_std"]
    np.testing.assert_allclose(back.matrix, img.matrix, rtol=1e-9)


def test_feature_image_file_roundtrip_is_stable(tmp_path):
    m = np.random.default_rng(1).normal(size=(5, 7))
    img = FeatureImage(m, [f"r{i}" for i in range(5)])
    formats.write_feature_image(img, tmp_path / "a.feat")
    formats.write_feature_image(formats.read_feature_image(tmp_path / "a.feat"), tmp_path / "b.feat")
    assert (tmp_path / "a.feat").read_bytes() == (tmp_path / "b.feat").read_bytes()


@pytest.mark.parametrize("text, msg", [
    ("2\na,1,2\n", "header"),
    ("#FEATIMG 2\n2\na,1,2\n", "version"),
    ("#FEATIMG 1\n2\na,1,2\nb,1\n", ":4:"),
    ("#FEATIMG 1\n2\na,1,x\n", ":3:"),
])
def test_feature_image_parse_errors(text, msg):
    with pytest.raises(FormatError, match=msg):
        formats.parse_feature_image(text)


def test_checkpoint_bytes(tmp_path):
    p = tmp_path / "m.ckpt"
    params = np.random.default_rng(2).normal(size=17)
    formats.write_checkpoint_bytes(p, {"k": [1, 2]}, params)
    raw = p.read_bytes()
    assert raw[:8] == b"PSGDCKPT"
    version, hlen = struct.unpack("<HI", raw[8:14])
    assert version == 1 and len(raw) == 14 + hlen + 8 * 17
    header, back = formats.read_checkpoint_bytes(p)
    assert header == {"k": [1, 2]}
    np.testing.assert_array_equal(back, params)


@pytest.mark.parametrize("mutate", [
    lambda b: b"NOTACKPT" + b[8:],
    lambda b: b[:8] + struct.pack("<H", 9) + b[10:],
    lambda b: b[:-3],
    lambda b: b[:11],
    lambda b: b[:14] + b"\xff" + b[15:],
])
def test_checkpoint_rejects(tmp_path, mutate):
    p = tmp_path / "m.ckpt"
    formats.write_checkpoint_bytes(p, {"a": 1}, np.zeros(3))
    p.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(FormatError):
        formats.read_checkpoint_bytes(p)

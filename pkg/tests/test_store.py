import json
import struct

import numpy as np
import pytest

from drfg.errors import DecodeError, InvalidInputError
from drfg.store import (FeatureSet, read_checkpoint, read_feature_store, sidecar_path,
                        write_checkpoint, write_feature_store)


def _fs(rng, n=5, dim=7):
    return FeatureSet(rng.normal(size=(n, dim)).astype(np.float32), rng.integers(0, 3, n),
                      ["COVID", "Normal", "Viral Pneumonia"], [f"s{i}" for i in range(n)])


def test_byte_layout(tmp_path):
    fs = FeatureSet(np.array([[1.0, -2.0], [0.5, 3.0]], dtype=np.float32), [1, 0], ["a", "b"],
                    ["x", "y"])
    path = tmp_path / "f.bin"
    write_feature_store(path, fs)
    raw = path.read_bytes()
    expected = (b"DRFG" + struct.pack("<IIII", 1, 2, 2, 2)
                + struct.pack("<I2f", 1, 1.0, -2.0) + struct.pack("<I2f", 0, 0.5, 3.0))
    assert raw == expected
    side = json.loads(sidecar_path(path).read_text())
    assert side == {"classes": ["a", "b"], "sample_ids": ["x", "y"]}


def test_round_trip(tmp_path, rng):
    fs = _fs(rng)
    write_feature_store(tmp_path / "s.bin", fs)
    back = read_feature_store(tmp_path / "s.bin")
    assert np.array_equal(back.values, fs.values)
    assert back.labels.tolist() == fs.labels.tolist()
    assert back.classes == fs.classes and back.sample_ids == fs.sample_ids


def test_bad_magic_and_truncation(tmp_path, rng):
    path = tmp_path / "s.bin"
    write_feature_store(path, _fs(rng))
    raw = path.read_bytes()
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(DecodeError, match="magic"):
        read_feature_store(path)
    path.write_bytes(raw[:-3])
    with pytest.raises(DecodeError, match="size"):
        read_feature_store(path)


def test_label_out_of_range_rejected():
    with pytest.raises(InvalidInputError):
        FeatureSet(np.zeros((2, 3)), [0, 5], ["a", "b"])


def test_select_classes_reindexes(rng):
    fs = FeatureSet(np.arange(8.0).reshape(4, 2), [0, 1, 2, 1], ["a", "b", "c"])
    sub = fs.select_classes(["a", "b"])
    assert sub.classes == ["a", "b"]
    assert sub.labels.tolist() == [0, 1, 1]
    assert sub.sample_ids == ["0", "1", "3"]


def test_checkpoint_round_trip(tmp_path, rng):
    arrays = [rng.normal(size=(3, 4)), rng.normal(size=5)]
    write_checkpoint(tmp_path / "c.ckpt", {"kind": "x", "note": 1}, arrays)
    header, back = read_checkpoint(tmp_path / "c.ckpt")
    assert header["kind"] == "x" and header["blobs"] == [[3, 4], [5]]
    for a, b in zip(arrays, back):
        assert np.allclose(a, b, rtol=1e-6)  # stored as f32

"""On-disk formats: the labelled feature store and header+blob checkpoints.

Feature store layout (little-endian)::

    b"DRFG" | u32 version=1 | u32 n_samples | u32 dim | u32 n_classes
    then per sample: u32 label index | dim x f32

A JSON sidecar (``<store>.json``) maps label indices to class names and lists
sample ids in file order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DecodeError, InvalidInputError, InvalidShapeError

MAGIC = b"DRFG"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


@dataclass
class FeatureSet:
    """Labelled sample matrix: one row of ``values`` per sample."""

    values: np.ndarray
    labels: np.ndarray
    classes: list[str]
    sample_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2:
            raise InvalidShapeError(f"values must be 2-D, got shape {self.values.shape}")
        if len(self.labels) != len(self.values):
            raise InvalidShapeError(
                f"{len(self.labels)} labels for {len(self.values)} samples")
        if not self.sample_ids:
            self.sample_ids = [str(i) for i in range(len(self.values))]
        if len(self.sample_ids) != len(self.values):
            raise InvalidShapeError("sample_ids length differs from sample count")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.classes)):
            raise InvalidInputError("label index outside the class list")

    def __len__(self):
        return len(self.values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def subset(self, idx) -> "FeatureSet":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureSet(self.values[idx], self.labels[idx], list(self.classes),
                          [self.sample_ids[i] for i in idx])

    def select_classes(self, keep: list[str]) -> "FeatureSet":
        """Keep only the named classes and re-index labels in ``keep`` order."""
        old = [self.classes.index(name) for name in keep]
        mask = np.isin(self.labels, old)
        remap = {o: n for n, o in enumerate(old)}
        labels = np.array([remap[int(x)] for x in self.labels[mask]], dtype=np.int64)
        ids = [s for s, m in zip(self.sample_ids, mask) if m]
        return FeatureSet(self.values[mask], labels, list(keep), ids)


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_feature_store(path: str | Path, fs: FeatureSet) -> None:
    path = Path(path)
    n, dim = fs.values.shape
    rec = np.dtype([("label", "<u4"), ("values", "<f4", (dim,))])
    body = np.empty(n, dtype=rec)
    body["label"] = fs.labels
    body["values"] = fs.values
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, dim, len(fs.classes)))
        fh.write(body.tobytes())
    manifest = {"classes": list(fs.classes), "sample_ids": list(fs.sample_ids)}
    sidecar_path(path).write_text(json.dumps(manifest, indent=1))


def read_feature_store(path: str | Path) -> FeatureSet:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DecodeError(f"{path}: truncated header")
    magic, version, n, dim, n_classes = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DecodeError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DecodeError(f"{path}: unsupported version {version}")
    rec = np.dtype([("label", "<u4"), ("values", "<f4", (dim,))])
    if len(raw) != _HEADER.size + n * rec.itemsize:
        raise DecodeError(f"{path}: expected {n} records of dim {dim}, size mismatch")
    body = np.frombuffer(raw, dtype=rec, count=n, offset=_HEADER.size)

    side = sidecar_path(path)
    if side.exists():
        manifest = json.loads(side.read_text())
        classes = manifest["classes"]
        ids = manifest.get("sample_ids") or []
    else:
        classes = [str(i) for i in range(n_classes)]
        ids = []
    if len(classes) != n_classes:
        raise DecodeError(f"{path}: sidecar lists {len(classes)} classes, header {n_classes}")
    return FeatureSet(body["values"].astype(np.float32), body["label"].astype(np.int64),
                      classes, ids)


# header + blob checkpoints: u64 header length | JSON header | f32 blobs

def write_checkpoint(path: str | Path, header: dict, arrays: list[np.ndarray]) -> None:
    header = dict(header)
    header["blobs"] = [list(a.shape) for a in arrays]
    encoded = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(encoded)))
        fh.write(encoded)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_checkpoint(path: str | Path) -> tuple[dict, list[np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise DecodeError(f"{path}: truncated checkpoint")
    (hlen,) = struct.unpack_from("<Q", raw)
    try:
        header = json.loads(raw[8:8 + hlen])
    except ValueError as exc:
        raise DecodeError(f"{path}: unreadable checkpoint header") from exc
    offset = 8 + hlen
    arrays = []
    for shape in header["blobs"]:
        count = int(np.prod(shape)) if shape else 1
        if offset + 4 * count > len(raw):
            raise DecodeError(f"{path}: truncated blob data")
        a = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape)
        arrays.append(a.astype(np.float64))
        offset += 4 * count
    return header, arrays

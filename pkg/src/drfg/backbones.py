"""Frozen pre-trained backbones: inference, pooling, concatenation, standardization."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imaging
from .errors import (ConfigurationError, GraphLoadError, InvalidInputError,
                     InvalidShapeError)
from .imaging import PreprocessMode

STANDARDIZER_EPS = 1e-6


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    graph_path: Path
    output_channels: int
    preprocess: PreprocessMode = PreprocessMode.IDENTITY
    # "nhwc" (Keras exports) or "nchw" (torch exports); applies to input and output
    layout: str = "nhwc"

    def __post_init__(self):
        object.__setattr__(self, "graph_path", Path(self.graph_path))
        object.__setattr__(self, "preprocess", PreprocessMode(self.preprocess))
        if self.layout not in ("nhwc", "nchw"):
            raise ConfigurationError(f"{self.name}: unknown layout {self.layout!r}")
        if self.output_channels < 1:
            raise ConfigurationError(f"{self.name}: output_channels must be positive")


# name, channels, preprocess; listed in default pairing order
DEFAULT_BACKBONES = [
    ("vgg19", 512, PreprocessMode.MEAN_SUBTRACT_BGR),
    ("efficientnet_b0", 1280, PreprocessMode.IDENTITY),
    ("resnet50", 2048, PreprocessMode.MEAN_SUBTRACT_BGR),
    ("vgg16", 512, PreprocessMode.MEAN_SUBTRACT_BGR),
    ("densenet121", 1024, PreprocessMode.SCALE_NORMALIZE),
    ("mobilenet", 1024, PreprocessMode.SCALE_SYMMETRIC),
    ("inception_v3", 2048, PreprocessMode.SCALE_SYMMETRIC),
    ("inception_resnet_v2", 1536, PreprocessMode.SCALE_SYMMETRIC),
]

DEFAULT_ASSIGNMENT = [
    (0, "vgg19", "efficientnet_b0"),
    (1, "resnet50", "vgg16"),
    (2, "densenet121", "mobilenet"),
    (3, "inception_v3", "inception_resnet_v2"),
]


def default_registry(graph_dir: str | Path = "backbones") -> list[BackboneSpec]:
    graph_dir = Path(graph_dir)
    return [BackboneSpec(name, graph_dir / f"{name}.onnx", ch, mode)
            for name, ch, mode in DEFAULT_BACKBONES]


def registry_from_config(entries: list[dict], base: str | Path = ".") -> list[BackboneSpec]:
    """Build specs from config entries ``{name, path, channels, preprocess[, layout]}``."""
    base = Path(base)
    specs = []
    for e in entries:
        try:
            specs.append(BackboneSpec(
                name=e["name"],
                graph_path=base / e["path"],
                output_channels=int(e["channels"]),
                preprocess=e.get("preprocess", "identity"),
                layout=e.get("layout", "nhwc"),
            ))
        except KeyError as exc:
            raise ConfigurationError(f"registry entry missing field {exc}") from exc
        except ValueError as exc:
            raise ConfigurationError(f"bad registry entry {e.get('name')!r}: {exc}") from exc
    return specs


def validate_assignment(assignment, registry: list[BackboneSpec]) -> None:
    names = [s.name for s in registry]
    quads = [int(q) for q, _, _ in assignment]
    used = [n for _, a, b in assignment for n in (a, b)]
    if len(set(quads)) != len(quads) or not all(0 <= q < 4 for q in quads):
        raise ConfigurationError(f"assignment quadrants must be distinct in 0-3, got {quads}")
    if sorted(used) != sorted(names) or len(set(used)) != len(used):
        raise ConfigurationError("assignment must use every registry backbone exactly once")


_sessions: dict[Path, object] = {}
_sessions_lock = threading.Lock()


def _session(path: Path):
    import onnxruntime as ort

    key = path.resolve()
    with _sessions_lock:
        sess = _sessions.get(key)
        if sess is None:
            if not path.exists():
                raise GraphLoadError(f"backbone graph not found: {path}")
            opts = ort.SessionOptions()
            # fixed thread count keeps reductions in a fixed order
            opts.intra_op_num_threads = 1
            opts.inter_op_num_threads = 1
            try:
                sess = ort.InferenceSession(str(path), sess_options=opts,
                                            providers=["CPUExecutionProvider"])
            except Exception as exc:  # onnxruntime raises its own exception zoo
                raise GraphLoadError(f"cannot load backbone graph {path}: {exc}") from exc
            _sessions[key] = sess
    return sess


def run_backbone(spec: BackboneSpec, x: np.ndarray) -> np.ndarray:
    """Run one backbone on a preprocessed HxWx3 tensor; returns an SxSxC feature map."""
    if x.ndim != 3 or x.shape[2] != 3:
        raise InvalidShapeError(f"{spec.name}: expected HxWx3 input, got {x.shape}")
    sess = _session(spec.graph_path)
    batch = x[None].astype(np.float32)
    if spec.layout == "nchw":
        batch = batch.transpose(0, 3, 1, 2)
    feed = {sess.get_inputs()[0].name: np.ascontiguousarray(batch)}
    out = np.asarray(sess.run(None, feed)[0])[0]
    if out.ndim == 1:
        out = out[None, None, :]
    elif out.ndim == 3 and spec.layout == "nchw":
        out = out.transpose(1, 2, 0)
    elif out.ndim != 3:
        raise ConfigurationError(f"{spec.name}: unexpected output rank {out.ndim + 1}")
    if out.shape[2] != spec.output_channels:
        raise ConfigurationError(
            f"{spec.name}: graph emits {out.shape[2]} channels, registry says "
            f"{spec.output_channels}")
    return out


def global_average_pool(fmap: np.ndarray) -> np.ndarray:
    fmap = np.asarray(fmap)
    if fmap.ndim != 3 or 0 in fmap.shape:
        raise InvalidShapeError(f"expected a non-empty SxSxC map, got {fmap.shape}")
    return fmap.mean(axis=(0, 1), dtype=np.float64)


def _spec_features(spec: BackboneSpec, tile: np.ndarray) -> np.ndarray:
    try:
        fmap = run_backbone(spec, imaging.preprocess(tile, spec.preprocess))
    except (GraphLoadError, ConfigurationError, InvalidShapeError) as exc:
        raise type(exc)(f"backbone {spec.name}: {exc}") from exc
    return global_average_pool(fmap)


def extract_features(img: np.ndarray, assignment, registry: list[BackboneSpec]) -> np.ndarray:
    """Raw concatenated feature vector for one 448x448x3 image.

    Pairs are visited in assignment order; within a pair the first backbone's
    pooled vector precedes the second's.
    """
    validate_assignment(assignment, registry)
    by_name = {s.name: s for s in registry}
    quadrants = imaging.slice_quadrants(img)
    parts = []
    for q, a, b in assignment:
        for name in (a, b):
            parts.append(_spec_features(by_name[name], quadrants[int(q)]))
    return np.concatenate(parts)


def extract_single(img: np.ndarray, spec: BackboneSpec) -> np.ndarray:
    """Pooled features of one backbone on a whole (unsliced) image."""
    return _spec_features(spec, img)


def feature_dim(registry: list[BackboneSpec]) -> int:
    return sum(s.output_channels for s in registry)


@dataclass
class Standardizer:
    means: np.ndarray
    deviations: np.ndarray
    epsilon: float = STANDARDIZER_EPS

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return apply_standardizer(self, v)


def fit_standardizer(train: np.ndarray) -> Standardizer:
    train = np.asarray(train, dtype=np.float64)
    if train.ndim != 2 or train.shape[0] == 0:
        raise InvalidInputError("standardizer needs a non-empty 2-D training matrix")
    means = train.mean(axis=0)
    # constant columns: use the exact value so rounding is not amplified by 1/epsilon
    constant = train.max(axis=0) == train.min(axis=0)
    means = np.where(constant, train[0], means)
    return Standardizer(means, np.where(constant, 0.0, train.std(axis=0)))


def apply_standardizer(s: Standardizer, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != s.means.shape[0]:
        raise InvalidShapeError(
            f"vector length {v.shape[-1]} does not match standardizer length {s.means.shape[0]}")
    return (v - s.means) / (s.deviations + s.epsilon)

"""Tiny ONNX graphs standing in for exported backbones in tests and demos.

Two kinds:

* ``constant`` emits an SxSxC map filled with one value, whatever the input.
* ``pooled`` average-pools the input into an SxS grid, applies a seeded 1x1
  convolution to C channels and a tanh, so different images give different
  (but deterministic) features.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .backbones import DEFAULT_BACKBONES

OPSET = 13
IR_VERSION = 8


def make_stub_graph(path: str | Path, channels: int, kind: str = "pooled", spatial: int = 7,
                    value: float = 0.0, seed: int = 0, input_size: int = 224) -> Path:
    import onnx
    from onnx import TensorProto, helper, numpy_helper

    path = Path(path)
    inp = helper.make_tensor_value_info("input", TensorProto.FLOAT, [1, input_size, input_size, 3])
    out = helper.make_tensor_value_info("features", TensorProto.FLOAT,
                                        [1, spatial, spatial, channels])
    if kind == "constant":
        const = np.full((1, spatial, spatial, channels), value, dtype=np.float32)
        inits = [numpy_helper.from_array(const, "fill"),
                 numpy_helper.from_array(np.zeros(1, dtype=np.float32), "zero")]
        nodes = [
            helper.make_node("ReduceMean", ["input"], ["m"], keepdims=1),
            helper.make_node("Mul", ["m", "zero"], ["m0"]),
            helper.make_node("Add", ["m0", "fill"], ["features"]),
        ]
    elif kind == "pooled":
        k = input_size // spatial  # leftover border rows/cols are dropped
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, 1.0, size=(channels, 3, 1, 1)).astype(np.float32)
        b = rng.normal(0.0, 0.5, size=channels).astype(np.float32)
        inits = [numpy_helper.from_array(w, "w"), numpy_helper.from_array(b, "b")]
        nodes = [
            helper.make_node("Transpose", ["input"], ["nchw"], perm=[0, 3, 1, 2]),
            helper.make_node("AveragePool", ["nchw"], ["pooled"], kernel_shape=[k, k],
                             strides=[k, k]),
            helper.make_node("Conv", ["pooled", "w", "b"], ["conv"]),
            helper.make_node("Tanh", ["conv"], ["act"]),
            helper.make_node("Transpose", ["act"], ["features"], perm=[0, 2, 3, 1]),
        ]
    else:
        raise ValueError(f"unknown stub kind {kind!r}")
    graph = helper.make_graph(nodes, f"stub_{kind}", [inp], [out], initializer=inits)
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", OPSET)])
    model.ir_version = IR_VERSION
    onnx.checker.check_model(model)
    path.parent.mkdir(parents=True, exist_ok=True)
    onnx.save(model, str(path))
    return path


def write_stub_registry(graph_dir: str | Path, kind: str = "pooled") -> list[dict]:
    """One stub graph per default backbone, with the real channel counts.

    Returns registry entries (paths relative to ``graph_dir``'s parent).
    """
    graph_dir = Path(graph_dir)
    entries = []
    for k, (name, channels, _) in enumerate(DEFAULT_BACKBONES):
        spatial = 5 if name.startswith("inception") else 7
        make_stub_graph(graph_dir / f"{name}.onnx", channels, kind=kind, spatial=spatial,
                        value=float(k + 1), seed=k)
        entries.append({"name": name, "path": f"{graph_dir.name}/{name}.onnx",
                        "channels": channels, "preprocess": "scale_symmetric"})
    return entries


DEMO_CLASSES = ("COVID", "Normal", "Viral Pneumonia")


def _demo_image(class_index: int, rng: np.random.Generator, size: int = 256) -> np.ndarray:
    """Grayscale scan-like image; the bright region's location depends on the class."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    centres = [(0.3, 0.3), (0.7, 0.7), (0.3, 0.7)]
    cy, cx = centres[class_index % len(centres)]
    cy += rng.normal(0, 0.03)
    cx += rng.normal(0, 0.03)
    blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 0.02)
    img = 60 + 150 * blob + rng.normal(0, 12, size=(size, size))
    return np.clip(img, 0, 255).astype(np.uint8)


def make_demo_workspace(root: str | Path, per_class: int = 20, seed: int = 0,
                        kind: str = "pooled") -> Path:
    """Synthetic three-class dataset, stub backbones and a small config.

    Returns the path of the written ``config.json``.
    """
    from PIL import Image

    root = Path(root)
    rng = np.random.default_rng(seed)
    for c, name in enumerate(DEMO_CLASSES):
        cdir = root / "dataset" / name
        cdir.mkdir(parents=True, exist_ok=True)
        for k in range(per_class):
            Image.fromarray(_demo_image(c, rng), mode="L").save(cdir / f"{name[:3]}_{k:04d}.png")
    entries = write_stub_registry(root / "backbones", kind=kind)
    (root / "registry.json").write_text(json.dumps({"backbones": entries}, indent=1))
    config = {
        "task": "three_class",
        "n_trials": 2,
        "master_seed": 7,
        "dataset": "dataset",
        "registry": "registry.json",
        "feature_store": "features.bin",
        "autoencoder": {"hidden_dim": 64, "latent_dim": 16},
        "autoencoder_train": {"epochs": 20},
        "classifier_train": {"epochs": 200},
        "tsne": {"enabled": True, "trial": 0, "perplexity": 5, "iterations": 300},
        "output_dir": "results",
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config, indent=2))
    return cfg_path

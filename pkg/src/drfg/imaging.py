"""Image loading, quadrant slicing and per-backbone input preprocessing."""

from __future__ import annotations

import enum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, InvalidInputError, InvalidShapeError

CANONICAL_SIZE = 448
QUADRANT_SIZE = 224

_BGR_MEANS = np.array([103.939, 116.779, 123.68], dtype=np.float32)
_RGB_MEANS = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_RGB_STDS = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class PreprocessMode(str, enum.Enum):
    SCALE_SYMMETRIC = "scale_symmetric"
    MEAN_SUBTRACT_BGR = "mean_subtract_bgr"
    SCALE_NORMALIZE = "scale_normalize"
    IDENTITY = "identity"


def _decode(path: Path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, UnidentifiedImageError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc
    return img


def load_and_resize(path: str | Path, size: int = CANONICAL_SIZE) -> np.ndarray:
    """Decode an image file into a ``size x size x 3`` float32 RGB tensor.

    Grayscale sources are replicated across the three channels and resampling
    is bilinear. An image already at the target size is returned unresampled.
    Values stay in [0, 255].
    """
    path = Path(path)
    img = _decode(path)
    if img.width == 0 or img.height == 0:
        raise InvalidInputError(f"zero-area image: {path}")

    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        # 16-bit scans are rescaled into the 8-bit value range
        peak = 65535.0 if img.mode.startswith("I;16") else float(max(np.asarray(img).max(), 1))
        arr = np.asarray(img, dtype=np.float32) * (255.0 / peak)
        img = Image.fromarray(arr, mode="F")
    elif img.mode not in ("L", "F", "RGB"):
        img = img.convert("RGB")

    if img.size != (size, size):
        img = img.resize((size, size), resample=Image.BILINEAR)

    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return np.clip(arr, 0.0, 255.0)


def slice_quadrants(img: np.ndarray) -> list[np.ndarray]:
    """Split a 448x448x3 tensor into [top-left, top-right, bottom-left, bottom-right]."""
    expected = (CANONICAL_SIZE, CANONICAL_SIZE, 3)
    if img.shape != expected:
        raise InvalidShapeError(f"expected image of shape {expected}, got {img.shape}")
    h = QUADRANT_SIZE
    return [img[:h, :h], img[:h, h:], img[h:, :h], img[h:, h:]]


def reassemble_quadrants(quadrants: list[np.ndarray]) -> np.ndarray:
    top = np.concatenate([quadrants[0], quadrants[1]], axis=1)
    bottom = np.concatenate([quadrants[2], quadrants[3]], axis=1)
    return np.concatenate([top, bottom], axis=0)


def preprocess(q: np.ndarray, mode: PreprocessMode | str) -> np.ndarray:
    mode = PreprocessMode(mode)
    if q.ndim != 3 or q.shape[2] != 3:
        raise InvalidShapeError(f"expected an HxWx3 tensor, got {q.shape}")
    q = q.astype(np.float32, copy=False)
    if mode is PreprocessMode.SCALE_SYMMETRIC:
        return q / np.float32(127.5) - np.float32(1.0)
    if mode is PreprocessMode.MEAN_SUBTRACT_BGR:
        return q[:, :, ::-1] - _BGR_MEANS
    if mode is PreprocessMode.SCALE_NORMALIZE:
        return (q / np.float32(255.0) - _RGB_MEANS) / _RGB_STDS
    return q.copy()

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from drfg import imaging
from drfg.errors import DecodeError, InvalidShapeError
from drfg.imaging import PreprocessMode


def _save(tmp_path, arr, name="img.png", mode=None):
    path = tmp_path / name
    Image.fromarray(arr, mode=mode).save(path)
    return path


def test_grayscale_256_upscaled_and_replicated(tmp_path, rng):
    arr = rng.integers(0, 256, size=(256, 256), dtype=np.uint8)
    out = imaging.load_and_resize(_save(tmp_path, arr))
    assert out.shape == (448, 448, 3)
    assert np.array_equal(out[..., 0], out[..., 1])
    assert np.array_equal(out[..., 0], out[..., 2])
    assert out.min() >= 0 and out.max() <= 255


def test_rgb_at_canonical_size_is_unchanged(tmp_path, rng):
    arr = rng.integers(0, 256, size=(448, 448, 3), dtype=np.uint8)
    out = imaging.load_and_resize(_save(tmp_path, arr))
    assert np.array_equal(out, arr.astype(np.float32))


def test_constant_image_stays_constant(tmp_path):
    out = imaging.load_and_resize(_save(tmp_path, np.full((2, 2), 7, dtype=np.uint8)))
    assert out.shape == (448, 448, 3)
    assert np.all(out == 7)


def test_jpeg_rgb_accepted(tmp_path, rng):
    arr = rng.integers(0, 256, size=(100, 120, 3), dtype=np.uint8)
    path = tmp_path / "x.jpg"
    Image.fromarray(arr).save(path)
    assert imaging.load_and_resize(path).shape == (448, 448, 3)


def test_load_is_deterministic(tmp_path, rng):
    path = _save(tmp_path, rng.integers(0, 256, size=(256, 256), dtype=np.uint8))
    assert np.array_equal(imaging.load_and_resize(path), imaging.load_and_resize(path))


def test_undecodable_file_names_path(tmp_path):
    bad = tmp_path / "broken.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(DecodeError, match="broken.png"):
        imaging.load_and_resize(bad)


def test_quadrant_index_arithmetic():
    r, c = np.mgrid[0:448, 0:448]
    img = np.repeat((448 * r + c).astype(np.float32)[:, :, None], 3, axis=2)
    q = imaging.slice_quadrants(img)
    assert [x.shape for x in q] == [(224, 224, 3)] * 4
    # source pixel (300, 100) lives in quadrant 2 at (76, 100)
    assert q[2][76, 100, 0] == img[300, 100, 0]
    assert q[1][0, 0, 0] == 224


def test_constant_image_gives_constant_quadrants():
    q = imaging.slice_quadrants(np.full((448, 448, 3), 5.0, dtype=np.float32))
    assert all(np.all(x == 5.0) for x in q)


def test_slice_rejects_wrong_shape():
    with pytest.raises(InvalidShapeError, match=r"\(256, 256, 3\)"):
        imaging.slice_quadrants(np.zeros((256, 256, 3)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reassembly_is_exact(seed):
    img = np.random.default_rng(seed).uniform(0, 255, size=(448, 448, 3)).astype(np.float32)
    assert np.array_equal(imaging.reassemble_quadrants(imaging.slice_quadrants(img)), img)


@pytest.mark.parametrize("value, expected", [(0.0, -1.0), (255.0, 1.0)])
def test_scale_symmetric_endpoints(value, expected):
    out = imaging.preprocess(np.full((224, 224, 3), value, dtype=np.float32),
                             PreprocessMode.SCALE_SYMMETRIC)
    assert np.allclose(out, expected)


def test_scale_symmetric_range(rng):
    q = rng.uniform(0, 255, size=(224, 224, 3)).astype(np.float32)
    out = imaging.preprocess(q, "scale_symmetric")
    assert out.min() >= -1.0 and out.max() <= 1.0


def test_mean_subtract_bgr_pure_red():
    q = np.zeros((224, 224, 3), dtype=np.float32)
    q[..., 0] = 255
    out = imaging.preprocess(q, PreprocessMode.MEAN_SUBTRACT_BGR)
    assert np.allclose(out[0, 0], [-103.939, -116.779, 255 - 123.68], atol=1e-4)


def test_scale_normalize_matches_formula(rng):
    q = rng.uniform(0, 255, size=(224, 224, 3)).astype(np.float32)
    out = imaging.preprocess(q, PreprocessMode.SCALE_NORMALIZE)
    expected = (q / 255.0 - np.array([0.485, 0.456, 0.406])) / np.array([0.229, 0.224, 0.225])
    assert np.allclose(out, expected, atol=1e-5)


def test_identity_preserves_values_and_shape(rng):
    q = rng.uniform(0, 255, size=(224, 224, 3)).astype(np.float32)
    out = imaging.preprocess(q, PreprocessMode.IDENTITY)
    assert out.shape == q.shape and np.array_equal(out, q)

import numpy as np
import pytest

from drfg import autoencoder, nn
from drfg.autoencoder import AutoencoderConfig
from drfg.errors import ConfigurationError, ContractViolation, InvalidShapeError
from drfg.splits import AccessLog, Partition
from drfg.store import FeatureSet


def subspace_data(n=1000, dim=100, rank=8, noise=0.1, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, rank)) @ (rng.normal(size=(rank, dim)) / np.sqrt(rank))
    X += noise * rng.normal(size=(n, dim))
    return X - X.mean(axis=0)


def pca_reconstruction_mse(X, rank):
    """Oracle: best rank-k linear reconstruction error."""
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    basis = vt[:rank]
    return float(np.mean((X - X @ basis.T @ basis) ** 2))


def test_default_dims():
    cfg = AutoencoderConfig()
    net = autoencoder.build_autoencoder(cfg)
    assert net.dims == [9984, 1024, 256, 1024, 9984]
    assert net.activations == ["relu", "relu", "relu", "linear"]


def test_small_parameter_count():
    net = autoencoder.build_autoencoder(AutoencoderConfig(4, 3, 2))
    assert net.n_params() == (4 * 3 + 3) + (3 * 2 + 2) + (2 * 3 + 3) + (3 * 4 + 4) == 48
    assert len(net.layers[autoencoder.ENCODER]) == len(net.layers[autoencoder.DECODER]) == 2


def test_width_ordering_enforced():
    with pytest.raises(ConfigurationError):
        AutoencoderConfig(10, 4, 8)
    AutoencoderConfig(10, 10, 10, strict_widths=False)


def test_zero_encoder_gives_zero_latent():
    net = autoencoder.build_autoencoder(AutoencoderConfig(6, 4, 2))
    for layer in net.layers[:2]:
        layer.weight[:] = 0
    assert np.all(autoencoder.encode(net, np.arange(6.0)) == 0)


def test_decode_after_encode_equals_forward():
    net = autoencoder.build_autoencoder(AutoencoderConfig(12, 8, 3), seed=5)
    for layer in net.layers:
        layer.bias[:] = np.random.default_rng(1).normal(size=layer.bias.shape)
    X = np.random.default_rng(2).normal(size=(9, 12))
    full = nn.predict(net, X)
    assert np.array_equal(autoencoder.decode(net, autoencoder.encode(net, X)), full)
    assert np.array_equal(autoencoder.decode(net, autoencoder.encode(net, X[0])),
                          nn.predict(net, X[0]))


def test_encode_length_and_mismatch():
    net = autoencoder.build_autoencoder(AutoencoderConfig(20, 10, 5))
    assert autoencoder.encode(net, np.ones(20)).shape == (5,)
    with pytest.raises(InvalidShapeError):
        autoencoder.encode(net, np.ones(21))


def test_training_refuses_test_partition():
    fs = FeatureSet(np.zeros((4, 6)), [0, 1, 0, 1], ["a", "b"])
    with pytest.raises(ContractViolation):
        autoencoder.train_autoencoder(Partition("test", fs), AutoencoderConfig(6, 4, 2))


def test_training_logs_train_partition_reads():
    fs = FeatureSet(np.random.default_rng(0).normal(size=(8, 6)), [0, 1] * 4, ["a", "b"])
    log = AccessLog()
    _, hist = autoencoder.train_autoencoder(Partition("train", fs, log),
                                            AutoencoderConfig(6, 4, 2), nn.TrainConfig(epochs=3))
    assert log.events == [("train", "autoencoder.fit")]
    assert len(hist) == 3


def test_dimension_mismatch():
    with pytest.raises(InvalidShapeError):
        autoencoder.train_autoencoder(np.zeros((4, 7)), AutoencoderConfig(6, 4, 2))


def test_memorizes_tiny_data_when_unconstrained():
    X = np.random.default_rng(3).normal(size=(4, 5))
    cfg = AutoencoderConfig(5, 5, 5, strict_widths=False)
    _, hist = autoencoder.train_autoencoder(X, cfg, nn.TrainConfig(epochs=1500, batch_size=4),
                                            seed=1)
    assert hist[-1] < 1e-3


def test_latents_reproducible():
    X = subspace_data(n=80, dim=20, rank=3)
    cfg = AutoencoderConfig(20, 10, 3)
    tc = nn.TrainConfig(epochs=5, shuffle_seed=2)
    a, _ = autoencoder.train_autoencoder(X, cfg, tc, seed=4)
    b, _ = autoencoder.train_autoencoder(X, cfg, tc, seed=4)
    assert np.array_equal(autoencoder.encode(a, X), autoencoder.encode(b, X))


def test_linear_subspace_capacity():
    X = subspace_data()
    cfg = AutoencoderConfig(100, 32, 8)
    params, hist = autoencoder.train_autoencoder(X, cfg, nn.TrainConfig(epochs=200), seed=0)
    recon = nn.mse_loss(X, nn.predict(params, X))
    assert len(hist) == 200
    assert recon <= 0.05 * X.var(axis=0).mean()
    assert recon <= 2.0 * pca_reconstruction_mse(X, 8)

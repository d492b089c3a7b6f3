"""Three-hidden-layer autoencoder whose bottleneck yields the reproductive features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigurationError, InvalidShapeError
from .splits import inference_values, training_values


@dataclass
class AutoencoderConfig:
    input_dim: int = 9984
    hidden_dim: int = 1024
    latent_dim: int = 256
    hidden_activation: str = "relu"
    output_activation: str = "linear"
    # off only for capacity experiments where widths may be equal
    strict_widths: bool = True

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.latent_dim) < 1:
            raise ConfigurationError("autoencoder widths must be positive")
        if self.strict_widths and not self.latent_dim < self.hidden_dim < self.input_dim:
            raise ConfigurationError(
                f"need latent < hidden < input, got {self.latent_dim}, "
                f"{self.hidden_dim}, {self.input_dim}")


def build_autoencoder(cfg: AutoencoderConfig, seed: int = 0) -> nn.DenseNetworkParams:
    dims = [cfg.input_dim, cfg.hidden_dim, cfg.latent_dim, cfg.hidden_dim, cfg.input_dim]
    acts = [cfg.hidden_activation] * 3 + [cfg.output_activation]
    return nn.init_network(dims, acts, seed)


ENCODER = slice(0, 2)
DECODER = slice(2, 4)


def train_autoencoder(features, cfg: AutoencoderConfig, train_cfg: nn.TrainConfig | None = None,
                      seed: int = 0):
    """Fit the autoencoder to reproduce its own (standardized) inputs.

    ``features`` is a training matrix or a train :class:`~drfg.splits.Partition`;
    a test partition is refused. Returns ``(params, loss_history)``.
    """
    X, _ = training_values(features, "autoencoder.fit")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != cfg.input_dim:
        raise InvalidShapeError(f"features have shape {X.shape}, expected (n, {cfg.input_dim})")
    train_cfg = train_cfg or nn.TrainConfig()
    if train_cfg.loss != "mse":
        raise ConfigurationError("the autoencoder is trained with mse loss")
    net = build_autoencoder(cfg, seed)
    return nn.fit(net, X, X, train_cfg)


def encode(params: nn.DenseNetworkParams, v) -> np.ndarray:
    """Bottleneck activations: the first two layers of the autoencoder."""
    v = inference_values(v, "autoencoder.encode")
    if np.shape(v)[-1] != params.layers[0].in_dim:
        raise InvalidShapeError(
            f"vector length {np.shape(v)[-1]} != autoencoder input {params.layers[0].in_dim}")
    return nn.predict(params, v, ENCODER)


def decode(params: nn.DenseNetworkParams, z) -> np.ndarray:
    return nn.predict(params, z, DECODER)

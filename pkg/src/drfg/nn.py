"""Minimal dense-network engine: forward, backprop, Adam, losses.

Arrays are float64. Every function accepts either one sample (1-D) or a batch
with samples along the first axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation, InvalidShapeError
from .store import read_checkpoint, write_checkpoint

ACTIVATIONS = ("relu", "softmax", "linear")
CCE_CLAMP = 1e-12


def relu(x):
    return np.maximum(x, 0.0)


def softmax(x):
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def _activate(name, z):
    if name == "relu":
        return relu(z)
    if name == "softmax":
        return softmax(z)
    return z


def mse_loss(x, x_hat) -> float:
    """Mean squared error; for a batch, the mean of per-sample losses."""
    x, x_hat = np.asarray(x, dtype=np.float64), np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape or x.size == 0:
        raise InvalidShapeError(f"mse_loss shapes differ: {x.shape} vs {x_hat.shape}")
    return float(np.mean((x - x_hat) ** 2))


def cce_loss(p, y) -> float:
    """Categorical cross-entropy, averaged over the batch."""
    p, y = np.asarray(p, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise InvalidShapeError(f"cce_loss shapes differ: {p.shape} vs {y.shape}")
    per_sample = -np.sum(y * np.log(np.clip(p, CCE_CLAMP, 1.0)), axis=-1)
    return float(np.mean(per_sample))


@dataclass
class DenseLayer:
    weight: np.ndarray  # out x in
    bias: np.ndarray
    activation: str = "linear"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class DenseNetworkParams:
    layers: list[DenseLayer]
    seed: int = 0
    # bumped on every parameter update; forward caches carry the value they saw
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        for k, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise InvalidShapeError(f"layer {k}: unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.out_dim,):
                raise InvalidShapeError(f"layer {k}: bias shape {layer.bias.shape}")
            if layer.activation == "softmax" and k != len(self.layers) - 1:
                raise InvalidShapeError("softmax may only be the final activation")
        for k in range(1, len(self.layers)):
            if self.layers[k].in_dim != self.layers[k - 1].out_dim:
                raise InvalidShapeError(
                    f"layer {k} expects {self.layers[k].in_dim} inputs, "
                    f"layer {k - 1} emits {self.layers[k - 1].out_dim}")

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def activations(self) -> list[str]:
        return [layer.activation for layer in self.layers]

    def n_params(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def params(self) -> list[np.ndarray]:
        """Flat parameter list in layer order: W0, b0, W1, b1, ..."""
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self) -> "DenseNetworkParams":
        layers = [DenseLayer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        return DenseNetworkParams(layers, self.seed)


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_network(dims: list[int], activations: list[str], seed: int = 0) -> DenseNetworkParams:
    """Glorot-uniform weights, zero biases."""
    if len(activations) != len(dims) - 1:
        raise InvalidShapeError("need one activation per layer")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        lim = glorot_limit(fan_in, fan_out)
        layers.append(DenseLayer(rng.uniform(-lim, lim, size=(fan_out, fan_in)),
                                 np.zeros(fan_out), act))
    return DenseNetworkParams(layers, seed)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]   # input to each layer
    pre: list[np.ndarray]      # pre-activations
    output: np.ndarray
    net_id: int
    version: int
    single: bool


def forward(net: DenseNetworkParams, x, layers: slice | None = None):
    """Forward pass. Returns ``(output, cache)``; ``layers`` restricts to a sub-chain."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None] if single else x
    chain = net.layers if layers is None else net.layers[layers]
    if h.ndim != 2 or h.shape[1] != chain[0].in_dim:
        raise InvalidShapeError(
            f"input has {h.shape[-1]} features, network expects {chain[0].in_dim}")
    inputs, pre = [], []
    for layer in chain:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        pre.append(z)
        h = _activate(layer.activation, z)
    cache = ForwardCache(inputs, pre, h, id(net), net.version, single)
    return (h[0] if single else h), cache


def predict(net: DenseNetworkParams, x, layers: slice | None = None) -> np.ndarray:
    return forward(net, x, layers)[0]


def backward(net: DenseNetworkParams, cache: ForwardCache, grad, wrt_logits: bool = False):
    """Backpropagate an output gradient into per-layer ``(dW, db)`` pairs.

    ``grad`` is dL/d(output). With ``wrt_logits=True`` it is instead taken as
    dL/d(final pre-activation), which is how softmax + cross-entropy is fused
    (the caller passes ``p - y``).
    """
    if cache.net_id != id(net) or cache.version != net.version \
            or len(cache.pre) != len(net.layers):
        raise ContractViolation("forward cache does not belong to this network state")
    g = np.asarray(grad, dtype=np.float64)
    if cache.single:
        g = g[None]
    if g.shape != cache.output.shape:
        raise InvalidShapeError(f"gradient shape {g.shape} != output shape {cache.output.shape}")

    grads = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        z = cache.pre[k]
        if k == len(net.layers) - 1 and wrt_logits:
            dz = g
        elif layer.activation == "relu":
            dz = g * (z > 0)
        elif layer.activation == "softmax":
            p = softmax(z)
            dz = p * (g - np.sum(g * p, axis=1, keepdims=True))
        else:
            dz = g
        grads[k] = (dz.T @ cache.inputs[k], dz.sum(axis=0))
        g = dz @ layer.weight
    return grads


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7

    @classmethod
    def for_network(cls, net: DenseNetworkParams, learning_rate: float = 0.001) -> "AdamState":
        params = net.params()
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   learning_rate=learning_rate)


def adam_update(net: DenseNetworkParams, grads, state: AdamState):
    """One bias-corrected Adam step, applied in place. Returns ``(net, state)``."""
    flat = [g for pair in grads for g in pair]
    params = net.params()
    if len(flat) != len(params):
        raise InvalidShapeError("gradient list does not match the network's parameters")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, flat, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    net.version += 1
    return net, state


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 40
    loss: str = "mse"  # or "categorical_cross_entropy"
    shuffle_seed: int = 0
    learning_rate: float = 0.001

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidShapeError("batch_size and epochs must be >= 1")
        if self.loss not in ("mse", "categorical_cross_entropy"):
            raise InvalidShapeError(f"unknown loss {self.loss!r}")


def loss_and_grad(net: DenseNetworkParams, out: np.ndarray, target: np.ndarray, loss: str):
    """Batch loss and the gradient to feed ``backward`` (with its ``wrt_logits`` flag)."""
    n = out.shape[0]
    if loss == "mse":
        return mse_loss(target, out), 2.0 * (out - target) / out.size, False
    value = cce_loss(out, target)
    if net.layers[-1].activation == "softmax":
        return value, (out - target) / n, True
    return value, -target / np.clip(out, CCE_CLAMP, None) / n, False


def fit(net: DenseNetworkParams, X, Y, cfg: TrainConfig, state: AdamState | None = None):
    """Minibatch Adam training in place. Returns ``(net, per-epoch mean loss list)``."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise InvalidShapeError("fit needs a non-empty 2-D input matrix")
    if len(X) != len(Y):
        raise InvalidShapeError(f"{len(X)} inputs but {len(Y)} targets")
    if X.shape[1] != net.layers[0].in_dim or Y.shape[1] != net.layers[-1].out_dim:
        raise InvalidShapeError(
            f"data dims ({X.shape[1]}, {Y.shape[1]}) do not match network "
            f"({net.layers[0].in_dim}, {net.layers[-1].out_dim})")
    if state is None:
        state = AdamState.for_network(net, cfg.learning_rate)
    rng = np.random.default_rng(cfg.shuffle_seed)
    n = len(X)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            out, cache = forward(net, X[idx])
            value, g, fused = loss_and_grad(net, out, Y[idx], cfg.loss)
            total += value * len(idx)
            adam_update(net, backward(net, cache, g, wrt_logits=fused), state)
        history.append(total / n)
    return net, history


def save_params(path: str | Path, net: DenseNetworkParams, extra: dict | None = None) -> None:
    header = {"kind": "dense", "dims": net.dims, "activations": net.activations,
              "seed": net.seed}
    if extra:
        header["extra"] = extra
    write_checkpoint(path, header, net.params())


def load_params(path: str | Path) -> tuple[DenseNetworkParams, dict]:
    header, arrays = read_checkpoint(path)
    if header.get("kind") != "dense":
        raise InvalidShapeError(f"{path} is not a dense-network checkpoint")
    layers = [DenseLayer(arrays[2 * k], arrays[2 * k + 1], act)
              for k, act in enumerate(header["activations"])]
    return DenseNetworkParams(layers, header["seed"]), header.get("extra", {})

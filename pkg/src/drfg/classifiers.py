"""Evaluation heads on latent vectors: SLP, shallow MLP and an SMO-trained SVM.

Every head follows the same contract: ``fit(data, labels=None)`` then
``predict(X) -> class indices``, so the harness can treat them uniformly.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .errors import ConfigurationError, InvalidInputError, InvalidShapeError
from .splits import inference_values, training_values
from .store import read_checkpoint, write_checkpoint

log = logging.getLogger(__name__)


def _xy(data, labels, stage):
    X, y = training_values(data, stage)
    if labels is not None:
        y = labels
    if y is None:
        raise InvalidInputError(f"{stage}: labels are required")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y) or len(X) == 0:
        raise InvalidShapeError(f"{stage}: got {X.shape} inputs for {len(y)} labels")
    return X, y


# perceptrons -----------------------------------------------------------------

@dataclass
class PerceptronConfig:
    variant: str = "slp"  # or "mlp"
    n_classes: int = 3
    hidden_dim: int = 128

    def __post_init__(self):
        if self.variant not in ("slp", "mlp"):
            raise ConfigurationError(f"unknown perceptron variant {self.variant!r}")
        if self.n_classes < 2:
            raise ConfigurationError("need at least two classes")


def build_perceptron(cfg: PerceptronConfig, in_dim: int, seed: int = 0) -> nn.DenseNetworkParams:
    if cfg.variant == "slp":
        return nn.init_network([in_dim, cfg.n_classes], ["softmax"], seed)
    return nn.init_network([in_dim, cfg.hidden_dim, cfg.n_classes], ["relu", "softmax"], seed)


def one_hot(y, n_classes: int) -> np.ndarray:
    y = np.asarray(y)
    if y.size and (not np.issubdtype(y.dtype, np.integer) or y.min() < 0 or y.max() >= n_classes):
        raise InvalidInputError(f"labels must be class indices in [0, {n_classes})")
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), y.astype(np.int64)] = 1.0
    return out


def train_perceptron(cfg: PerceptronConfig, latents, labels=None,
                     train_cfg: nn.TrainConfig | None = None, seed: int = 0):
    """Softmax classifier trained with cross-entropy and Adam. Returns the network."""
    X, y = _xy(latents, labels, f"{cfg.variant}.fit")
    Y = one_hot(y, cfg.n_classes)
    train_cfg = train_cfg or nn.TrainConfig(loss="categorical_cross_entropy")
    if train_cfg.loss != "categorical_cross_entropy":
        raise ConfigurationError("perceptrons are trained with categorical cross-entropy")
    net = build_perceptron(cfg, X.shape[1], seed)
    nn.fit(net, X, Y, train_cfg)
    return net


def predict_perceptron(net: nn.DenseNetworkParams, latent):
    """``(class index, probabilities)``; argmax ties go to the lowest index."""
    probs = nn.predict(net, latent)
    return np.argmax(probs, axis=-1), probs


# support vector machine ------------------------------------------------------

@dataclass
class SvmConfig:
    kernel: str = "rbf"  # or "linear"
    C: float = 1.0
    gamma: float | str = "scale"
    tol: float = 1e-3
    max_passes: int = 10
    max_sweeps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kernel not in ("linear", "rbf"):
            raise ConfigurationError(f"unknown kernel {self.kernel!r}")
        if not self.C > 0:
            raise ConfigurationError("C must be positive")
        if self.gamma != "scale" and not float(self.gamma) > 0:
            raise ConfigurationError("gamma must be positive or 'scale'")


def resolve_gamma(cfg: SvmConfig, X: np.ndarray) -> float:
    if cfg.gamma != "scale":
        return float(cfg.gamma)
    var = float(X.var())
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def kernel_matrix(kernel: str, gamma: float, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class SvmHead:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    positive_class: int


@dataclass
class SvmModel:
    kernel: str
    C: float
    gamma: float
    classes: list
    heads: list[SvmHead] = field(default_factory=list)
    # training frequency per class, breaks one-vs-rest score ties
    class_counts: list[int] = field(default_factory=list)

    def decision_function(self, X) -> np.ndarray:
        """Per-head scores, shape (n, n_heads)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        dim = self.heads[0].support_vectors.shape[1] if len(self.heads[0].support_vectors) else None
        if dim is not None and X.shape[1] != dim:
            raise InvalidShapeError(f"input has {X.shape[1]} features, model expects {dim}")
        cols = []
        for h in self.heads:
            if len(h.dual_coef):
                cols.append(kernel_matrix(self.kernel, self.gamma, X, h.support_vectors)
                            @ h.dual_coef + h.bias)
            else:
                cols.append(np.full(len(X), h.bias))
        return np.stack(cols, axis=1)


def _take_step(i, j, alpha, b, err, K, y, C):
    """Jointly optimize alpha[i], alpha[j]; returns the new bias or None if no progress."""
    e_i, e_j = err[i], err[j]
    a_i, a_j = alpha[i], alpha[j]
    if y[i] != y[j]:
        lo, hi = max(0.0, a_j - a_i), min(C, C + a_j - a_i)
    else:
        lo, hi = max(0.0, a_i + a_j - C), min(C, a_i + a_j)
    if lo >= hi:
        return None
    eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
    if eta < 0:
        new_j = min(max(a_j - y[j] * (e_i - e_j) / eta, lo), hi)
    else:
        # flat or convex along the pair: take the better segment end
        slope = y[j] * (e_i - e_j)
        gain_lo = slope * (lo - a_j) + 0.5 * eta * (lo - a_j) ** 2
        gain_hi = slope * (hi - a_j) + 0.5 * eta * (hi - a_j) ** 2
        if gain_lo > gain_hi + 1e-12:
            new_j = lo
        elif gain_hi > gain_lo + 1e-12:
            new_j = hi
        else:
            return None
    if abs(new_j - a_j) < 1e-10 * (new_j + a_j + 1e-10):
        return None
    new_i = min(max(a_i + y[i] * y[j] * (a_j - new_j), 0.0), C)
    d_i, d_j = new_i - a_i, new_j - a_j
    b1 = b - e_i - y[i] * d_i * K[i, i] - y[j] * d_j * K[i, j]
    b2 = b - e_j - y[i] * d_i * K[i, j] - y[j] * d_j * K[j, j]
    if 0 < new_i < C:
        new_b = b1
    elif 0 < new_j < C:
        new_b = b2
    else:
        new_b = 0.5 * (b1 + b2)
    alpha[i], alpha[j] = new_i, new_j
    err += y[i] * d_i * K[:, i] + y[j] * d_j * K[:, j] + (new_b - b)
    return new_b


def smo_binary(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_passes: int,
               rng: np.random.Generator, max_sweeps: int = 1000):
    """Simplified sequential minimal optimization on a precomputed kernel.

    ``y`` holds +/-1. For each KKT-violating index a random partner is tried
    first; if that pair cannot move, the remaining partners are scanned from a
    random offset. Stops after ``max_passes`` consecutive sweeps without an
    update. Returns ``(alpha, b)``.
    """
    n = len(y)
    y = y.astype(np.float64)
    alpha = np.zeros(n)
    b = 0.0
    err = -y.copy()  # f(x_i) - y_i with alpha = 0, b = 0
    passes = sweeps = 0
    while passes < max_passes:
        if sweeps >= max_sweeps:
            warnings.warn(f"SMO stopped after {max_sweeps} sweeps without converging")
            break
        sweeps += 1
        changed = 0
        for i in range(n):
            r = y[i] * err[i]
            if not ((r < -tol and alpha[i] < C) or (r > tol and alpha[i] > 0)):
                continue
            j = int(rng.integers(n - 1))
            j += j >= i
            new_b = _take_step(i, j, alpha, b, err, K, y, C)
            if new_b is None:
                offset = int(rng.integers(n))
                for k in range(n):
                    j = (offset + k) % n
                    if j == i:
                        continue
                    new_b = _take_step(i, j, alpha, b, err, K, y, C)
                    if new_b is not None:
                        break
            if new_b is not None:
                b = new_b
                changed += 1
        passes = passes + 1 if changed == 0 else 0

    free = (alpha > 0) & (alpha < C)
    if free.any():
        b = float(np.mean(y[free] - K[free] @ (alpha * y)))
    return alpha, b


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def svm_train(cfg: SvmConfig, X, y=None) -> SvmModel:
    """One-vs-rest SVM; a two-class problem gets a single head for ``classes[1]``."""
    X, y = _xy(X, y, "svm.fit")
    classes = sorted(np.unique(y).tolist())
    if len(classes) < 2:
        raise InvalidInputError("svm_train needs at least two classes")
    gamma = resolve_gamma(cfg, X)
    K = kernel_matrix(cfg.kernel, gamma, X, X)
    rng = np.random.default_rng(cfg.seed)
    positives = classes[1:] if len(classes) == 2 else classes
    model = SvmModel(cfg.kernel, cfg.C, gamma, classes,
                     class_counts=[int(np.sum(y == c)) for c in classes])
    for pos in positives:
        yy = np.where(y == pos, 1.0, -1.0)
        alpha, b = smo_binary(K, yy, cfg.C, cfg.tol, cfg.max_passes, rng, cfg.max_sweeps)
        keep = alpha > 0
        model.heads.append(SvmHead(X[keep].copy(), alpha[keep] * yy[keep], b, pos))
    return model


def svm_predict(model: SvmModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    scores = model.decision_function(X)
    if len(model.heads) == 1:
        idx = (scores[:, 0] > 0).astype(np.int64)
    else:
        counts = np.asarray(model.class_counts or [0] * len(model.classes), dtype=np.float64)
        best = scores.max(axis=1, keepdims=True)
        # among tied heads prefer the more frequent class, then the lower index
        idx = np.argmax(np.where(scores == best, counts + 1.0, 0.0), axis=1)
    out = np.asarray(model.classes)[idx]
    return out[0] if single else out


def save_svm(path: str | Path, model: SvmModel) -> None:
    header = {"kind": "svm", "kernel": model.kernel, "C": model.C, "gamma": model.gamma,
              "classes": [int(c) if isinstance(c, (int, np.integer)) else c
                          for c in model.classes],
              "heads": [{"bias": float(h.bias), "class": int(h.positive_class)}
                        for h in model.heads],
              "class_counts": list(model.class_counts)}
    arrays = []
    for h in model.heads:
        arrays += [h.support_vectors, h.dual_coef]
    write_checkpoint(path, header, arrays)


def load_svm(path: str | Path) -> SvmModel:
    header, arrays = read_checkpoint(path)
    if header.get("kind") != "svm":
        raise InvalidInputError(f"{path} is not an SVM checkpoint")
    heads = [SvmHead(arrays[2 * k], arrays[2 * k + 1], h["bias"], h["class"])
             for k, h in enumerate(header["heads"])]
    return SvmModel(header["kernel"], header["C"], header["gamma"], header["classes"], heads,
                    header.get("class_counts", []))


# uniform wrappers used by the harness ----------------------------------------

class PerceptronClassifier:
    def __init__(self, cfg: PerceptronConfig, train_cfg: nn.TrainConfig | None = None,
                 seed: int = 0):
        self.cfg, self.train_cfg, self.seed = cfg, train_cfg, seed
        self.net = None

    def fit(self, data, labels=None):
        self.net = train_perceptron(self.cfg, data, labels, self.train_cfg, self.seed)
        return self

    def predict(self, data) -> np.ndarray:
        return predict_perceptron(self.net, inference_values(data, f"{self.cfg.variant}.predict"))[0]

    def save(self, path):
        nn.save_params(path, self.net, {"variant": self.cfg.variant})


class SvmClassifier:
    def __init__(self, cfg: SvmConfig):
        self.cfg = cfg
        self.model = None

    def fit(self, data, labels=None):
        self.model = svm_train(self.cfg, data, labels)
        return self

    def predict(self, data) -> np.ndarray:
        return svm_predict(self.model, inference_values(data, "svm.predict"))

    def save(self, path):
        save_svm(path, self.model)

"""Exact O(n^2) t-SNE for inspecting latent spaces in two dimensions."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidInputError, InvalidShapeError

# bisection aims 10x tighter than the 1e-3 relative perplexity guarantee
_SEARCH_RTOL = 1e-4
_MAX_BISECTIONS = 200
_P_FLOOR = 1e-12


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    output_dim: int = 2
    iterations: int = 1000
    learning_rate: float = 200.0
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 250:
            raise ConfigurationError("t-SNE needs at least 250 iterations")
        if self.perplexity <= 0:
            raise ConfigurationError("perplexity must be positive")


@dataclass
class PMatrix:
    P: np.ndarray
    conditional: np.ndarray
    betas: np.ndarray        # precision 1/(2 sigma^2) in original distance units
    perplexities: np.ndarray  # achieved 2^H per row
    fallback_rows: list[int] = field(default_factory=list)


@dataclass
class Embedding:
    points: np.ndarray
    sample_ids: list[str]
    labels: list
    kl_history: np.ndarray
    fallback_rows: list[int] = field(default_factory=list)


def squared_distances(X: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def _row_entropy(d: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    """Shannon entropy (bits) of the Gaussian neighbour distribution at precision beta."""
    shifted = d - d.min()
    w = np.exp(-beta * shifted)
    s = w.sum()
    p = w / s
    h_nats = np.log(s) + beta * float(p @ shifted)
    return h_nats / np.log(2.0), p


def _calibrate_row(d: np.ndarray, perplexity: float):
    """Bisection on log-precision for a row of scale-normalized squared distances."""
    target = np.log2(perplexity)
    lo, hi = -50.0, 50.0
    log_beta = 0.0
    for _ in range(_MAX_BISECTIONS):
        h, p = _row_entropy(d, np.exp(log_beta))
        if abs(2.0 ** h - perplexity) <= _SEARCH_RTOL * perplexity:
            return np.exp(log_beta), p, 2.0 ** h, True
        # entropy falls as precision rises
        if h > target:
            lo = log_beta
        else:
            hi = log_beta
        log_beta = 0.5 * (lo + hi)
    return np.exp(log_beta), p, 2.0 ** h, False


def compute_p_matrix(X, perplexity: float = 30.0) -> PMatrix:
    """Symmetric joint neighbour probabilities calibrated to ``perplexity``.

    Row distances are divided by their mean before the bandwidth search, so the
    result does not depend on the overall scale of ``X``. Rows whose search
    does not converge (e.g. all-duplicate points) fall back to the widest
    bandwidth, a uniform row, and are listed in ``fallback_rows``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidShapeError(f"expected an (n, d) matrix, got shape {X.shape}")
    n = len(X)
    if n < 4:
        raise InvalidInputError(f"t-SNE needs at least 4 points, got {n}")
    if not 1.0 <= perplexity <= n - 1:
        raise InvalidInputError(f"perplexity {perplexity} unreachable with {n} points")
    D = squared_distances(X)
    cond = np.zeros((n, n))
    betas = np.zeros(n)
    perps = np.zeros(n)
    fallback = []
    others = ~np.eye(n, dtype=bool)
    for i in range(n):
        d = D[i, others[i]]
        scale = d.mean()
        if scale <= 0:
            p, beta, perp, ok = np.full(n - 1, 1.0 / (n - 1)), 0.0, float(n - 1), False
        else:
            beta, p, perp, ok = _calibrate_row(d / scale, perplexity)
            beta /= scale
        if not ok:
            fallback.append(i)
            p = np.full(n - 1, 1.0 / (n - 1))
            beta, perp = 0.0, float(n - 1)
        cond[i, others[i]] = p
        betas[i], perps[i] = beta, perp
    P = (cond + cond.T) / (2.0 * n)
    return PMatrix(P, cond, betas, perps, fallback)


def _q_matrix(Y: np.ndarray):
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], _P_FLOOR))))


def tsne_embed(X, cfg: TsneConfig | None = None, sample_ids=None, labels=None) -> Embedding:
    """Gradient descent on KL(P || Q) with a Student-t output kernel.

    Uses the momentum schedule and early exaggeration of ``cfg`` and the
    per-coordinate adaptive gains of the reference implementation. Points are
    re-centred every iteration. ``kl_history[t]`` is the (unexaggerated)
    divergence after update ``t + 1``.
    """
    cfg = cfg or TsneConfig()
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if not cfg.perplexity < (n - 1) / 3:
        raise ConfigurationError(
            f"perplexity {cfg.perplexity} too large for {n} points (need < {(n - 1) / 3:.3g})")
    pm = compute_p_matrix(X, cfg.perplexity)
    P = np.maximum(pm.P, _P_FLOOR)

    rng = np.random.default_rng(cfg.seed)
    Y = rng.normal(0.0, 1e-4, size=(n, cfg.output_dim))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    history = np.empty(cfg.iterations)
    Q, num = _q_matrix(Y)
    for t in range(cfg.iterations):
        exag = cfg.early_exaggeration if t < cfg.exaggeration_iters else 1.0
        momentum = cfg.momentum if t < cfg.momentum_switch else cfg.final_momentum
        W = (exag * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - cfg.learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
        Q, num = _q_matrix(Y)
        history[t] = kl_divergence(P, Q)
    ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(n)]
    labs = list(labels) if labels is not None else [""] * n
    return Embedding(Y, ids, labs, history, pm.fallback_rows)


def write_embedding_csv(path: str | Path, emb: Embedding) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "label", "x", "y"])
        for sid, lab, (x, y) in zip(emb.sample_ids, emb.labels, emb.points[:, :2]):
            w.writerow([sid, lab, repr(float(x)), repr(float(y))])

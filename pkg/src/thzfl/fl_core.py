"""Local SGD training, the global model, and the server aggregation rules.

Models are flat-parameter classifiers (logistic regression or a one-hidden-
layer MLP) with analytic gradients; ``local_sgd`` never mutates the model
or the incoming weights.  Aggregation comes in two flavors: the uniform
mean of delivered updates, and per-subcarrier inverse-effective-noise
weighting.  Both share the same numerator/denominator arithmetic so that
uniform weights reduce to the plain mean bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import link
from .channel import LinkGeometry, LinkStatistics
from .link import GainEstimator, QuantizerSpec

_PROB_FLOOR = 1e-12  # keeps cross-entropy finite when a softmax saturates


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class LogisticModel:
    """Multinomial logistic regression on flat weights."""

    def __init__(self, input_dim: int, n_classes: int):
        self.input_dim = input_dim
        self.n_classes = n_classes

    @property
    def n_params(self) -> int:
        return self.input_dim * self.n_classes + self.n_classes

    def init_weights(self, rng: np.random.Generator) -> np.ndarray:
        w = rng.standard_normal(self.input_dim * self.n_classes)
        w /= math.sqrt(self.input_dim)
        return np.concatenate([w, np.zeros(self.n_classes)])

    def _unpack(self, w: np.ndarray):
        split = self.input_dim * self.n_classes
        return (w[:split].reshape(self.input_dim, self.n_classes), w[split:])

    def forward(self, w: np.ndarray, x: np.ndarray) -> np.ndarray:
        mat, bias = self._unpack(w)
        return softmax(x @ mat + bias)

    def loss_and_grad(self, w: np.ndarray, x: np.ndarray, y: np.ndarray):
        mat, bias = self._unpack(w)
        probs = softmax(x @ mat + bias)
        n = x.shape[0]
        loss = -float(np.mean(np.log(probs[np.arange(n), y] + _PROB_FLOOR)))
        delta = probs.copy()
        delta[np.arange(n), y] -= 1.0
        delta /= n
        grad_mat = x.T @ delta
        grad_bias = delta.sum(axis=0)
        return loss, np.concatenate([grad_mat.reshape(-1), grad_bias])


class MLPModel:
    """One-hidden-layer ReLU MLP with a softmax head."""

    def __init__(self, input_dim: int, hidden_dim: int, n_classes: int):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.n_classes = n_classes

    @property
    def n_params(self) -> int:
        return (self.input_dim * self.hidden_dim + self.hidden_dim
                + self.hidden_dim * self.n_classes + self.n_classes)

    def init_weights(self, rng: np.random.Generator) -> np.ndarray:
        w1 = rng.standard_normal(self.input_dim * self.hidden_dim)
        w1 *= math.sqrt(2.0 / self.input_dim)
        w2 = rng.standard_normal(self.hidden_dim * self.n_classes)
        w2 *= math.sqrt(2.0 / self.hidden_dim)
        return np.concatenate([
            w1, np.zeros(self.hidden_dim), w2, np.zeros(self.n_classes),
        ])

    def _unpack(self, w: np.ndarray):
        i, h, c = self.input_dim, self.hidden_dim, self.n_classes
        ofs = 0
        w1 = w[ofs:ofs + i * h].reshape(i, h); ofs += i * h
        b1 = w[ofs:ofs + h]; ofs += h
        w2 = w[ofs:ofs + h * c].reshape(h, c); ofs += h * c
        b2 = w[ofs:ofs + c]
        return w1, b1, w2, b2

    def forward(self, w: np.ndarray, x: np.ndarray) -> np.ndarray:
        w1, b1, w2, b2 = self._unpack(w)
        hidden = np.maximum(x @ w1 + b1, 0.0)
        return softmax(hidden @ w2 + b2)

    def loss_and_grad(self, w: np.ndarray, x: np.ndarray, y: np.ndarray):
        w1, b1, w2, b2 = self._unpack(w)
        pre = x @ w1 + b1
        hidden = np.maximum(pre, 0.0)
        probs = softmax(hidden @ w2 + b2)
        n = x.shape[0]
        loss = -float(np.mean(np.log(probs[np.arange(n), y] + _PROB_FLOOR)))
        delta = probs.copy()
        delta[np.arange(n), y] -= 1.0
        delta /= n
        grad_w2 = hidden.T @ delta
        grad_b2 = delta.sum(axis=0)
        dhidden = (delta @ w2.T) * (pre > 0.0)
        grad_w1 = x.T @ dhidden
        grad_b1 = dhidden.sum(axis=0)
        return loss, np.concatenate([
            grad_w1.reshape(-1), grad_b1, grad_w2.reshape(-1), grad_b2,
        ])


def make_model(architecture: str, input_dim: int, n_classes: int,
               hidden_dim: int = 32):
    if architecture == "logistic":
        return LogisticModel(input_dim, n_classes)
    if architecture == "mlp":
        return MLPModel(input_dim, hidden_dim, n_classes)
    raise ValueError(f"unknown architecture: {architecture!r}")


def evaluate(model, w: np.ndarray, features: np.ndarray,
             labels: np.ndarray) -> tuple[float, float]:
    """Top-1 accuracy and mean cross-entropy on a test set."""
    if features.shape[0] == 0:
        raise ValueError("test set must be non-empty")
    probs = model.forward(w, features)
    pred = probs.argmax(axis=1)
    acc = float(np.mean(pred == labels))
    loss = -float(np.mean(np.log(probs[np.arange(len(labels)), labels]
                                 + _PROB_FLOOR)))
    return acc, loss


def local_sgd(model, w0: np.ndarray, features: np.ndarray, labels: np.ndarray,
              steps: int, lr_local: float, batch_size: int,
              rng: np.random.Generator) -> np.ndarray:
    """Run K mini-batch SGD steps on the client shard; returns w_K - w_0.

    Batches walk a fresh random permutation of the shard, reshuffling once
    exhausted (epoch-style sampling without replacement).
    """
    n = features.shape[0]
    if n == 0:
        raise ValueError("client shard must be non-empty")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if lr_local < 0:
        raise ValueError("lr_local must be nonnegative")
    w = w0.copy()
    order = rng.permutation(n)
    cursor = 0
    for _ in range(steps):
        if cursor + batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor: cursor + batch_size]
        cursor += batch_size
        _, grad = model.loss_and_grad(w, features[idx], labels[idx])
        w -= lr_local * grad
    return w - w0


@dataclass
class ClientState:
    """Everything one client-link owns across rounds."""

    client_id: int
    shard_indices: np.ndarray
    geometry: LinkGeometry
    stats: LinkStatistics
    estimator: GainEstimator


@dataclass
class AggregationWeights:
    """Per-(client, subcarrier) aggregation weights.

    ``alpha`` holds the raw (pre-normalization) weights; the normalized view
    divides by the per-subcarrier column sums over the clients present.
    """

    alpha: np.ndarray  # (n_clients, n_subcarriers)

    @property
    def normalized(self) -> np.ndarray:
        return self.alpha / self.alpha.sum(axis=0, keepdims=True)

    @property
    def client_means(self) -> np.ndarray:
        """Subcarrier-averaged normalized weight per client (alpha-bar)."""
        return self.normalized.mean(axis=1)


def compute_weights(stats_list: list[LinkStatistics],
                    quantizer: QuantizerSpec | None, mode: str,
                    noise_floor: float = 1e-6) -> AggregationWeights:
    """Aggregation weights for the delivered clients.

    ``uniform`` gives every client raw weight 1.  ``snr_weighted`` uses the
    inverse of the per-(client, subcarrier) effective noise: compensated
    additive noise (1/SNR) + multiplicative distortion variance + the
    quantizer bound.  The effective noise is floored at ``noise_floor`` so a
    noiseless link cannot produce an infinite weight.
    """
    if mode not in ("uniform", "snr_weighted"):
        raise ValueError(f"unknown aggregation mode: {mode!r}")
    m = len(stats_list)
    n = stats_list[0].n_subcarriers
    if mode == "uniform":
        return AggregationWeights(alpha=np.ones((m, n)))
    omega = np.zeros(n) if quantizer is None else quantizer.omega_bound
    alpha = np.empty((m, n))
    for i, stats in enumerate(stats_list):
        effective = stats.noise_vars + stats.jitter_vars + omega
        alpha[i] = 1.0 / np.maximum(effective, noise_floor)
    return AggregationWeights(alpha=alpha)


def aggregate_unweighted(updates: list[np.ndarray],
                         server_lr: float) -> np.ndarray:
    """Server step: server_lr times the mean of delivered updates."""
    if not updates:
        raise ValueError("at least one delivered update is required")
    total = np.zeros_like(updates[0])
    for u in updates:
        total += u
    return (total / float(len(updates))) * server_lr


def aggregate_weighted(block_updates: list[np.ndarray],
                       weights: AggregationWeights, server_lr: float,
                       pad_len: int, permutation_seed: int | None) -> np.ndarray:
    """Per-subcarrier weighted mean of compensated blocks, reassembled.

    ``block_updates[i]`` is client i's compensated (n_subcarriers, d_sub)
    block array, aligned across clients by the shared round permutation.
    """
    if not block_updates:
        raise ValueError("at least one delivered update is required")
    if len(block_updates) != weights.alpha.shape[0]:
        raise ValueError("one weight row per delivered client is required")
    numerator = np.zeros_like(block_updates[0])
    for i, blocks in enumerate(block_updates):
        numerator += weights.alpha[i][:, None] * blocks
    denominator = weights.alpha.sum(axis=0)
    mean_blocks = numerator / denominator[:, None]
    vec = link.assemble(mean_blocks, pad_len, permutation_seed)
    return vec * server_lr

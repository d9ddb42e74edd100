"""Dataset ingestion, synthetic data generation, and client sharding.

IDX files follow the standard big-endian MNIST layout (magic 0x00000803 for
images, 0x00000801 for labels).  The synthetic generator produces seeded
Gaussian class blobs rescaled into [0, 1], so property tests and desk-scale
experiment presets need no external files.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

MAX_SHARD_RESAMPLES = 100


class IdxError(ValueError):
    """Base class for IDX parsing failures."""


class BadMagicError(IdxError):
    pass


class TruncatedFileError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n_samples, input_dim), values in [0, 1]
    labels: np.ndarray    # (n_samples,), class indices
    n_classes: int

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features/labels length mismatch")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.n_classes):
            raise ValueError("labels out of range")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices],
                       self.n_classes)


@dataclass(frozen=True)
class ShardPlan:
    """Partition of sample indices across clients."""

    assignment: np.ndarray  # (n_samples,) client id per sample
    strategy: str
    n_clients: int

    def client_indices(self, client_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == client_id)


def _read_exact(fh, count: int, path) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise TruncatedFileError(f"{path}: expected {count} more bytes")
    return data


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair; pixels are scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        magic, n_images, rows, cols = struct.unpack(
            ">4i", _read_exact(fh, 16, images_path))
        if magic != IMAGE_MAGIC:
            raise BadMagicError(
                f"{images_path}: bad image magic 0x{magic:08x}")
        raw = _read_exact(fh, n_images * rows * cols, images_path)
    pixels = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    features = pixels.reshape(n_images, rows * cols)

    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(">2i", _read_exact(fh, 8, labels_path))
        if magic != LABEL_MAGIC:
            raise BadMagicError(
                f"{labels_path}: bad label magic 0x{magic:08x}")
        raw = _read_exact(fh, n_labels, labels_path)
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if n_images != n_labels:
        raise CountMismatchError(
            f"image count {n_images} != label count {n_labels}")
    n_classes = int(labels.max()) + 1 if labels.size else 0
    return Dataset(features, labels, n_classes)


def synthetic_dataset(n_samples: int, input_dim: int, n_classes: int,
                      separation: float,
                      rng: np.random.Generator) -> Dataset:
    """Gaussian class blobs with configurable mean separation, in [0, 1].

    Class means are drawn on a sphere of radius ``separation``; unit-variance
    noise is added and the features are min-max rescaled into [0, 1].  Large
    separation gives a linearly separable problem; separation 0 collapses all
    classes onto one blob (chance-level accuracy).
    """
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    means = rng.standard_normal((n_classes, input_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    means *= separation
    labels = rng.integers(0, n_classes, size=n_samples)
    features = means[labels] + rng.standard_normal((n_samples, input_dim))
    lo, hi = features.min(), features.max()
    features = (features - lo) / (hi - lo) if hi > lo else np.zeros_like(features)
    return Dataset(features, labels.astype(np.int64), n_classes)


def shard(dataset: Dataset, n_clients: int, strategy: str,
          rng: np.random.Generator, dirichlet_beta: float = 0.5) -> ShardPlan:
    """Partition a dataset across clients.

    ``iid`` assigns each sample to a uniformly random client; ``dirichlet``
    draws per-class client proportions from Dir(beta), smaller beta being
    more heterogeneous.  Plans leaving any client empty are resampled up to
    MAX_SHARD_RESAMPLES times.
    """
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if n_clients > dataset.n_samples:
        raise ValueError("more clients than samples")
    for _ in range(MAX_SHARD_RESAMPLES):
        if strategy == "iid":
            assignment = rng.integers(0, n_clients, size=dataset.n_samples)
        elif strategy == "dirichlet":
            assignment = np.empty(dataset.n_samples, dtype=np.int64)
            for cls in range(dataset.n_classes):
                idx = np.flatnonzero(dataset.labels == cls)
                probs = rng.dirichlet(np.full(n_clients, dirichlet_beta))
                assignment[idx] = rng.choice(n_clients, size=idx.size, p=probs)
        else:
            raise ValueError(f"unknown shard strategy: {strategy!r}")
        counts = np.bincount(assignment, minlength=n_clients)
        if counts.min() > 0:
            return ShardPlan(assignment=assignment.astype(np.int64),
                             strategy=strategy, n_clients=n_clients)
    raise ValueError("could not produce a shard plan with non-empty clients")


def export_shards_csv(plan: ShardPlan, path) -> None:
    """Write the sample -> client assignment for reproducibility audits."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "client_id"])
        for i, cid in enumerate(plan.assignment):
            writer.writerow([i, int(cid)])

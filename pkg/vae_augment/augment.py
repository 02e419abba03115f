"""Artificial label generation and augmented training pools."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np

try:
    # When imported as part of the package
    from .numeric_core import ContractError, ShapeError
    from .preprocess import Dataset, snap_onehot
    from .vae import VaeParams, generate
except ImportError:
    # When running as standalone scripts
    from numeric_core import ContractError, ShapeError
    from preprocess import Dataset, snap_onehot
    from vae import VaeParams, generate

logger = logging.getLogger(__name__)

ZERO_DISTANCE = 1e-12
DEFAULT_NEIGHBORS = 5
SOFT_MAX_SCALE = 10

ORIGIN_VAE = "vae"
ORIGIN_NOISE = "noise"

NoiseLabels = Literal["gaussian", "knn"]


@dataclass(frozen=True)
class NeighborSet:
    indices: Tuple[int, ...]
    distances: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class AugmentedPool:
    real: Dataset
    artificial: Dataset
    scale: int
    method: str

    def __post_init__(self) -> None:
        if len(self.artificial) != self.scale * len(self.real):
            raise ContractError(
                f"pool at scale {self.scale} needs {self.scale * len(self.real)} artificial rows, "
                f"got {len(self.artificial)}"
            )
        if not self.real.all_real or np.any(self.artificial.is_real):
            raise ContractError("pool origin flags are inconsistent")

    @classmethod
    def unaugmented(cls, train: Dataset) -> "AugmentedPool":
        """Scale-0 pool: the training rows with no artificial rows."""
        return cls(train, train.take([]), 0, "pure")


def squared_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of squared coordinate differences, no square root."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"distance between vectors of length {a.size} and {b.size}")
    total = np.float64(0.0)
    for k in range(a.size):
        diff = a[k] - b[k]
        total += diff * diff
    return float(total)


def squared_distances(xhat: np.ndarray, real: np.ndarray) -> np.ndarray:
    """Row-wise :func:`squared_distance` from each of ``xhat`` (m x M) to each of ``real`` (n x M).

    Accumulates coordinate by coordinate so every entry is bit-identical to the scalar version.
    """
    xhat = np.atleast_2d(np.asarray(xhat, dtype=np.float64))
    real = np.atleast_2d(np.asarray(real, dtype=np.float64))
    if xhat.shape[1] != real.shape[1]:
        raise ShapeError(f"distance between {xhat.shape[1]}-dim and {real.shape[1]}-dim rows")
    total = np.zeros((xhat.shape[0], real.shape[0]))
    for k in range(xhat.shape[1]):
        diff = xhat[:, k, None] - real[None, :, k]
        total += diff * diff
    return total


def _nearest(distances: np.ndarray, count: int) -> NeighborSet:
    order = np.lexsort((np.arange(distances.size), distances))[:count]
    return NeighborSet(tuple(int(i) for i in order), tuple(float(distances[i]) for i in order))


def nearest_neighbors(xhat: np.ndarray, real: Dataset, neighbors: int) -> NeighborSet:
    """The min(S, n) closest real rows, ordered by (distance, row index)."""
    if neighbors < 1:
        raise ContractError(f"neighbor count must be >= 1, got {neighbors}")
    if len(real) == 0:
        raise ContractError("cannot search neighbors in an empty dataset")
    return _nearest(squared_distances(xhat, real.features)[0], min(neighbors, len(real)))


def _weighted_label(neighbor_set: NeighborSet, labels: np.ndarray) -> float:
    if neighbor_set.distances[0] < ZERO_DISTANCE:
        return float(labels[neighbor_set.indices[0]])
    weights = [1.0 / d for d in neighbor_set.distances]
    numerator = math.fsum(w * float(labels[i]) for w, i in zip(weights, neighbor_set.indices))
    return numerator / math.fsum(weights)


def knn_label(xhat: np.ndarray, real: Dataset, neighbors: int = DEFAULT_NEIGHBORS) -> float:
    """Inverse-distance weighted mean of the nearest real labels (exact label on a zero distance)."""
    return _weighted_label(nearest_neighbors(xhat, real, neighbors), real.labels)


def knn_labels(xhat: np.ndarray, real: Dataset, neighbors: int = DEFAULT_NEIGHBORS) -> np.ndarray:
    """:func:`knn_label` for every row of ``xhat``, sharing one distance matrix."""
    if neighbors < 1:
        raise ContractError(f"neighbor count must be >= 1, got {neighbors}")
    if len(real) == 0:
        raise ContractError("cannot label against an empty dataset")
    count = min(neighbors, len(real))
    distances = squared_distances(xhat, real.features)
    return np.array([_weighted_label(_nearest(row, count), real.labels) for row in distances])


def _check_scale(scale: int) -> None:
    if scale < 1:
        raise ContractError(f"augmentation scale must be >= 1, got {scale}")
    if scale > SOFT_MAX_SCALE:
        logger.warning("Augmentation scale %d exceeds the usual maximum of %d", scale, SOFT_MAX_SCALE)


def augment_vae(
    train: Dataset,
    params: VaeParams,
    scale: int,
    neighbors: int,
    rng: np.random.Generator,
    snap: bool = False,
) -> AugmentedPool:
    _check_scale(scale)
    count = scale * len(train)
    features = generate(params, count, rng)
    if snap:
        features = snap_onehot(features, train.codec)
    labels = knn_labels(features, train, neighbors)
    artificial = Dataset(features, labels, train.codec, np.full(count, ORIGIN_VAE, dtype=object))
    logger.debug("VAE pool: %d real + %d artificial rows (scale %d)", len(train), count, scale)
    return AugmentedPool(train, artificial, scale, ORIGIN_VAE)


def augment_noise(
    train: Dataset,
    scale: int,
    rng: np.random.Generator,
    noise_labels: NoiseLabels = "gaussian",
    neighbors: int = DEFAULT_NEIGHBORS,
) -> AugmentedPool:
    """Standard-normal control rows; labels are N(0, 1) draws unless ``noise_labels='knn'``."""
    _check_scale(scale)
    count = scale * len(train)
    features = rng.standard_normal((count, train.feature_dim))
    if noise_labels == "gaussian":
        labels = rng.standard_normal(count)
    elif noise_labels == "knn":
        labels = knn_labels(features, train, neighbors)
    else:
        raise ContractError(f"unknown noise label mode '{noise_labels}'")
    artificial = Dataset(features, labels, train.codec, np.full(count, ORIGIN_NOISE, dtype=object))
    return AugmentedPool(train, artificial, scale, ORIGIN_NOISE)


def combine(pool: AugmentedPool, rng: np.random.Generator) -> Dataset:
    """Concatenate real and artificial rows and shuffle them together."""
    merged = pool.real.concat(pool.artificial)
    return merged.take(rng.permutation(len(merged)))


"""Cleaning, one-hot + z-score codec, and the seeded 67/33 split."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

try:
    # When imported as part of the package
    from .load_data import DataValidationError, RawTable
except ImportError:
    # When running as standalone scripts
    from load_data import DataValidationError, RawTable

logger = logging.getLogger(__name__)

TRAIN_PERCENT = 67
ORIGIN_REAL = "real"
CONSTANT_TOLERANCE = 1e-12


class EmptyDatasetError(DataValidationError):
    """Raised when no rows survive cleaning."""


class UnknownCategoryError(DataValidationError):
    def __init__(self, column: str, value: str) -> None:
        super().__init__(f"Column '{column}' has category '{value}' that was not seen when fitting")
        self.column = column
        self.value = value


class DatasetTooSmallError(DataValidationError):
    """Raised when a dataset is too small to split."""


@dataclass(frozen=True)
class NumericStats:
    column: str
    mean: float
    std: float


@dataclass(frozen=True)
class CategoricalStats:
    column: str
    vocabulary: Tuple[str, ...]
    means: Tuple[float, ...]
    stds: Tuple[float, ...]


@dataclass(frozen=True)
class DroppedColumn:
    column: str
    reason: str
    constant: Union[float, str]


FeatureStats = Union[NumericStats, CategoricalStats]


@dataclass(frozen=True)
class Codec:
    features: Tuple[FeatureStats, ...]
    label: str
    label_mean: float
    label_std: float
    dropped: Tuple[DroppedColumn, ...] = ()

    @property
    def feature_names(self) -> List[str]:
        names: List[str] = []
        for stats in self.features:
            if isinstance(stats, NumericStats):
                names.append(stats.column)
            else:
                names.extend(f"{stats.column}={value}" for value in stats.vocabulary)
        return names

    @property
    def feature_dim(self) -> int:
        return len(self.feature_names)

    @property
    def columns(self) -> List[str]:
        return [stats.column for stats in self.features]

    def categorical_blocks(self) -> List[Tuple[CategoricalStats, slice]]:
        blocks: List[Tuple[CategoricalStats, slice]] = []
        offset = 0
        for stats in self.features:
            width = 1 if isinstance(stats, NumericStats) else len(stats.vocabulary)
            if isinstance(stats, CategoricalStats):
                blocks.append((stats, slice(offset, offset + width)))
            offset += width
        return blocks

    @property
    def warnings(self) -> List[str]:
        return [f"dropped column '{item.column}': {item.reason}" for item in self.dropped]


@dataclass(frozen=True)
class Dataset:
    """Standardized design matrix, standardized labels and a per-row origin tag."""

    features: np.ndarray
    labels: np.ndarray
    codec: Codec
    origin: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        labels = np.array(self.labels, dtype=np.float64).reshape(-1)
        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 2:
            features = features.reshape(len(labels), -1) if features.size else np.zeros((len(labels), self.codec.feature_dim))
        origin = (
            np.full(len(labels), ORIGIN_REAL, dtype=object)
            if self.origin is None
            else np.array(self.origin, dtype=object).reshape(-1)
        )
        if features.shape[0] != len(labels):
            raise DataValidationError(f"{features.shape[0]} feature rows but {len(labels)} labels")
        if features.shape[1] != self.codec.feature_dim:
            raise DataValidationError(
                f"Feature width {features.shape[1]} does not match codec width {self.codec.feature_dim}"
            )
        if len(origin) != len(labels):
            raise DataValidationError("origin flags must have one entry per row")
        for array in (features, labels, origin):
            array.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "origin", origin)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def is_real(self) -> np.ndarray:
        return self.origin == ORIGIN_REAL

    @property
    def all_real(self) -> bool:
        return bool(np.all(self.is_real))

    def take(self, indices: Sequence[int]) -> "Dataset":
        index = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[index], self.labels[index], self.codec, self.origin[index])

    def concat(self, other: "Dataset") -> "Dataset":
        if other.feature_dim != self.feature_dim:
            raise DataValidationError("cannot concatenate datasets with different feature widths")
        return Dataset(
            np.vstack([self.features, other.features]),
            np.concatenate([self.labels, other.labels]),
            self.codec,
            np.concatenate([self.origin, other.origin]),
        )


def clean(table: RawTable) -> RawTable:
    """Delete every row holding any missing cell, preserving survivor order."""
    mask = table.frame.notna().all(axis=1)
    removed = int((~mask).sum())
    if removed:
        logger.info("Cleaning removed %d of %d rows with missing cells", removed, len(table))
    if not mask.any():
        raise EmptyDatasetError("No rows survive cleaning: every row has a missing cell")
    return RawTable(table.schema, table.frame[mask].reset_index(drop=True))


def _ensure_clean(table: RawTable) -> None:
    if table.frame.isna().any().any():
        raise DataValidationError("Table has missing cells; run clean() first")


def _is_constant(std: float, mean: float) -> bool:
    return std <= CONSTANT_TOLERANCE * max(1.0, abs(mean))


def _one_hot(values: Iterable[str], vocabulary: Sequence[str], column: str) -> np.ndarray:
    lookup = {value: i for i, value in enumerate(vocabulary)}
    values = list(values)
    encoded = np.zeros((len(values), len(vocabulary)))
    for row, value in enumerate(values):
        if value not in lookup:
            raise UnknownCategoryError(column, value)
        encoded[row, lookup[value]] = 1.0
    return encoded


def fit_codec(table: RawTable) -> Codec:
    """Fit population z-score statistics (and one-hot vocabularies) on a cleaned table."""
    _ensure_clean(table)
    if len(table) == 0:
        raise EmptyDatasetError("Cannot fit a codec on an empty table")

    features: List[FeatureStats] = []
    dropped: List[DroppedColumn] = []
    for column in table.schema.feature_columns:
        series = table.frame[column]
        if table.schema.kinds[column] == "numeric":
            values = series.to_numpy(dtype=np.float64)
            mean, std = float(values.mean()), float(values.std())
            if _is_constant(std, mean):
                dropped.append(DroppedColumn(column, "zero variance", float(values[0])))
                logger.warning("Dropping constant numeric column '%s' (value %s)", column, values[0])
                continue
            features.append(NumericStats(column, mean, std))
        else:
            vocabulary = tuple(str(value) for value in pd.unique(series))
            if len(vocabulary) < 2:
                dropped.append(DroppedColumn(column, "single category", vocabulary[0]))
                logger.warning("Dropping single-category column '%s' (%s)", column, vocabulary[0])
                continue
            encoded = _one_hot(series, vocabulary, column)
            features.append(
                CategoricalStats(
                    column,
                    vocabulary,
                    tuple(float(v) for v in encoded.mean(axis=0)),
                    tuple(float(v) for v in encoded.std(axis=0)),
                )
            )

    if not features:
        raise DataValidationError("Every feature column was dropped; nothing left to encode")

    labels = table.frame[table.label].to_numpy(dtype=np.float64)
    label_mean, label_std = float(labels.mean()), float(labels.std())
    if _is_constant(label_std, label_mean):
        raise DataValidationError(f"Label column '{table.label}' is constant and cannot be standardized")

    return Codec(tuple(features), table.label, label_mean, label_std, tuple(dropped))


def encode_features(frame: pd.DataFrame, codec: Codec) -> np.ndarray:
    missing = set(codec.columns) - set(frame.columns)
    if missing:
        raise DataValidationError(f"Table is missing codec columns: {', '.join(sorted(missing))}")

    blocks: List[np.ndarray] = []
    for stats in codec.features:
        series = frame[stats.column]
        if series.isna().any():
            raise DataValidationError(f"Column '{stats.column}' has missing cells; run clean() first")
        if isinstance(stats, NumericStats):
            values = series.to_numpy(dtype=np.float64)
            blocks.append(((values - stats.mean) / stats.std).reshape(-1, 1))
        else:
            encoded = _one_hot((str(v) for v in series), stats.vocabulary, stats.column)
            blocks.append((encoded - np.array(stats.means)) / np.array(stats.stds))
    return np.hstack(blocks) if blocks else np.zeros((len(frame), 0))


def encode(table: RawTable, codec: Codec) -> Dataset:
    features = encode_features(table.frame, codec)
    labels = table.frame[codec.label].to_numpy(dtype=np.float64)
    if np.isnan(labels).any():
        raise DataValidationError(f"Label column '{codec.label}' has missing cells; run clean() first")
    return Dataset(features, (labels - codec.label_mean) / codec.label_std, codec)


def decode_label(z: Union[float, np.ndarray], codec: Codec) -> Union[float, np.ndarray]:
    return z * codec.label_std + codec.label_mean


def decode_features(features: np.ndarray, codec: Codec) -> pd.DataFrame:
    """Invert the codec: numeric columns exactly, categorical blocks by argmax."""
    features = np.asarray(features, dtype=np.float64).reshape(-1, codec.feature_dim)
    columns = {}
    offset = 0
    for stats in codec.features:
        if isinstance(stats, NumericStats):
            columns[stats.column] = features[:, offset] * stats.std + stats.mean
            offset += 1
        else:
            width = len(stats.vocabulary)
            raw = features[:, offset : offset + width] * np.array(stats.stds) + np.array(stats.means)
            columns[stats.column] = [stats.vocabulary[i] for i in raw.argmax(axis=1)]
            offset += width
    for item in codec.dropped:
        columns[item.column] = [item.constant] * len(features)
    return pd.DataFrame(columns)


def snap_onehot(features: np.ndarray, codec: Codec) -> np.ndarray:
    """Round each categorical block to the standardized one-hot of its argmax."""
    snapped = np.array(features, dtype=np.float64, copy=True)
    for stats, block in codec.categorical_blocks():
        means, stds = np.array(stats.means), np.array(stats.stds)
        raw = snapped[:, block] * stds + means
        one_hot = np.zeros_like(raw)
        one_hot[np.arange(len(raw)), raw.argmax(axis=1)] = 1.0
        snapped[:, block] = (one_hot - means) / stds
    return snapped


def split_indices(n: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    if n < 3:
        raise DatasetTooSmallError(f"Need at least 3 rows to split, got {n}")
    permutation = np.random.default_rng(seed).permutation(n)
    n_train = max(1, (TRAIN_PERCENT * n) // 100)
    return permutation[:n_train], permutation[n_train:]


def split(ds: Dataset, seed: int) -> Tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(len(ds), seed)
    return ds.take(train_idx), ds.take(test_idx)


def split_table(table: RawTable, seed: int) -> Tuple[RawTable, RawTable]:
    """Same partition as :func:`split`, applied to raw rows so the codec can be fitted on train only."""
    train_idx, test_idx = split_indices(len(table), seed)
    return table.take(train_idx), table.take(test_idx)


def prepare(table: RawTable, seed: int) -> Tuple[Dataset, Dataset]:
    """Clean, split, fit the codec on the training rows, and encode both parts."""
    cleaned = clean(table)
    train_table, test_table = split_table(cleaned, seed)
    codec = fit_codec(train_table)
    logger.info("Split %d rows into %d train / %d test", len(cleaned), len(train_table), len(test_table))
    return encode(train_table, codec), encode(test_table, codec)

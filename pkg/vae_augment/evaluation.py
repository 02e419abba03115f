"""Regression metrics, the per-run metrics table and the 2-D PCA projection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

METHODS = ("pure", "vae", "noise")
METHOD_ORDER = {method: rank for rank, method in enumerate(METHODS)}
NOISE_BAND = 0.5
RANK_TOLERANCE = 1e-12


class MetricError(ValueError):
    """Raised when metric inputs are empty or have mismatched lengths."""


def _paired(a: Sequence[float], b: Sequence[float], minimum: int, name: str) -> Tuple[np.ndarray, np.ndarray]:
    av = np.asarray(a, dtype=np.float64).reshape(-1)
    bv = np.asarray(b, dtype=np.float64).reshape(-1)
    if av.size != bv.size:
        raise MetricError(f"{name} needs equal lengths, got {av.size} and {bv.size}")
    if av.size < minimum:
        raise MetricError(f"{name} needs at least {minimum} values, got {av.size}")
    return av, bv


def mae(pred: Sequence[float], truth: Sequence[float]) -> float:
    p, t = _paired(pred, truth, 1, "mae")
    return math.fsum(np.abs(p - t)) / p.size


def pearson_r(a: Sequence[float], b: Sequence[float]) -> Optional[float]:
    """Sample correlation; ``None`` when either vector is constant."""
    av, bv = _paired(a, b, 2, "pearson_r")
    if np.ptp(av) == 0.0 or np.ptp(bv) == 0.0:
        return None
    da = av - math.fsum(av) / av.size
    db = bv - math.fsum(bv) / bv.size
    covariance = math.fsum(da * db)
    scale = math.sqrt(math.fsum(da * da) * math.fsum(db * db))
    if scale == 0.0:
        return None
    return min(1.0, max(-1.0, covariance / scale))


def improvement_pct(mae_aug: float, mae_pure: float) -> Optional[float]:
    """Percent MAE reduction against the unaugmented baseline; negative means worse."""
    if mae_pure == 0.0:
        return None
    return 100.0 * (mae_pure - mae_aug) / mae_pure


def _mean(values: Iterable[float]) -> Optional[float]:
    values = list(values)
    return math.fsum(values) / len(values) if values else None


@dataclass(frozen=True)
class RunResult:
    method: str
    scale: int
    repeat: int
    seed: int
    mae: Optional[float] = None
    pearson_r: Optional[float] = None
    error: Optional[str] = None

    def __post_init__(self) -> None:
        if self.method not in METHOD_ORDER:
            raise MetricError(f"unknown method '{self.method}'")
        if (self.method == "pure") != (self.scale == 0):
            raise MetricError(f"method '{self.method}' cannot have scale {self.scale}")
        if self.error is None and self.mae is None:
            raise MetricError("a successful run needs an MAE")
        if self.mae is not None and self.mae < 0:
            raise MetricError(f"MAE cannot be negative, got {self.mae}")
        if self.pearson_r is not None and not -1.0 <= self.pearson_r <= 1.0:
            raise MetricError(f"Pearson r out of range: {self.pearson_r}")

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def sort_key(self) -> Tuple[int, int, int]:
        return METHOD_ORDER[self.method], self.scale, self.repeat

    @classmethod
    def failure(cls, method: str, scale: int, repeat: int, seed: int, error: BaseException) -> "RunResult":
        return cls(method, scale, repeat, seed, error=f"{type(error).__name__}: {error}")


@dataclass(frozen=True)
class AggregateRow:
    method: str
    scale: int
    runs: int
    failed: int
    mae_mean: Optional[float]
    mae_min: Optional[float]
    mae_max: Optional[float]
    pearson_mean: Optional[float]
    improvement_pct: Optional[float]


class MetricsTable:
    """Every (method, scale, repeat) run in canonical order: pure, vae, noise; then scale; then repeat."""

    def __init__(self, results: Iterable[RunResult]) -> None:
        self.results: Tuple[RunResult, ...] = tuple(sorted(results, key=lambda r: r.sort_key))
        keys = [r.sort_key for r in self.results]
        if len(set(keys)) != len(keys):
            raise MetricError("duplicate (method, scale, repeat) entries in metrics table")

    def __len__(self) -> int:
        return len(self.results)

    @staticmethod
    def expected_rows(methods: int, scales: int, repeats: int) -> int:
        return methods * scales * repeats + repeats

    @property
    def failures(self) -> List[RunResult]:
        return [r for r in self.results if r.failed]

    def runs(self, method: str, scale: Optional[int] = None) -> List[RunResult]:
        return [r for r in self.results if r.method == method and (scale is None or r.scale == scale)]

    def scales(self, method: str) -> List[int]:
        return sorted({r.scale for r in self.runs(method)})

    def mean_mae(self, method: str, scale: int) -> Optional[float]:
        return _mean(r.mae for r in self.runs(method, scale) if r.mae is not None)

    def pure_mae(self) -> Optional[float]:
        return self.mean_mae("pure", 0)

    def aggregate(self) -> List[AggregateRow]:
        pure_mean = self.pure_mae()
        rows: List[AggregateRow] = []
        groups: Dict[Tuple[str, int], List[RunResult]] = {}
        for result in self.results:
            groups.setdefault((result.method, result.scale), []).append(result)
        for (method, scale), runs in groups.items():
            maes = [r.mae for r in runs if r.mae is not None]
            mean = _mean(maes)
            improvement = None
            if method != "pure" and mean is not None and pure_mean is not None:
                improvement = improvement_pct(mean, pure_mean)
            rows.append(
                AggregateRow(
                    method=method,
                    scale=scale,
                    runs=len(runs),
                    failed=sum(1 for r in runs if r.failed),
                    mae_mean=mean,
                    mae_min=min(maes) if maes else None,
                    mae_max=max(maes) if maes else None,
                    pearson_mean=_mean(r.pearson_r for r in runs if r.pearson_r is not None),
                    improvement_pct=improvement,
                )
            )
        return rows


def directional_check(table: MetricsTable, scale: Optional[int] = None) -> Optional[bool]:
    """Mean MAE of VAE augmentation is no worse than Gaussian noise at ``scale`` (default: largest shared scale)."""
    shared = sorted(set(table.scales("vae")) & set(table.scales("noise")))
    if not shared:
        return None
    scale = shared[-1] if scale is None else scale
    vae_mae, noise_mae = table.mean_mae("vae", scale), table.mean_mae("noise", scale)
    if vae_mae is None or noise_mae is None:
        return None
    return vae_mae <= noise_mae


def noise_band_check(table: MetricsTable, band: float = NOISE_BAND) -> Dict[int, bool]:
    """Per scale: |MAE(noise, k) - MAE(pure)| <= band * MAE(pure)."""
    pure = table.pure_mae()
    if pure is None:
        return {}
    verdicts: Dict[int, bool] = {}
    for scale in table.scales("noise"):
        noise = table.mean_mae("noise", scale)
        if noise is not None:
            verdicts[scale] = abs(noise - pure) <= band * pure
    return verdicts


@dataclass(frozen=True)
class PcaProjection:
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    coordinates: np.ndarray

    @property
    def explained_variance_ratio(self) -> Tuple[float, float]:
        total = float(self.eigenvalues.sum())
        return float(self.eigenvalues[0] / total), float(self.eigenvalues[1] / total)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=np.float64) - self.mean) @ self.components

    def reconstruction_error(self, rows: np.ndarray) -> float:
        """Mean squared residual of the rank-2 reconstruction."""
        rows = np.asarray(rows, dtype=np.float64)
        rebuilt = self.transform(rows) @ self.components.T + self.mean
        return float(np.mean(np.sum((rows - rebuilt) ** 2, axis=1)))


def pca_project2d(rows: np.ndarray) -> Optional[PcaProjection]:
    """Project onto the top two principal axes; ``None`` for rank-0 (all rows identical) data.

    Each axis is flipped so its largest-magnitude loading is positive.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2 or rows.shape[1] < 2:
        raise MetricError(f"PCA projection needs at least 2 rows and 2 columns, got shape {rows.shape}")
    mean = rows.mean(axis=0)
    centered = rows - mean
    covariance = centered.T @ centered / rows.shape[0]
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues, eigenvectors = eigenvalues[order], eigenvectors[:, order]
    if eigenvalues[0] <= RANK_TOLERANCE * max(1.0, float(np.abs(rows).max())):
        logger.warning("PCA projection skipped: data have rank 0")
        return None

    components = eigenvectors[:, :2].copy()
    for axis in range(2):
        pivot = int(np.argmax(np.abs(components[:, axis])))
        if components[pivot, axis] < 0:
            components[:, axis] *= -1.0
    return PcaProjection(mean, components, eigenvalues, centered @ components)

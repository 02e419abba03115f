from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

try:
    # When imported as part of the package
    from .evaluation import AggregateRow, MetricsTable, PcaProjection
    from .load_data import export_to_json
    from .preprocess import Dataset, decode_features, decode_label
except ImportError:
    # When running as standalone scripts
    from evaluation import AggregateRow, MetricsTable, PcaProjection
    from load_data import export_to_json
    from preprocess import Dataset, decode_features, decode_label

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ["method", "scale", "repeat", "seed", "mae", "pearson_r"]
AGGREGATE_COLUMNS = ["method", "scale", "mae_mean", "mae_min", "mae_max", "pearson_mean", "improvement_pct"]
FAILURE_COLUMNS = ["method", "scale", "repeat", "seed", "error"]
PREDICTION_COLUMNS = ["method", "scale", "repeat", "truth", "prediction"]
PROJECTION_COLUMNS = ["x", "y", "origin"]
GROUP_COLUMNS = ["group", "rows", "mae_pure", "mae_vae_max_scale", "mae_noise_max_scale", "failed_runs", "error"]

SVG_SIZE = 480
SVG_MARGIN = 24
ORIGIN_COLOURS = {"real": "#1f77b4", "vae": "#d62728", "noise": "#7f7f7f"}


@dataclass(frozen=True)
class PredictionRow:
    method: str
    scale: int
    repeat: int
    truth: float
    prediction: float


def _blank(value: Optional[float]) -> object:
    return "" if value is None else value


def _write_frame(rows: List[Dict[str, object]], columns: Sequence[str], out_path: Path) -> None:
    df = pd.DataFrame(rows, columns=list(columns))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(out_path, index=False, lineterminator="\n")
    logger.info("Wrote %s", out_path)


def write_metrics(table: MetricsTable, out_path: Path) -> None:
    rows = [
        {
            "method": r.method,
            "scale": r.scale,
            "repeat": r.repeat,
            "seed": r.seed,
            "mae": _blank(r.mae),
            "pearson_r": _blank(r.pearson_r),
        }
        for r in table.results
    ]
    _write_frame(rows, METRICS_COLUMNS, out_path)


def write_aggregate(rows: Iterable[AggregateRow], out_path: Path) -> None:
    payload = [
        {
            "method": row.method,
            "scale": row.scale,
            "mae_mean": _blank(row.mae_mean),
            "mae_min": _blank(row.mae_min),
            "mae_max": _blank(row.mae_max),
            "pearson_mean": _blank(row.pearson_mean),
            "improvement_pct": _blank(row.improvement_pct),
        }
        for row in rows
    ]
    _write_frame(payload, AGGREGATE_COLUMNS, out_path)


def write_failures(table: MetricsTable, out_path: Path) -> None:
    rows = [
        {"method": r.method, "scale": r.scale, "repeat": r.repeat, "seed": r.seed, "error": r.error}
        for r in table.failures
    ]
    _write_frame(rows, FAILURE_COLUMNS, out_path)


def write_predictions(predictions: Iterable[PredictionRow], out_path: Path) -> None:
    rows = [
        {"method": p.method, "scale": p.scale, "repeat": p.repeat, "truth": p.truth, "prediction": p.prediction}
        for p in predictions
    ]
    _write_frame(rows, PREDICTION_COLUMNS, out_path)


def write_projection(projection: PcaProjection, origins: Sequence[str], out_path: Path) -> None:
    rows = [
        {"x": float(x), "y": float(y), "origin": origin}
        for (x, y), origin in zip(projection.coordinates, origins)
    ]
    _write_frame(rows, PROJECTION_COLUMNS, out_path)


def projection_svg(projection: PcaProjection, origins: Sequence[str]) -> str:
    """Minimal scatter of the 2-D coordinates, one colour per origin."""
    coords = projection.coordinates
    low, high = coords.min(axis=0), coords.max(axis=0)
    span = np.where(high - low > 0, high - low, 1.0)
    usable = SVG_SIZE - 2 * SVG_MARGIN
    # svg y grows downwards
    px = SVG_MARGIN + (coords[:, 0] - low[0]) / span[0] * usable
    py = SVG_SIZE - SVG_MARGIN - (coords[:, 1] - low[1]) / span[1] * usable

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" '
        f'viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">',
        f'<rect width="{SVG_SIZE}" height="{SVG_SIZE}" fill="white"/>',
    ]
    for x, y, origin in zip(px, py, origins):
        colour = ORIGIN_COLOURS.get(origin, "#000000")
        lines.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{colour}" fill-opacity="0.6"><title>{origin}</title></circle>')
    for row, (origin, colour) in enumerate(sorted(set((o, ORIGIN_COLOURS.get(o, "#000000")) for o in origins))):
        y = SVG_MARGIN + 14 * row
        lines.append(f'<text x="{SVG_MARGIN}" y="{y}" font-size="12" fill="{colour}">{origin}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_projection_svg(projection: PcaProjection, origins: Sequence[str], out_path: Path) -> None:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(projection_svg(projection, origins), encoding="utf-8")
    logger.info("Wrote %s", out_path)


def write_pool(pool: Dataset, out_path: Path, raw_units: bool = False) -> None:
    """Pool rows with an ``origin`` column; standardized space unless ``raw_units``."""
    codec = pool.codec
    if raw_units:
        df = decode_features(pool.features, codec)
        df[codec.label] = decode_label(pool.labels, codec)
    else:
        df = pd.DataFrame(pool.features, columns=codec.feature_names)
        df[codec.label] = pool.labels
    df["origin"] = list(pool.origin)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(out_path, index=False, lineterminator="\n")
    logger.info("Wrote %d pool rows to %s", len(df), out_path)


def write_model(payload: Dict[str, object], out_path: Path) -> None:
    export_to_json(payload, out_path)
    logger.info("Wrote %s", out_path)


def write_groups(rows: Iterable[Dict[str, object]], out_path: Path) -> None:
    _write_frame([{key: _blank(row.get(key)) for key in GROUP_COLUMNS} for row in rows], GROUP_COLUMNS, out_path)  # type: ignore[arg-type]


def write_text(text: str, out_path: Path) -> None:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(text, encoding="utf-8")
    logger.info("Wrote %s", out_path)


def _cell(value: Optional[float], fmt: str = "{:.4f}") -> str:
    return "-" if value is None else fmt.format(value)


def format_summary(table: MetricsTable, directional: Optional[bool], band: Dict[int, bool]) -> str:
    """Plain-text report: mean MAE per scale and method, improvement over the unaugmented baseline, checks."""
    aggregate = {(row.method, row.scale): row for row in table.aggregate()}
    methods = [m for m in ("vae", "noise") if table.runs(m)]
    scales = sorted({scale for method in methods for scale in table.scales(method)})
    pure = table.pure_mae()

    lines = ["Mean test MAE (standardized label units)", ""]
    lines.append("scale".ljust(8) + "pure".rjust(12) + "".join(m.rjust(12) for m in methods))
    for scale in scales:
        cells = [_cell(aggregate[(m, scale)].mae_mean) if (m, scale) in aggregate else "-" for m in methods]
        lines.append(str(scale).ljust(8) + _cell(pure).rjust(12) + "".join(c.rjust(12) for c in cells))

    lines += ["", "Improvement over pure data (%)", ""]
    lines.append("scale".ljust(8) + "".join(m.rjust(12) for m in methods))
    for scale in scales:
        cells = [
            _cell(aggregate[(m, scale)].improvement_pct, "{:.1f}") if (m, scale) in aggregate else "-" for m in methods
        ]
        lines.append(str(scale).ljust(8) + "".join(c.rjust(12) for c in cells))

    lines += ["", "Mean Pearson r", ""]
    for (method, scale), row in aggregate.items():
        lines.append(f"{method:<8}{scale:<8}{_cell(row.pearson_mean)}")

    lines += ["", "Checks", ""]
    lines.append(f"vae <= noise at largest scale: {'n/a' if directional is None else directional}")
    if band:
        inside = sum(band.values())
        lines.append(f"noise within band of pure: {inside}/{len(band)} scales")
    lines.append(f"runs: {len(table)}, failed: {len(table.failures)}")
    return "\n".join(lines) + "\n"

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Tuple

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

ColumnKind = Literal["numeric", "categorical", "label"]
COLUMN_KINDS = ("numeric", "categorical", "label")

REQUIRED_SCHEMA_KEYS = {"columns", "label"}
REQUIRED_COLUMN_KEYS = {"name", "kind"}


class DataValidationError(Exception):
    """Raised when source data fail validation checks."""


class SchemaError(DataValidationError):
    """Raised when the sidecar schema is malformed or disagrees with the CSV."""


@dataclass(frozen=True)
class Schema:
    columns: Tuple[str, ...]
    kinds: Dict[str, ColumnKind]
    label: str

    @property
    def feature_columns(self) -> Tuple[str, ...]:
        return tuple(name for name in self.columns if self.kinds[name] != "label")

    def without(self, column: str) -> "Schema":
        if column == self.label:
            raise SchemaError("the label column cannot be removed")
        return Schema(
            columns=tuple(name for name in self.columns if name != column),
            kinds={name: kind for name, kind in self.kinds.items() if name != column},
            label=self.label,
        )

    def to_payload(self) -> Dict[str, object]:
        return {
            "columns": [{"name": name, "kind": self.kinds[name]} for name in self.columns],
            "label": self.label,
        }


@dataclass(frozen=True)
class RawTable:
    """Raw experimental records: numeric cells are floats (NaN when missing), categorical cells strings (None when missing)."""

    schema: Schema
    frame: pd.DataFrame

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def label(self) -> str:
        return self.schema.label

    def take(self, positions: Iterable[int]) -> "RawTable":
        return RawTable(self.schema, self.frame.iloc[list(positions)].reset_index(drop=True))

    def drop_column(self, column: str) -> "RawTable":
        return RawTable(self.schema.without(column), self.frame.drop(columns=[column]))


def _ensure_keys(payload: Dict[str, object], required: Iterable[str], where: str) -> None:
    missing = set(required) - set(payload)
    if missing:
        raise SchemaError(f"{where} is missing required keys: {', '.join(sorted(missing))}")


def parse_schema(payload: Dict[str, object], source: str = "schema") -> Schema:
    _ensure_keys(payload, REQUIRED_SCHEMA_KEYS, source)
    raw_columns = payload["columns"]
    if not isinstance(raw_columns, list) or not raw_columns:
        raise SchemaError(f"{source}: 'columns' must be a non-empty list")

    columns: List[str] = []
    kinds: Dict[str, ColumnKind] = {}
    for entry in raw_columns:
        if not isinstance(entry, dict):
            raise SchemaError(f"{source}: every column entry must be an object")
        _ensure_keys(entry, REQUIRED_COLUMN_KEYS, f"{source} column entry")
        name = str(entry["name"]).strip()
        kind = str(entry["kind"]).strip().lower()
        if not name:
            raise SchemaError(f"{source}: column name cannot be empty")
        if name in kinds:
            raise SchemaError(f"{source}: column '{name}' declared twice")
        if kind not in COLUMN_KINDS:
            raise SchemaError(f"{source}: column '{name}' has unknown kind '{kind}'")
        columns.append(name)
        kinds[name] = kind  # type: ignore[assignment]

    label = str(payload["label"]).strip()
    if label not in kinds:
        raise SchemaError(f"{source}: label column '{label}' is not declared")
    if kinds[label] == "categorical":
        raise SchemaError(f"{source}: label column '{label}' must be numeric")
    kinds[label] = "label"
    label_columns = [name for name, kind in kinds.items() if kind == "label"]
    if len(label_columns) != 1:
        raise SchemaError(f"{source}: exactly one label column expected, found {label_columns}")
    if not any(kind != "label" for kind in kinds.values()):
        raise SchemaError(f"{source}: at least one feature column is required")
    return Schema(columns=tuple(columns), kinds=kinds, label=label)


def load_schema(path: Path) -> Schema:
    if not path.exists():
        raise FileNotFoundError(f"Schema file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path.name} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise SchemaError(f"{path.name} must contain a JSON object")
    return parse_schema(payload, path.name)


def _parse_numeric(series: pd.Series, column: str) -> pd.Series:
    stripped = series.str.strip()
    converted = pd.to_numeric(stripped.where(stripped != ""), errors="coerce")
    bad = converted.isna() & (stripped != "")
    if bad.any():
        value = stripped[bad].iloc[0]
        raise DataValidationError(f"Field '{column}' with value '{value}' must be numeric.")
    infinite = converted.abs() == float("inf")
    if infinite.any():
        raise DataValidationError(f"Field '{column}' contains a non-finite value.")
    return converted.astype(float)


def _parse_categorical(series: pd.Series) -> pd.Series:
    stripped = series.str.strip()
    return stripped.astype(object).where(stripped != "", None)


def table_from_frame(frame: pd.DataFrame, schema: Schema, source: str = "table") -> RawTable:
    """Validate a string-typed frame against ``schema`` and convert its cells."""
    missing = set(schema.columns) - set(frame.columns)
    if missing:
        raise SchemaError(f"{source} is missing required columns: {', '.join(sorted(missing))}")

    converted: Dict[str, pd.Series] = {}
    for name in schema.columns:
        column = frame[name].fillna("").astype(str)
        if schema.kinds[name] == "categorical":
            converted[name] = _parse_categorical(column)
        else:
            converted[name] = _parse_numeric(column, name)
    return RawTable(schema, pd.DataFrame(converted, columns=list(schema.columns)).reset_index(drop=True))


def load_table(csv_path: Path, schema_path: Path) -> RawTable:
    schema = load_schema(schema_path)
    if not csv_path.exists():
        raise FileNotFoundError(f"Data file not found: {csv_path}")
    try:
        frame = pd.read_csv(
            csv_path,
            dtype=str,
            keep_default_na=False,
            encoding="utf-8",
        )
    except pd.errors.ParserError as exc:
        raise DataValidationError(f"{csv_path.name} has inconsistent row lengths: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataValidationError(f"{csv_path.name} is empty") from exc

    # with keep_default_na off, blank cells read as "" and only absent fields come back as NaN
    short = np.flatnonzero(frame.isna().any(axis=1).to_numpy())
    if len(short):
        raise DataValidationError(
            f"{csv_path.name} has inconsistent row lengths: data row {int(short[0]) + 1} has fewer fields than the header"
        )

    table = table_from_frame(frame, schema, csv_path.name)
    logger.info("Loaded %d rows x %d columns from %s", len(table), len(schema.columns), csv_path)
    return table


def export_to_json(data: Dict[str, object], out_path: Path) -> None:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")


def read_json(path: Path) -> Dict[str, object]:
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise DataValidationError(f"{path.name} must contain a JSON object")
    return payload


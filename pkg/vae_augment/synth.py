"""Synthetic device-record generator: smooth label over numeric and categorical process parameters."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Literal, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

try:
    # When imported as part of the package
    from .load_data import export_to_json
    from .seeds import make_rng
except ImportError:
    # When running as standalone scripts
    from load_data import export_to_json
    from seeds import make_rng

logger = logging.getLogger(__name__)

LabelFunction = Literal["linear", "quadratic", "interaction"]

LABEL_COLUMN = "label"
GROUP_COLUMN = "substrate"
DATA_FILE = "data.csv"
SCHEMA_FILE = "schema.json"


class CategoricalSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(min_length=1)
    arity: int = Field(ge=2)

    @classmethod
    def parse(cls, text: str) -> "CategoricalSpec":
        """Parse the ``name:arity`` command-line form."""
        name, sep, arity = text.partition(":")
        if not sep or not arity.strip().isdigit():
            raise ValueError(f"categorical feature must look like name:arity, got '{text}'")
        return cls(name=name.strip(), arity=int(arity))


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    rows: int = Field(default=120, ge=10)
    numeric: int = Field(default=4, ge=0)
    categorical: Tuple[CategoricalSpec, ...] = (
        CategoricalSpec(name="gas", arity=3),
        CategoricalSpec(name="metal", arity=4),
    )
    label: LabelFunction = "linear"
    noise: float = Field(default=0.1, ge=0)
    seed: int = 0
    groups: int = Field(default=1, ge=1)
    missing_fraction: float = Field(default=0.0, ge=0, lt=1)

    @model_validator(mode="after")
    def _check_columns(self) -> "SyntheticSpec":
        if self.numeric == 0 and not self.categorical:
            raise ValueError("a synthetic table needs at least one feature")
        names = self.feature_columns + [LABEL_COLUMN]
        if self.groups > 1:
            names.append(GROUP_COLUMN)
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ValueError(f"column names collide: {', '.join(duplicates)}")
        return self

    @property
    def numeric_columns(self) -> List[str]:
        return [f"x{i + 1}" for i in range(self.numeric)]

    @property
    def feature_columns(self) -> List[str]:
        return self.numeric_columns + [spec.name for spec in self.categorical]

    def schema_payload(self) -> Dict[str, object]:
        columns: List[Dict[str, str]] = []
        if self.groups > 1:
            columns.append({"name": GROUP_COLUMN, "kind": "categorical"})
        columns += [{"name": name, "kind": "numeric"} for name in self.numeric_columns]
        columns += [{"name": spec.name, "kind": "categorical"} for spec in self.categorical]
        columns.append({"name": LABEL_COLUMN, "kind": "label"})
        return {"columns": columns, "label": LABEL_COLUMN}


def _levels(spec: CategoricalSpec) -> List[str]:
    return [f"{spec.name}{i}" for i in range(spec.arity)]


def _group_label(spec: SyntheticSpec, numeric: np.ndarray, codes: List[np.ndarray], group: int) -> np.ndarray:
    rng = make_rng(spec.seed, "coefficients", group)
    slopes = rng.uniform(-2.0, 2.0, spec.numeric)
    effects = [rng.uniform(-1.0, 1.0, cat.arity) for cat in spec.categorical]

    label = numeric @ slopes
    for effect, code in zip(effects, codes):
        label = label + effect[code]
    if spec.label == "quadratic":
        label = label + numeric**2 @ rng.uniform(-1.0, 1.0, spec.numeric)
    elif spec.label == "interaction":
        if spec.numeric >= 2:
            pairs = numeric[:, :-1] * numeric[:, 1:]
            label = label + pairs @ rng.uniform(-1.5, 1.5, spec.numeric - 1)
        if spec.numeric >= 1 and codes:
            # first categorical feature modulates the first numeric slope
            label = label + numeric[:, 0] * rng.uniform(-1.0, 1.0, spec.categorical[0].arity)[codes[0]]
    return label


def _format(values: np.ndarray) -> List[str]:
    return [f"{value:.8g}" for value in values]


def generate_table(spec: SyntheticSpec) -> pd.DataFrame:
    """String-typed table, byte-stable for a given spec."""
    rng = make_rng(spec.seed, "features")
    numeric = rng.standard_normal((spec.rows, spec.numeric))
    codes = [rng.integers(0, cat.arity, spec.rows) for cat in spec.categorical]
    group = rng.integers(0, spec.groups, spec.rows) if spec.groups > 1 else np.zeros(spec.rows, dtype=np.int64)

    label = np.zeros(spec.rows)
    for g in range(spec.groups):
        mask = group == g
        label[mask] = _group_label(spec, numeric[mask], [code[mask] for code in codes], g)
    label = label + spec.noise * make_rng(spec.seed, "label-noise").standard_normal(spec.rows)

    columns: Dict[str, List[str]] = {}
    if spec.groups > 1:
        columns[GROUP_COLUMN] = [f"{GROUP_COLUMN}{g}" for g in group]
    for i, name in enumerate(spec.numeric_columns):
        columns[name] = _format(numeric[:, i])
    for cat, code in zip(spec.categorical, codes):
        levels = _levels(cat)
        columns[cat.name] = [levels[c] for c in code]
    columns[LABEL_COLUMN] = _format(label)
    frame = pd.DataFrame(columns)

    if spec.missing_fraction > 0:
        blank = make_rng(spec.seed, "missing").random(frame.shape) < spec.missing_fraction
        frame = frame.mask(blank, "")
        logger.info("Blanked %d of %d synthetic cells", int(blank.sum()), blank.size)
    return frame


def write_synthetic(spec: SyntheticSpec, out_dir: Path) -> Tuple[Path, Path]:
    data_path, schema_path = out_dir / DATA_FILE, out_dir / SCHEMA_FILE
    out_dir.mkdir(parents=True, exist_ok=True)
    generate_table(spec).to_csv(data_path, index=False, lineterminator="\n")
    export_to_json(spec.schema_payload(), schema_path)
    logger.info("Wrote %d synthetic rows to %s", spec.rows, data_path)
    return data_path, schema_path

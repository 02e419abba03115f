from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd
import pytest

from vae_augment.config import RunConfig
from vae_augment.load_data import RawTable, parse_schema, table_from_frame
from vae_augment.regressor import DnnConfig
from vae_augment.synth import CategoricalSpec, SyntheticSpec, generate_table
from vae_augment.vae import VaeConfig


def _cells(values: Sequence[object]) -> List[str]:
    return ["" if value is None else str(value) for value in values]


@pytest.fixture
def table_factory() -> Callable[..., RawTable]:
    """Build a RawTable from python columns; ``None`` marks a missing cell."""

    def build(columns: Dict[str, Sequence[object]], kinds: Dict[str, str], label: str) -> RawTable:
        schema = parse_schema(
            {"columns": [{"name": name, "kind": kinds[name]} for name in columns], "label": label}
        )
        frame = pd.DataFrame({name: _cells(values) for name, values in columns.items()})
        return table_from_frame(frame, schema)

    return build


@pytest.fixture
def synthetic_table() -> Callable[..., RawTable]:
    def build(
        rows: int = 30,
        numeric: int = 3,
        categorical: Optional[Sequence[CategoricalSpec]] = None,
        **fields: object,
    ) -> RawTable:
        spec = SyntheticSpec(
            rows=rows,
            numeric=numeric,
            categorical=tuple(categorical) if categorical is not None else (CategoricalSpec(name="gas", arity=2),),
            **fields,
        )
        return table_from_frame(generate_table(spec), parse_schema(spec.schema_payload()))

    return build


@pytest.fixture
def fast_config(tmp_path) -> RunConfig:  # type: ignore[no-untyped-def]
    """Tiny networks and few epochs so whole protocol runs take seconds."""
    return RunConfig(
        output_dir=tmp_path / "out",
        seed=7,
        scales=(1, 2),
        repeats=2,
        vae=VaeConfig(hidden=6, epochs=15),
        dnn=DnnConfig(hidden1=6, hidden2=6, epochs=20, learning_rate=1e-2),
    )

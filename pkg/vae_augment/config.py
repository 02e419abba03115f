from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

try:
    # When imported as part of the package
    from .augment import DEFAULT_NEIGHBORS, NoiseLabels
    from .regressor import DnnConfig
    from .vae import VaeConfig
except ImportError:
    # When running as standalone scripts
    from augment import DEFAULT_NEIGHBORS, NoiseLabels
    from regressor import DnnConfig
    from vae import VaeConfig

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "VAE_AUGMENT_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "outputs"
DEFAULT_SCALES = tuple(range(1, 11))

AugmentMethod = Literal["vae", "noise"]


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR))


class RunConfig(BaseModel):
    """Everything one experiment, augment or project run depends on."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    data_file: Optional[Path] = None
    schema_file: Optional[Path] = None
    output_dir: Path = Field(default_factory=default_output_dir)
    seed: int = 0
    scales: Tuple[int, ...] = DEFAULT_SCALES
    repeats: int = Field(default=5, ge=1)
    neighbors: int = Field(default=DEFAULT_NEIGHBORS, ge=1)
    methods: Tuple[AugmentMethod, ...] = ("vae", "noise")
    jobs: int = Field(default=1, ge=1)
    scale: int = Field(default=1, ge=1)
    vae: VaeConfig = Field(default_factory=VaeConfig)
    dnn: DnnConfig = Field(default_factory=DnnConfig)
    noise_labels: NoiseLabels = "gaussian"
    snap_onehot: bool = False
    resplit_per_repeat: bool = False
    group_column: Optional[str] = None
    save_models: bool = False
    raw_units: bool = False

    @field_validator("scales")
    @classmethod
    def _check_scales(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if not value:
            raise ValueError("at least one augmentation scale is required")
        if any(k < 1 for k in value):
            raise ValueError(f"scales must be positive integers, got {list(value)}")
        if len(set(value)) != len(value):
            raise ValueError(f"scales must not repeat, got {list(value)}")
        return tuple(sorted(value))

    @field_validator("methods")
    @classmethod
    def _check_methods(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        if not value:
            raise ValueError("at least one augmentation method is required")
        if len(set(value)) != len(value):
            raise ValueError(f"methods must not repeat, got {list(value)}")
        return value

    @property
    def max_scale(self) -> int:
        return self.scales[-1]

    def require_inputs(self) -> Tuple[Path, Path]:
        """Paths of the data CSV and schema JSON; both must be configured and exist."""
        for name, path in (("data file", self.data_file), ("schema file", self.schema_file)):
            if path is None:
                raise FileNotFoundError(f"No {name} configured")
            if not path.exists():
                raise FileNotFoundError(f"{name.capitalize()} not found: {path}")
        return self.data_file, self.schema_file  # type: ignore[return-value]


def load_config(path: Path) -> RunConfig:
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    cfg = RunConfig.model_validate_json(path.read_text(encoding="utf-8"))
    logger.info("Loaded run config from %s", path)
    return cfg


def dump_config(cfg: RunConfig) -> str:
    return cfg.model_dump_json(indent=2)


__all__ = [
    "DEFAULT_SCALES",
    "OUTPUT_DIR_ENV",
    "RunConfig",
    "ValidationError",
    "default_output_dir",
    "dump_config",
    "load_config",
]

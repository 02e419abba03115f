from __future__ import annotations

from pathlib import Path

import pytest
from pydantic import ValidationError

from vae_augment.config import OUTPUT_DIR_ENV, RunConfig, dump_config, load_config
from vae_augment.regressor import DnnConfig
from vae_augment.vae import VaeConfig


def test_defaults_follow_the_protocol():
    cfg = RunConfig()
    assert cfg.scales == tuple(range(1, 11))
    assert (cfg.repeats, cfg.neighbors, cfg.methods) == (5, 5, ("vae", "noise"))
    assert cfg.noise_labels == "gaussian"
    assert not (cfg.snap_onehot or cfg.resplit_per_repeat or cfg.vae.deterministic_latent or cfg.dnn.activated_head)
    assert cfg.dnn.artificial_weight == 0.05


def test_output_dir_defaults_to_environment(monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, "/tmp/elsewhere")
    assert RunConfig().output_dir == Path("/tmp/elsewhere")
    monkeypatch.delenv(OUTPUT_DIR_ENV)
    assert RunConfig().output_dir == Path("outputs")


def test_config_round_trips_through_json(tmp_path):
    cfg = RunConfig(
        data_file=tmp_path / "data.csv",
        schema_file=tmp_path / "schema.json",
        output_dir=tmp_path,
        seed=123,
        scales=(3, 1),
        methods=("noise",),
        vae=VaeConfig(latent_dim=3, full_elbo=True),
        dnn=DnnConfig(hidden1=80, activated_head=True),
        noise_labels="knn",
        group_column="substrate",
    )
    assert cfg.scales == (1, 3)
    assert RunConfig.model_validate_json(cfg.model_dump_json()) == cfg

    path = tmp_path / "cfg.json"
    path.write_text(dump_config(cfg), encoding="utf-8")
    assert load_config(path) == cfg


@pytest.mark.parametrize(
    "fields",
    [
        {"scales": ()},
        {"scales": (0, 1)},
        {"scales": (2, 2)},
        {"repeats": 0},
        {"methods": ("vae", "mixup")},
        {"methods": ()},
        {"unknown": 1},
        {"vae": {"epochs": 0}},
        {"dnn": {"artificial_weight": 0}},
    ],
)
def test_invalid_configs_are_rejected(fields):
    with pytest.raises(ValidationError):
        RunConfig(**fields)


def test_missing_config_and_inputs_name_the_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="missing.json"):
        load_config(tmp_path / "missing.json")
    cfg = RunConfig(data_file=tmp_path / "data.csv", schema_file=tmp_path / "schema.json")
    with pytest.raises(FileNotFoundError, match="data.csv"):
        cfg.require_inputs()

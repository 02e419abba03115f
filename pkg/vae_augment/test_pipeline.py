from __future__ import annotations

import time

import numpy as np
import pandas as pd
import pytest

from vae_augment.config import RunConfig
from vae_augment.evaluation import MetricsTable, directional_check, noise_band_check
from vae_augment.load_data import SchemaError, parse_schema, table_from_frame
from vae_augment.outputs import write_metrics
from vae_augment.pipeline import (
    group_tables,
    repeat_seed,
    run_and_write_experiment,
    run_augment,
    run_experiment,
    run_projection,
    run_repeat,
    split_seed,
)
from vae_augment.preprocess import split_indices
from vae_augment.regressor import DnnConfig
from vae_augment.synth import SyntheticSpec, generate_table
from vae_augment.vae import VaeConfig


def test_protocol_emits_one_row_per_run(synthetic_table, fast_config):
    result = run_experiment(synthetic_table(rows=24), fast_config)
    assert len(result.metrics) == 2 * 2 * 2 + 2
    assert not result.failures
    assert [r.method for r in result.metrics.results[:2]] == ["pure", "pure"]
    assert {r.scale for r in result.metrics.runs("vae")} == {1, 2}


def test_default_protocol_has_105_runs(synthetic_table, fast_config):
    cfg = fast_config.model_copy(update={"scales": tuple(range(1, 11)), "repeats": 5})
    cfg = cfg.model_copy(update={"vae": VaeConfig(hidden=4, epochs=3), "dnn": DnnConfig(hidden1=4, hidden2=4, epochs=3)})
    result = run_experiment(synthetic_table(rows=15), cfg)
    assert len(result.metrics) == 105
    for row in result.metrics.aggregate():
        maes = [r.mae for r in result.metrics.runs(row.method, row.scale)]
        assert row.mae_mean == pytest.approx(float(np.mean(maes)), abs=1e-12)


def test_same_seed_gives_identical_metrics_files(synthetic_table, fast_config, tmp_path):
    table = synthetic_table(rows=24)
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    write_metrics(run_experiment(table, fast_config).metrics, first)
    write_metrics(run_experiment(table, fast_config).metrics, second)
    assert first.read_bytes() == second.read_bytes()


def test_parallel_repeats_match_serial_run(synthetic_table, fast_config):
    table = synthetic_table(rows=24)
    serial = run_experiment(table, fast_config).metrics.results
    parallel = run_experiment(table, fast_config.model_copy(update={"jobs": 2})).metrics.results
    assert serial == parallel


def test_test_rows_are_real_and_predictions_cover_pure_and_largest_scale(synthetic_table, fast_config):
    outcome = run_repeat(synthetic_table(rows=24), fast_config, repeat=0)
    keys = {(p.method, p.scale) for p in outcome.predictions}
    assert keys == {("pure", 0), ("vae", 2), ("noise", 2)}
    assert outcome.projection is not None
    assert set(outcome.projection_origin) == {"real", "vae"}
    assert len(outcome.projection_origin) == 16 * 3


def test_fixed_split_versus_resplit(synthetic_table, fast_config):
    table = synthetic_table(rows=24)
    fixed = [run_repeat(table, fast_config, j).predictions for j in (0, 1)]
    truths = [[p.truth for p in rows if p.method == "pure"] for rows in fixed]
    assert truths[0] == truths[1]

    resplit = fast_config.model_copy(update={"resplit_per_repeat": True})
    moved = [[p.truth for p in run_repeat(table, resplit, j).predictions if p.method == "pure"] for j in (0, 1)]
    assert moved[0] != moved[1]


def test_groups_run_separately_and_write_summary(tmp_path, fast_config):
    spec = SyntheticSpec(rows=60, groups=2, seed=1, categorical=())
    table = table_from_frame(generate_table(spec), parse_schema(spec.schema_payload()))
    cfg = fast_config.model_copy(update={"group_column": "substrate", "repeats": 1, "scales": (1,)})
    results = run_and_write_experiment(table, cfg)

    assert sorted(results) == ["substrate0", "substrate1"]
    groups = pd.read_csv(cfg.output_dir / "groups.csv")
    assert groups["group"].tolist() == list(results)
    assert groups["rows"].sum() == 60
    for name in results:
        assert (cfg.output_dir / name / "metrics.csv").exists()


def test_group_column_must_be_categorical(synthetic_table):
    with pytest.raises(SchemaError):
        group_tables(synthetic_table(rows=20), "x1")


def test_group_tables_drop_the_group_column():
    spec = SyntheticSpec(rows=30, groups=2)
    table = table_from_frame(generate_table(spec), parse_schema(spec.schema_payload()))
    for _, part in group_tables(table, "substrate"):
        assert "substrate" not in part.frame.columns
        assert "substrate" not in part.schema.columns


def test_experiment_writes_every_artefact(synthetic_table, fast_config):
    cfg = fast_config.model_copy(update={"save_models": True})
    run_and_write_experiment(synthetic_table(rows=24), cfg)
    out = cfg.output_dir
    for name in ("metrics.csv", "aggregate.csv", "failures.csv", "predictions.csv", "projection.csv", "projection.svg", "summary.txt", "config.json"):
        assert (out / name).exists(), name
    metrics = pd.read_csv(out / "metrics.csv")
    assert list(metrics.columns) == ["method", "scale", "repeat", "seed", "mae", "pearson_r"]
    assert len(metrics) == 10
    aggregate = pd.read_csv(out / "aggregate.csv")
    assert list(aggregate.columns) == ["method", "scale", "mae_mean", "mae_min", "mae_max", "pearson_mean", "improvement_pct"]
    assert pd.read_csv(out / "projection.csv").columns.tolist() == ["x", "y", "origin"]
    assert RunConfig.model_validate_json((out / "config.json").read_text()) == cfg
    assert (out / "vae_model_repeat0.json").exists() and (out / "vae_model_repeat1.json").exists()
    assert "Improvement over pure data" in (out / "summary.txt").read_text()


def test_failed_runs_are_recorded_not_raised(synthetic_table, fast_config, monkeypatch):
    from vae_augment import pipeline

    def explode(*args, **kwargs):  # type: ignore[no-untyped-def]
        raise ArithmeticError("diverged")

    monkeypatch.setattr(pipeline, "fit", explode)
    result = run_experiment(synthetic_table(rows=24), fast_config)
    assert len(result.metrics) == 10
    failed = result.metrics.failures
    assert len(failed) == 4 and {r.method for r in failed} == {"vae"}
    assert all("diverged" in r.error for r in failed)


def test_augment_pool_size(synthetic_table, fast_config):
    cfg = fast_config.model_copy(update={"scale": 3})
    result = run_augment(synthetic_table(rows=60), cfg)
    assert len(result.train) == 40
    assert len(result.combined) == 160
    assert set(result.combined.origin) == {"real", "vae"}
    assert np.all(np.isfinite(result.combined.labels))


def test_projection_command_result(synthetic_table, fast_config):
    result = run_projection(synthetic_table(rows=30), fast_config.model_copy(update={"scale": 2}))
    assert result.projection is not None
    assert result.projection.coordinates.shape == (20 * 3, 2)


def _rare_category_table(table_factory):  # type: ignore[no-untyped-def]
    rng = np.random.default_rng(0)
    return table_factory(
        {
            "x1": rng.normal(size=30).round(4).tolist(),
            "gas": ["N2"] * 29 + ["O2"],
            "y": rng.normal(size=30).round(4).tolist(),
        },
        {"x1": "numeric", "gas": "categorical", "y": "label"},
        "y",
    )


def test_repeat_whose_split_fails_is_recorded_per_run(table_factory, fast_config):
    def rare_row_in_test(cfg: RunConfig, repeat: int) -> bool:
        return 29 in split_indices(30, split_seed(cfg, repeat))[1]

    candidates = (fast_config.model_copy(update={"seed": s, "resplit_per_repeat": True, "repeats": 5}) for s in range(50))
    cfg = next(c for c in candidates if 0 < sum(rare_row_in_test(c, j) for j in range(5)) < 5)
    failing = {j for j in range(5) if rare_row_in_test(cfg, j)}

    result = run_experiment(_rare_category_table(table_factory), cfg)
    assert len(result.metrics) == MetricsTable.expected_rows(2, 2, 5)
    assert {r.repeat for r in result.failures} == failing
    for repeat in failing:
        runs = [r for r in result.metrics.results if r.repeat == repeat]
        assert len(runs) == 5 and all(r.failed for r in runs)
        assert all("UnknownCategoryError" in r.error for r in runs)
    assert result.metrics.pure_mae() is not None


def test_runs_of_a_repeat_share_the_network_seed(synthetic_table, fast_config):
    outcome = run_repeat(synthetic_table(rows=24), fast_config, repeat=1)
    assert len({r.seed for r in outcome.results}) == 1
    assert outcome.results[0].seed != repeat_seed(fast_config, 1)


def test_group_too_small_to_split_is_marked_failed(table_factory, fast_config):
    rng = np.random.default_rng(3)
    table = table_factory(
        {
            "site": ["a"] * 20 + ["b"] * 2,
            "x1": rng.normal(size=22).round(4).tolist(),
            "x2": rng.normal(size=22).round(4).tolist(),
            "y": rng.normal(size=22).round(4).tolist(),
        },
        {"site": "categorical", "x1": "numeric", "x2": "numeric", "y": "label"},
        "y",
    )
    cfg = fast_config.model_copy(update={"group_column": "site", "repeats": 1, "scales": (1,)})
    results = run_and_write_experiment(table, cfg)

    assert not results["a"].failures
    assert len(results["b"].failures) == len(results["b"].metrics) == 3
    groups = pd.read_csv(cfg.output_dir / "groups.csv", keep_default_na=False)
    assert groups["group"].tolist() == ["a", "b"]
    assert groups["failed_runs"].tolist() == [0, 3]
    assert groups.loc[0, "error"] == ""
    assert "DatasetTooSmallError" in groups.loc[1, "error"]
    assert (cfg.output_dir / "a" / "summary.txt").exists()


# Ten scales, five repeats and five master seeds: 525 regressor fits. The epoch
# budget below keeps the whole run under ten minutes on one desktop core.
ACCEPTANCE_BUDGET_SECONDS = 600


@pytest.mark.slow
def test_vae_augmentation_beats_noise_on_canonical_dataset():
    spec = SyntheticSpec(rows=120, numeric=4, label="linear", noise=0.1)
    table = table_from_frame(generate_table(spec), parse_schema(spec.schema_payload()))
    started = time.perf_counter()
    wins, bands = 0, []
    for master in range(5):
        cfg = RunConfig(
            seed=master,
            scales=tuple(range(1, 11)),
            repeats=5,
            vae=VaeConfig(epochs=250, learning_rate=5e-3),
            dnn=DnnConfig(epochs=250, learning_rate=5e-3),
        )
        metrics: MetricsTable = run_experiment(table, cfg).metrics
        assert not metrics.failures
        wins += bool(directional_check(metrics, 10))
        bands.append(noise_band_check(metrics))
    assert time.perf_counter() - started < ACCEPTANCE_BUDGET_SECONDS
    assert wins >= 4
    for verdicts in bands:
        assert sorted(verdicts) == list(range(1, 11))
        assert all(verdicts.values())

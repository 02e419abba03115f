from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

try:
    # When imported as part of the package
    from .augment import ORIGIN_VAE, AugmentedPool, augment_noise, augment_vae, combine
    from .config import RunConfig, dump_config
    from .evaluation import (
        METHOD_ORDER,
        MetricsTable,
        PcaProjection,
        RunResult,
        directional_check,
        mae,
        noise_band_check,
        pca_project2d,
        pearson_r,
    )
    from .load_data import DataValidationError, RawTable, SchemaError
    from .numeric_core import ContractError, TrainReport
    from .outputs import (
        PredictionRow,
        format_summary,
        write_aggregate,
        write_failures,
        write_groups,
        write_metrics,
        write_model,
        write_pool,
        write_predictions,
        write_projection,
        write_projection_svg,
        write_text,
    )
    from .preprocess import Dataset, clean, decode_label, prepare
    from .regressor import dnn_train, predict
    from .seeds import derive_seed, make_rng
    from .vae import VaeParams, fit
except ImportError:
    # When running as standalone scripts
    from augment import ORIGIN_VAE, AugmentedPool, augment_noise, augment_vae, combine
    from config import RunConfig, dump_config
    from evaluation import (
        METHOD_ORDER,
        MetricsTable,
        PcaProjection,
        RunResult,
        directional_check,
        mae,
        noise_band_check,
        pca_project2d,
        pearson_r,
    )
    from load_data import DataValidationError, RawTable, SchemaError
    from numeric_core import ContractError, TrainReport
    from outputs import (
        PredictionRow,
        format_summary,
        write_aggregate,
        write_failures,
        write_groups,
        write_metrics,
        write_model,
        write_pool,
        write_predictions,
        write_projection,
        write_projection_svg,
        write_text,
    )
    from preprocess import Dataset, clean, decode_label, prepare
    from regressor import dnn_train, predict
    from seeds import derive_seed, make_rng
    from vae import VaeParams, fit

logger = logging.getLogger(__name__)

RUN_ERRORS = (DataValidationError, ValueError, ArithmeticError)


@dataclass
class RepeatOutcome:
    repeat: int
    results: List[RunResult]
    predictions: List[PredictionRow]
    vae_params: Optional[VaeParams] = None
    projection: Optional[PcaProjection] = None
    projection_origin: Tuple[str, ...] = ()


@dataclass
class ExperimentResult:
    metrics: MetricsTable
    predictions: List[PredictionRow]
    projection: Optional[PcaProjection]
    projection_origin: Tuple[str, ...]
    vae_models: Dict[int, VaeParams] = field(default_factory=dict)
    rows: int = 0

    @property
    def failures(self) -> List[RunResult]:
        return self.metrics.failures


@dataclass
class AugmentResult:
    train: Dataset
    pool: AugmentedPool
    combined: Dataset
    vae_params: VaeParams
    vae_report: TrainReport


@dataclass
class ProjectionResult:
    projection: Optional[PcaProjection]
    origins: Tuple[str, ...]
    vae_params: VaeParams


def repeat_seed(cfg: RunConfig, repeat: int) -> int:
    return derive_seed(cfg.seed, "repeat", repeat)


def split_seed(cfg: RunConfig, repeat: int) -> int:
    if cfg.resplit_per_repeat:
        return derive_seed(repeat_seed(cfg, repeat), "split")
    return derive_seed(cfg.seed, "split")


def _train_vae(train: Dataset, cfg: RunConfig, seed: int) -> Tuple[VaeParams, TrainReport]:
    return fit(train, cfg.vae.model_copy(update={"seed": derive_seed(seed, "vae")}))


def _build_pool(
    method: str,
    scale: int,
    train: Dataset,
    vae_params: Optional[VaeParams],
    cfg: RunConfig,
    seed: int,
) -> AugmentedPool:
    rng = make_rng(seed, method, scale, "generation")
    if method == ORIGIN_VAE:
        if vae_params is None:
            raise ContractError("VAE augmentation requested but no VAE was trained")
        return augment_vae(train, vae_params, scale, cfg.neighbors, rng, snap=cfg.snap_onehot)
    return augment_noise(train, scale, rng, cfg.noise_labels, cfg.neighbors)


def _score(
    pool: AugmentedPool,
    test: Dataset,
    cfg: RunConfig,
    repeat: int,
    seed: int,
) -> Tuple[RunResult, np.ndarray]:
    run_seed = dnn_seed(seed)
    combined = combine(pool, make_rng(seed, pool.method, pool.scale, "shuffle"))
    params, report = dnn_train(combined, cfg.dnn.model_copy(update={"seed": run_seed}))
    predicted = predict(test, params)
    r = pearson_r(predicted, test.labels) if len(test) >= 2 else None
    result = RunResult(pool.method, pool.scale, repeat, run_seed, mae(predicted, test.labels), r)
    logger.info(
        "Run %s k=%d repeat %d: mae %.4f (dnn loss %.4f)", pool.method, pool.scale, repeat, result.mae, report.final_loss
    )
    return result, predicted


def dnn_seed(seed: int) -> int:
    # shared by every run of a repeat so methods and scales start from the same network
    return derive_seed(seed, "dnn-init")


def _prediction_rows(method: str, scale: int, repeat: int, test: Dataset, predicted: np.ndarray) -> List[PredictionRow]:
    truth = decode_label(test.labels, test.codec)
    raw = decode_label(predicted, test.codec)
    return [PredictionRow(method, scale, repeat, float(t), float(p)) for t, p in zip(truth, raw)]


def _project(train: Dataset, artificial: Dataset) -> Tuple[Optional[PcaProjection], Tuple[str, ...]]:
    if train.feature_dim < 2:
        logger.warning("Projection skipped: only %d feature dimension", train.feature_dim)
        return None, ()
    rows = np.vstack([train.features, artificial.features])
    origins = tuple(str(o) for o in np.concatenate([train.origin, artificial.origin]))
    return pca_project2d(rows), origins


def _failed_runs(cfg: RunConfig, repeat: int, seed: int, exc: BaseException) -> List[RunResult]:
    failed = [RunResult.failure("pure", 0, repeat, seed, exc)]
    failed += [RunResult.failure(method, scale, repeat, seed, exc) for method in cfg.methods for scale in cfg.scales]
    return failed


def run_repeat(cleaned: RawTable, cfg: RunConfig, repeat: int) -> RepeatOutcome:
    """Steps 2-5 of the protocol for one repeat: VAE, pools per (method, scale), DNNs, metrics."""
    seed = repeat_seed(cfg, repeat)
    logger.info("Repeat %d started (seed %d)", repeat, seed)
    outcome = RepeatOutcome(repeat, [], [])
    try:
        train, test = prepare(cleaned, split_seed(cfg, repeat))
    except RUN_ERRORS as exc:
        logger.error("Repeat %d failed to prepare its split: %s", repeat, exc)
        outcome.results += _failed_runs(cfg, repeat, dnn_seed(seed), exc)
        return outcome
    if not test.all_real:
        raise ContractError("test rows must all be real records")

    unaugmented = AugmentedPool.unaugmented(train)
    try:
        result, predicted = _score(unaugmented, test, cfg, repeat, seed)
        outcome.results.append(result)
        outcome.predictions += _prediction_rows(unaugmented.method, 0, repeat, test, predicted)
    except RUN_ERRORS as exc:
        logger.error("Run pure repeat %d failed: %s", repeat, exc)
        outcome.results.append(RunResult.failure("pure", 0, repeat, dnn_seed(seed), exc))

    vae_error: Optional[BaseException] = None
    if ORIGIN_VAE in cfg.methods:
        try:
            outcome.vae_params, _ = _train_vae(train, cfg, seed)
        except RUN_ERRORS as exc:
            logger.error("VAE training failed in repeat %d: %s", repeat, exc)
            vae_error = exc

    for method in cfg.methods:
        for scale in cfg.scales:
            try:
                if method == ORIGIN_VAE and vae_error is not None:
                    raise vae_error
                pool = _build_pool(method, scale, train, outcome.vae_params, cfg, seed)
                result, predicted = _score(pool, test, cfg, repeat, seed)
            except RUN_ERRORS as exc:
                logger.error("Run %s k=%d repeat %d failed: %s", method, scale, repeat, exc)
                outcome.results.append(RunResult.failure(method, scale, repeat, dnn_seed(seed), exc))
                continue
            outcome.results.append(result)
            if scale == cfg.max_scale:
                outcome.predictions += _prediction_rows(method, scale, repeat, test, predicted)
            if method == ORIGIN_VAE and scale == cfg.max_scale and repeat == 0:
                outcome.projection, outcome.projection_origin = _project(train, pool.artificial)

    logger.info("Repeat %d finished", repeat)
    return outcome


def _run_repeat_task(args: Tuple[RawTable, RunConfig, int]) -> RepeatOutcome:
    return run_repeat(*args)


def run_experiment(raw: RawTable, cfg: RunConfig) -> ExperimentResult:
    """Full protocol: ``cfg.repeats`` repeats of every (method, scale) plus the pure baseline."""
    cleaned = clean(raw)
    tasks = [(cleaned, cfg, repeat) for repeat in range(cfg.repeats)]
    if cfg.jobs > 1 and cfg.repeats > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, cfg.repeats)) as pool:
            outcomes = list(pool.map(_run_repeat_task, tasks))
    else:
        outcomes = [_run_repeat_task(task) for task in tasks]
    outcomes.sort(key=lambda o: o.repeat)

    metrics = MetricsTable(result for outcome in outcomes for result in outcome.results)
    expected = MetricsTable.expected_rows(len(cfg.methods), len(cfg.scales), cfg.repeats)
    if len(metrics) != expected:
        raise ContractError(f"experiment produced {len(metrics)} runs, expected {expected}")

    first = outcomes[0]
    return ExperimentResult(
        metrics=metrics,
        predictions=sorted(
            (p for outcome in outcomes for p in outcome.predictions),
            key=lambda p: (METHOD_ORDER[p.method], p.scale, p.repeat),
        ),
        projection=first.projection,
        projection_origin=first.projection_origin,
        vae_models={o.repeat: o.vae_params for o in outcomes if o.vae_params is not None},
        rows=len(cleaned),
    )


def group_tables(raw: RawTable, column: str) -> List[Tuple[str, RawTable]]:
    """Split by ``column`` (first-appearance order) and drop it from the features."""
    if column not in raw.schema.columns or raw.schema.kinds[column] != "categorical":
        raise SchemaError(f"group column '{column}' must be a categorical column of the schema")
    cleaned = clean(raw)
    groups: List[Tuple[str, RawTable]] = []
    values = cleaned.frame[column]
    for value in values.unique():
        positions = np.flatnonzero((values == value).to_numpy())
        groups.append((str(value), cleaned.take(positions).drop_column(column)))
    return groups


def write_experiment(result: ExperimentResult, cfg: RunConfig, output_dir: Path) -> None:
    write_metrics(result.metrics, output_dir / "metrics.csv")
    write_aggregate(result.metrics.aggregate(), output_dir / "aggregate.csv")
    write_failures(result.metrics, output_dir / "failures.csv")
    write_predictions(result.predictions, output_dir / "predictions.csv")
    if result.projection is not None:
        write_projection(result.projection, result.projection_origin, output_dir / "projection.csv")
        write_projection_svg(result.projection, result.projection_origin, output_dir / "projection.svg")
    summary = format_summary(result.metrics, directional_check(result.metrics), noise_band_check(result.metrics))
    write_text(summary, output_dir / "summary.txt")
    write_text(dump_config(cfg) + "\n", output_dir / "config.json")
    if cfg.save_models:
        for repeat, params in result.vae_models.items():
            write_model(params.to_payload(), output_dir / f"vae_model_repeat{repeat}.json")


def _group_row(name: str, result: ExperimentResult, cfg: RunConfig) -> Dict[str, object]:
    table = result.metrics
    return {
        "group": name,
        "rows": result.rows,
        "mae_pure": table.pure_mae(),
        "mae_vae_max_scale": table.mean_mae("vae", cfg.max_scale),
        "mae_noise_max_scale": table.mean_mae("noise", cfg.max_scale),
        "failed_runs": len(table.failures),
        "error": table.failures[0].error if len(table.failures) == len(table) else None,
    }


def run_and_write_experiment(raw: RawTable, cfg: RunConfig) -> Dict[str, ExperimentResult]:
    """Run the protocol (per group when ``cfg.group_column`` is set) and write every artefact."""
    if cfg.group_column is None:
        result = run_experiment(raw, cfg)
        write_experiment(result, cfg, cfg.output_dir)
        return {"": result}

    results: Dict[str, ExperimentResult] = {}
    rows: List[Dict[str, object]] = []
    for name, table in group_tables(raw, cfg.group_column):
        logger.info("Group '%s': %d rows", name, len(table))
        try:
            results[name] = run_experiment(table, cfg)
        except RUN_ERRORS as exc:
            logger.error("Group '%s' failed: %s", name, exc)
            rows.append({"group": name, "rows": len(table), "error": f"{type(exc).__name__}: {exc}"})
            continue
        write_experiment(results[name], cfg, cfg.output_dir / name)
        rows.append(_group_row(name, results[name], cfg))
    write_groups(rows, cfg.output_dir / "groups.csv")
    return results


def run_augment(raw: RawTable, cfg: RunConfig) -> AugmentResult:
    """Train the VAE once (repeat 0 seeds) and build the shuffled pool at ``cfg.scale``."""
    seed = repeat_seed(cfg, 0)
    train, _ = prepare(clean(raw), split_seed(cfg, 0))
    params, report = _train_vae(train, cfg, seed)
    pool = _build_pool(ORIGIN_VAE, cfg.scale, train, params, cfg, seed)
    combined = combine(pool, make_rng(seed, ORIGIN_VAE, cfg.scale, "shuffle"))
    return AugmentResult(train, pool, combined, params, report)


def write_augment(result: AugmentResult, cfg: RunConfig) -> None:
    write_pool(result.combined, cfg.output_dir / "pool.csv", raw_units=cfg.raw_units)
    write_model(result.vae_params.to_payload(), cfg.output_dir / "vae_model.json")


def run_projection(raw: RawTable, cfg: RunConfig) -> ProjectionResult:
    augmented = run_augment(raw, cfg)
    projection, origins = _project(augmented.train, augmented.pool.artificial)
    return ProjectionResult(projection, origins, augmented.vae_params)


def write_projection_result(result: ProjectionResult, cfg: RunConfig) -> None:
    if result.projection is not None:
        write_projection(result.projection, result.origins, cfg.output_dir / "projection.csv")
        write_projection_svg(result.projection, result.origins, cfg.output_dir / "projection.svg")
    write_model(result.vae_params.to_payload(), cfg.output_dir / "vae_model.json")


__all__ = [
    "AugmentResult",
    "ExperimentResult",
    "ProjectionResult",
    "group_tables",
    "run_and_write_experiment",
    "run_augment",
    "run_experiment",
    "run_projection",
    "run_repeat",
    "write_augment",
    "write_experiment",
    "write_projection_result",
]

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

try:
    # When imported as part of the package
    from .config import RunConfig, dump_config, load_config
    from .evaluation import directional_check
    from .load_data import DataValidationError, load_table
    from .pipeline import (
        run_and_write_experiment,
        run_augment,
        run_projection,
        write_augment,
        write_projection_result,
    )
    from .synth import CategoricalSpec, SyntheticSpec, write_synthetic
except ImportError:
    # When running as standalone scripts
    from config import RunConfig, dump_config, load_config
    from evaluation import directional_check
    from load_data import DataValidationError, load_table
    from pipeline import (
        run_and_write_experiment,
        run_augment,
        run_projection,
        write_augment,
        write_projection_result,
    )
    from synth import CategoricalSpec, SyntheticSpec, write_synthetic

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_INPUT = 2


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from exc


def _name_list(text: str) -> Tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _categorical(text: str) -> CategoricalSpec:
    try:
        return CategoricalSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _logging_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--verbose", action="store_true", help="Log training progress (DEBUG)")
    group.add_argument("--quiet", action="store_true", help="Only log warnings and errors")


def _pipeline_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, help="JSON run config; flags below override its fields")
    parent.add_argument("--data", type=Path, help="Input CSV of experimental records")
    parent.add_argument("--schema", type=Path, help="Sidecar JSON schema for the CSV")
    parent.add_argument("--output", type=Path, help="Directory to write results")
    parent.add_argument("--seed", type=int, help="Master seed governing every random draw")
    parent.add_argument("--neighbors", type=int, help="Neighbors used for artificial labels")
    parent.add_argument("--vae-epochs", type=int, help="VAE training epochs")
    parent.add_argument("--dnn-epochs", type=int, help="Regressor training epochs")
    parent.add_argument("--group-column", help="Run the protocol separately per value of this categorical column")
    parent.add_argument("--deterministic-latent", action="store_true", help="Use the noise-free latent z = mu + exp(logvar)")
    parent.add_argument(
        "--paper-literal-head",
        "--activated-head",
        dest="activated_head",
        action="store_true",
        help="Apply the activation on the regressor output",
    )
    parent.add_argument("--artificial-weight", type=float, help="Loss share of artificial rows relative to the real rows")
    parent.add_argument("--equal-row-weights", action="store_true", help="Weigh every pool row equally in the regressor loss")
    parent.add_argument("--full-elbo", action="store_true", help="Add the decoder-side Gaussian term to the VAE loss")
    parent.add_argument("--noise-labels", choices=["gaussian", "knn"], help="Labels for Gaussian-noise rows")
    parent.add_argument("--snap-onehot", action="store_true", help="Snap generated categorical blocks to one-hot")
    parent.add_argument("--resplit-per-repeat", action="store_true", help="Draw a fresh train/test split per repeat")
    parent.add_argument("--dump-config", action="store_true", help="Print the effective config and exit")
    _logging_flags(parent)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="VAE-based self-augmentation for small tabular device datasets")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="Write a synthetic dataset and its schema")
    synth.add_argument("--rows", type=int, default=120)
    synth.add_argument("--numeric", type=int, default=4)
    synth.add_argument("--categorical", type=_categorical, nargs="*", help="Categorical features as name:arity")
    synth.add_argument("--label", choices=["linear", "quadratic", "interaction"], default="linear")
    synth.add_argument("--noise", type=float, default=0.1)
    synth.add_argument("--groups", type=int, default=1)
    synth.add_argument("--missing-fraction", type=float, default=0.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--output", type=Path, default=Path("data"))
    _logging_flags(synth)

    parent = _pipeline_parent()
    experiment = commands.add_parser("experiment", parents=[parent], help="Run the full augmentation protocol")
    experiment.add_argument("--scales", type=_int_list, help="Comma-separated augmentation scales")
    experiment.add_argument("--repeats", type=int)
    experiment.add_argument("--methods", type=_name_list, help="Comma-separated subset of vae,noise")
    experiment.add_argument("--jobs", type=int, help="Worker processes for independent repeats")
    experiment.add_argument("--save-models", action="store_true", help="Write each repeat's trained VAE")

    augment = commands.add_parser("augment", parents=[parent], help="Write one VAE-augmented training pool")
    augment.add_argument("--scale", type=int)
    augment.add_argument("--raw-units", action="store_true", help="Write the pool in raw units")

    project = commands.add_parser("project", parents=[parent], help="Write a 2-D projection of real and VAE rows")
    project.add_argument("--scale", type=int)
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s - %(levelname)s - %(message)s")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file (or defaults) with command-line overrides applied and re-validated."""
    base = load_config(args.config) if args.config else RunConfig()
    flat = {
        "data_file": args.data,
        "schema_file": args.schema,
        "output_dir": args.output,
        "seed": args.seed,
        "neighbors": args.neighbors,
        "group_column": args.group_column,
        "noise_labels": args.noise_labels,
        "scales": getattr(args, "scales", None),
        "repeats": getattr(args, "repeats", None),
        "methods": getattr(args, "methods", None),
        "jobs": getattr(args, "jobs", None),
        "scale": getattr(args, "scale", None),
    }
    switches = {
        "snap_onehot": args.snap_onehot,
        "resplit_per_repeat": args.resplit_per_repeat,
        "save_models": getattr(args, "save_models", False),
        "raw_units": getattr(args, "raw_units", False),
    }
    payload = base.model_dump()
    payload.update({key: value for key, value in flat.items() if value is not None})
    payload.update({key: True for key, value in switches.items() if value})

    vae: Dict[str, object] = {"epochs": args.vae_epochs} if args.vae_epochs is not None else {}
    if args.deterministic_latent:
        vae["deterministic_latent"] = True
    if args.full_elbo:
        vae["full_elbo"] = True
    dnn: Dict[str, object] = {"epochs": args.dnn_epochs} if args.dnn_epochs is not None else {}
    if args.activated_head:
        dnn["activated_head"] = True
    if args.artificial_weight is not None:
        dnn["artificial_weight"] = args.artificial_weight
    if args.equal_row_weights:
        dnn["artificial_weight"] = None
    payload["vae"] = {**payload["vae"], **vae}
    payload["dnn"] = {**payload["dnn"], **dnn}
    return RunConfig.model_validate(payload)


def _cmd_synth(args: argparse.Namespace) -> Dict[str, object]:
    fields: Dict[str, object] = {
        "rows": args.rows,
        "numeric": args.numeric,
        "label": args.label,
        "noise": args.noise,
        "groups": args.groups,
        "missing_fraction": args.missing_fraction,
        "seed": args.seed,
    }
    if args.categorical is not None:
        fields["categorical"] = tuple(args.categorical)
    spec = SyntheticSpec(**fields)
    data_path, schema_path = write_synthetic(spec, args.output)
    return {"rows": spec.rows, "data": str(data_path.resolve()), "schema": str(schema_path.resolve())}


def _cmd_experiment(cfg: RunConfig) -> Dict[str, object]:
    data_path, schema_path = cfg.require_inputs()
    results = run_and_write_experiment(load_table(data_path, schema_path), cfg)
    summary: Dict[str, object] = {"output_dir": str(cfg.output_dir.resolve()), "groups": {}}
    for name, result in results.items():
        summary["groups"][name or "all"] = {  # type: ignore[index]
            "runs": len(result.metrics),
            "failed": len(result.failures),
            "mae_pure": result.metrics.pure_mae(),
            "vae_beats_noise": directional_check(result.metrics),
        }
    return summary


def _cmd_augment(cfg: RunConfig) -> Dict[str, object]:
    data_path, schema_path = cfg.require_inputs()
    result = run_augment(load_table(data_path, schema_path), cfg)
    write_augment(result, cfg)
    return {
        "scale": cfg.scale,
        "real_rows": len(result.pool.real),
        "artificial_rows": len(result.pool.artificial),
        "vae_final_loss": result.vae_report.final_loss,
        "output_dir": str(cfg.output_dir.resolve()),
    }


def _cmd_project(cfg: RunConfig) -> Dict[str, object]:
    data_path, schema_path = cfg.require_inputs()
    result = run_projection(load_table(data_path, schema_path), cfg)
    write_projection_result(result, cfg)
    explained: Optional[List[float]] = None
    if result.projection is not None:
        explained = list(result.projection.explained_variance_ratio)
    return {"points": len(result.origins), "explained_variance": explained, "output_dir": str(cfg.output_dir.resolve())}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)

    try:
        if args.command == "synth":
            summary = _cmd_synth(args)
        else:
            cfg = resolve_config(args)
            if args.dump_config:
                print(dump_config(cfg))
                return EXIT_OK
            handlers = {"experiment": _cmd_experiment, "augment": _cmd_augment, "project": _cmd_project}
            summary = handlers[args.command](cfg)
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return EXIT_MISSING_INPUT
    except (DataValidationError, ValueError, ArithmeticError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ERROR

    print(json.dumps(summary, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

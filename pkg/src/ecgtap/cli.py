"""Command line interface: build-dataset, extract, evaluate, run-all.

Every subcommand is driven by one TOML config (flags override it) and is
idempotent: identical inputs and seeds give byte-identical outputs.
Exit codes: 0 ok, 1 usage, 2 data error, 3 model error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bundle import load_bundle
from .config import PipelineConfig, load_config
from .dataset import (
    RhythmClass,
    build_dataset,
    count_anchors,
    export_dataset,
    load_dataset,
    write_manifest,
)
from .errors import DataError, ModelError
from .evaluation import (
    ExperimentConfig,
    evaluate_all,
    selected_taps,
    spectrogram_features,
    tap_features,
)
from .matio import load_matrix, read_feature_index, save_matrix, write_feature_index
from .reporting import write_all
from .wfdb import read_record

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MODEL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_layers(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise DataError(f"malformed --layers value {text!r}; expected e.g. '13,112'") from None


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.override_seed(args.seed)
    if getattr(args, "jobs", None) is not None:
        if args.jobs < 1:
            raise DataError(f"--jobs must be >= 1, got {args.jobs}")
        cfg.jobs = args.jobs
    if getattr(args, "layers", None):
        cfg.layers = _parse_layers(args.layers)
    return cfg


def _experiment_config(cfg: PipelineConfig, no_selection: bool = False) -> ExperimentConfig:
    return ExperimentConfig(
        folds=cfg.folds,
        fold_seed=cfg.fold_seed,
        select_k=cfg.select_k,
        selection_modes=(False,) if no_selection else (True, False),
        svm=cfg.svm,
        partitions=cfg.partitions,
        window=cfg.window,
        overlap=cfg.overlap,
        layers=cfg.layers,
        jobs=cfg.jobs,
    )


def _read_databases(cfg: PipelineConfig):
    class_sources: dict[RhythmClass, list] = {}
    for db in cfg.databases:
        if not db.root.is_dir():
            raise DataError(f"database root not found: {db.root}")
        names = list(db.records) or sorted(p.stem for p in db.root.glob("*.hea"))
        if not names:
            raise DataError(f"no records (*.hea) found under {db.root}")
        logger.info("reading %d record(s) from %s", len(names), db.root)
        for name in names:
            record = read_record(db.root / name, annotator=db.annotator)
            for cls in db.classes:
                class_sources.setdefault(cls, []).append((f"{db.name}/{name}", record))
    if not class_sources:
        raise DataError("config lists no databases")
    return class_sources


def cmd_build_dataset(args) -> int:
    cfg = _load_cfg(args)
    class_sources = _read_databases(cfg)
    uncovered = [cls.name for cls in cfg.selection.quotas if cls not in class_sources]
    if uncovered:
        logger.info("no database covers class(es) %s; skipping", ", ".join(uncovered))
    cfg.selection.quotas = {
        cls: quota for cls, quota in cfg.selection.quotas.items() if cls in class_sources
    }
    if args.dry_run:
        counts = count_anchors(class_sources, cfg.selection)
        for cls in sorted(counts):
            total = sum(counts[cls].values())
            print(f"{cls.name}: {total} anchors across {len(counts[cls])} record(s)")
            for record, n in counts[cls].items():
                print(f"  {record}: {n}")
        return EXIT_OK
    result = build_dataset(class_sources, cfg.selection)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    export_dataset(result.instances, cfg.dataset_path())
    write_manifest(result.instances, cfg.manifest_path())
    for line in result.diagnostics:
        logger.warning("%s", line)
    hist = ", ".join(f"{cls.name}={n}" for cls, n in sorted(result.class_histogram().items()))
    print(f"wrote {len(result.instances)} instances to {cfg.dataset_path()} ({hist})")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _load_cfg(args)
    dataset_path = Path(args.dataset) if args.dataset else cfg.dataset_path()
    if not dataset_path.is_file():
        raise DataError(f"dataset file not found: {dataset_path}")
    bundle_path = Path(args.bundle) if args.bundle else cfg.bundle
    if bundle_path is None:
        raise DataError("no bundle configured; set [features].bundle or pass --bundle")
    instances = load_dataset(dataset_path)
    bundle = load_bundle(bundle_path)
    exp = _experiment_config(cfg)
    taps = selected_taps(bundle, exp)
    logger.info(
        "extracting %d tap(s) from %d instance(s) with %d job(s)",
        len(taps), len(instances), cfg.jobs,
    )
    bundle.taps = taps  # restrict execution to what was asked for
    matrices = tap_features(instances, bundle, exp)
    features_dir = cfg.features_dir()
    features_dir.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    for tap in taps:
        file_name = f"layer{tap.conv_index:03d}.bin"
        save_matrix(features_dir / file_name, matrices[tap.name])
        files[tap.name] = file_name
    write_feature_index(features_dir, taps, files, len(instances), str(dataset_path))
    print(f"wrote {len(taps)} feature matrix file(s) to {features_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    dataset_path = Path(args.dataset) if args.dataset else cfg.dataset_path()
    if not dataset_path.is_file():
        raise DataError(f"dataset file not found: {dataset_path}")
    features_dir = Path(args.features) if args.features else cfg.features_dir()
    taps, files, rows, _ = read_feature_index(features_dir)
    if cfg.layers is not None:
        wanted = set(cfg.layers)
        taps = [t for t in taps if t.conv_index in wanted]
        if not taps:
            raise DataError(f"no cached tap matches --layers {sorted(wanted)}")
    instances = load_dataset(dataset_path)
    if rows != len(instances):
        raise DataError(
            f"feature cache covers {rows} rows but the dataset has {len(instances)}"
        )
    labels = np.array([int(inst.label) for inst in instances], dtype=np.int64)
    features_by_tap = {t.name: load_matrix(files[t.name]) for t in taps}
    exp = _experiment_config(cfg, no_selection=args.no_selection)
    _, flat_specs = spectrogram_features(instances, exp)
    baselines = {
        "raw-1d": np.stack([inst.samples for inst in instances]),
        "spectrogram-flat": flat_specs,
    }
    report = evaluate_all(features_by_tap, taps, labels, exp, baselines=baselines)
    paths = write_all(report, cfg.output_dir)
    print(
        f"best configuration: {report.best_name} "
        f"(accuracy {report.best_accuracy:.2f}%); report at {paths['report']}"
    )
    return EXIT_OK


def cmd_run_all(args) -> int:
    code = cmd_build_dataset(args)
    if code != EXIT_OK or args.dry_run:
        return code
    args.dataset = None
    code = cmd_extract(args)
    if code != EXIT_OK:
        return code
    args.features = None
    return cmd_evaluate(args)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ecgtap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment TOML file")
        p.add_argument("--seed", type=int, help="override every config seed")
        p.add_argument("--jobs", type=int, help="worker parallelism (default from config)")

    p = sub.add_parser("build-dataset", help="select windows and write the dataset container")
    common(p)
    p.add_argument("--dry-run", action="store_true", help="print anchor counts, write nothing")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("extract", help="run the network and cache per-tap feature matrices")
    common(p)
    p.add_argument("--dataset", help="dataset container (default: <output>/dataset.ecgw)")
    p.add_argument("--bundle", help="model bundle directory or zip")
    p.add_argument("--layers", help="comma-separated conv indices to keep")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="cross-validate cached features and emit the report")
    common(p)
    p.add_argument("--dataset", help="dataset container")
    p.add_argument("--features", help="feature cache directory")
    p.add_argument("--layers", help="comma-separated conv indices to keep")
    p.add_argument("--no-selection", action="store_true", help="skip chi-squared selection")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run-all", help="build-dataset, extract, evaluate in sequence")
    common(p)
    p.add_argument("--bundle", help="model bundle directory or zip")
    p.add_argument("--layers", help="comma-separated conv indices to keep")
    p.add_argument("--no-selection", action="store_true", help="skip chi-squared selection")
    p.add_argument("--dry-run", action="store_true", help="stop after printing anchor counts")
    p.set_defaults(func=cmd_run_all, dataset=None, features=None)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DataError as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except ModelError as exc:
        logger.error("%s", exc)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())

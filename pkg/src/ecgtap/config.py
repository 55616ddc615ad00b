"""Experiment configuration: one TOML file pins a whole run.

Every seed is explicit in the file (or the documented default constant);
nothing falls back to wall-clock entropy.  Command-line flags override
file values, flags winning.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dataset import (
    AnchorRule,
    RhythmClass,
    SelectionConfig,
    default_rules,
    default_selection_config,
)
from .errors import DataError
from .svm import TrainConfig


@dataclass
class DatabaseSource:
    name: str
    root: Path
    classes: tuple[RhythmClass, ...]
    annotator: str = "atr"
    records: tuple[str, ...] = ()  # empty means discover *.hea under root


@dataclass
class PipelineConfig:
    databases: list[DatabaseSource] = field(default_factory=list)
    selection: SelectionConfig = field(default_factory=default_selection_config)
    partitions: int = 31
    window: str = "hamming"
    overlap: float = 0.0
    bundle: Path | None = None
    select_k: int = 500
    layers: tuple[int, ...] | None = None
    svm: TrainConfig = field(default_factory=TrainConfig)
    folds: int = 10
    fold_seed: int = 0
    output_dir: Path = Path("out")
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)

    def dataset_path(self) -> Path:
        return self.output_dir / "dataset.ecgw"

    def manifest_path(self) -> Path:
        return self.output_dir / "manifest.csv"

    def features_dir(self) -> Path:
        return self.output_dir / "features"

    def override_seed(self, seed: int) -> None:
        """One master seed drives selection, SVM shuffling, and folds."""
        self.selection.seed = seed
        self.svm.shuffle_seed = seed
        self.fold_seed = seed


_CLASS_NAMES = {cls.name.lower(): cls for cls in RhythmClass}


def _parse_class(name: str) -> RhythmClass:
    try:
        return _CLASS_NAMES[name.strip().lower()]
    except KeyError:
        raise DataError(
            f"unknown rhythm class {name!r}; expected one of {sorted(_CLASS_NAMES)}"
        ) from None


def _parse_rules(raw: dict) -> dict[RhythmClass, AnchorRule]:
    rules = default_rules()
    for name, body in raw.items():
        rules[_parse_class(name)] = AnchorRule(
            aux_prefixes=tuple(body.get("aux_prefixes", ())),
            type_codes=tuple(int(c) for c in body.get("type_codes", ())),
        )
    return rules


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"{path}: invalid TOML: {exc}") from None

    cfg = PipelineConfig()
    base = path.parent

    def respath(value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    cfg.jobs = int(raw.get("jobs", cfg.jobs))

    ds = raw.get("dataset", {})
    selection = default_selection_config(seed=int(ds.get("seed", 0)))
    selection.channel = int(ds.get("channel", 0))
    if "quotas" in ds:
        selection.quotas = {
            _parse_class(name): int(q) for name, q in ds["quotas"].items()
        }
    if "jitter" in ds:
        for name, j in ds["jitter"].items():
            selection.jitter[_parse_class(name)] = int(j)
    selection.rules = _parse_rules(ds.get("rules", {}))
    cfg.selection = selection
    for db in ds.get("databases", ()):
        for key in ("name", "root", "classes"):
            if key not in db:
                raise DataError(f"database entry missing {key!r}: {db}")
        cfg.databases.append(
            DatabaseSource(
                name=str(db["name"]),
                root=respath(db["root"]),
                classes=tuple(_parse_class(c) for c in db["classes"]),
                annotator=str(db.get("annotator", "atr")),
                records=tuple(db.get("records", ())),
            )
        )

    spect = raw.get("spectrogram", {})
    cfg.partitions = int(spect.get("partitions", cfg.partitions))
    cfg.window = str(spect.get("window", cfg.window))
    cfg.overlap = float(spect.get("overlap", cfg.overlap))

    feats = raw.get("features", {})
    if "bundle" in feats:
        cfg.bundle = respath(feats["bundle"])
    cfg.select_k = int(feats.get("k", cfg.select_k))
    layers = feats.get("layers", ())
    cfg.layers = tuple(int(v) for v in layers) or None

    svm_raw = raw.get("svm", {})
    cfg.svm = TrainConfig(
        c=float(svm_raw.get("c", 1.0)),
        tolerance=float(svm_raw.get("tolerance", 1e-4)),
        max_epochs=int(svm_raw.get("max_epochs", 1000)),
        shuffle_seed=int(svm_raw.get("shuffle_seed", 0)),
    )

    evaluation = raw.get("evaluation", {})
    cfg.folds = int(evaluation.get("folds", cfg.folds))
    cfg.fold_seed = int(evaluation.get("seed", cfg.fold_seed))

    output = raw.get("output", {})
    if "dir" in output:
        cfg.output_dir = respath(output["dir"])
    return cfg

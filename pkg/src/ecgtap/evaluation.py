"""Stratified cross-validation, metrics, and the experiment driver.

Folds are stratified per class with a rotating offset so the extra rows
of uneven classes land on different folds; with a near-balanced 7008-row
dataset the ten folds come out as eight of 701 rows and two of 700.
Fold predictions are pooled into a single confusion matrix per
configuration (truth in rows).  Selection and the SVM are fitted inside
each training fold only; "selection off" still fits the fold-local
min-max scaling but keeps every column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import chi2, svm
from .bundle import ModelBundle, Tap
from .dataset import RhythmClass, WindowInstance
from .executor import extract_all
from .spectrogram import stft_spectrogram, to_image
from .svm import TrainConfig

N_CLASSES = len(RhythmClass)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    fold_of_row: np.ndarray

    def validation_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row == fold)

    def training_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row != fold)

    def fold_sizes(self) -> list[int]:
        return [int(np.sum(self.fold_of_row == f)) for f in range(self.k)]


def make_folds(labels, k: int = 10, seed: int = 0) -> FoldPlan:
    """Stratified fold assignment: per-class counts differ by at most 1."""
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    fold_of_row = np.empty(labels.shape[0], dtype=np.int64)
    rng = np.random.default_rng(seed)
    offset = 0
    for cls in np.unique(labels):
        rows = np.flatnonzero(labels == cls)
        if rows.size < k:
            raise ValueError(
                f"class {cls} has {rows.size} rows, fewer than k={k}"
            )
        shuffled = rows[rng.permutation(rows.size)]
        fold_of_row[shuffled] = (offset + np.arange(rows.size)) % k
        offset = (offset + rows.size % k) % k
    return FoldPlan(k=k, seed=seed, fold_of_row=fold_of_row)


def confusion_matrix(truth, predicted, n_classes: int = N_CLASSES) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(np.asarray(truth), np.asarray(predicted)):
        cm[int(t), int(p)] += 1
    return cm


@dataclass
class ClassMetrics:
    precision: float  # percent
    recall: float
    f1: float
    zero_division: bool = False


@dataclass
class MetricsReport:
    per_class: list[ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float


def macro_average(values) -> float:
    """Unweighted mean of per-class percentages (the macro rows of the
    comparison table are exactly this over the per-class table)."""
    values = [float(v) for v in values]
    return sum(values) / len(values)


def compute_metrics(cm: np.ndarray) -> MetricsReport:
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise ValueError("confusion matrix is all zeros")
    if (cm < 0).any():
        raise ValueError("confusion matrix has negative counts")
    per_class: list[ClassMetrics] = []
    for c in range(cm.shape[0]):
        tp = float(cm[c, c])
        col = float(cm[:, c].sum())
        row = float(cm[c, :].sum())
        flag = False
        if col == 0:
            precision, flag = 0.0, True
        else:
            precision = tp / col
        if row == 0:
            recall, flag = 0.0, True
        else:
            recall = tp / row
        if precision + recall == 0:
            f1, flag = 0.0, True
        else:
            f1 = 2.0 * precision * recall / (precision + recall)
        per_class.append(
            ClassMetrics(
                precision=100.0 * precision,
                recall=100.0 * recall,
                f1=100.0 * f1,
                zero_division=flag,
            )
        )
    return MetricsReport(
        per_class=per_class,
        macro_precision=macro_average(m.precision for m in per_class),
        macro_recall=macro_average(m.recall for m in per_class),
        macro_f1=macro_average(m.f1 for m in per_class),
        accuracy=100.0 * float(np.trace(cm)) / float(total),
    )


@dataclass
class ExperimentConfig:
    folds: int = 10
    fold_seed: int = 0
    select_k: int = 500
    selection_modes: tuple[bool, ...] = (True, False)
    svm: TrainConfig = field(default_factory=TrainConfig)
    partitions: int = 31
    window: str = "hamming"
    overlap: float = 0.0
    image_size: tuple[int, int] = (224, 224)
    layers: tuple[int, ...] | None = None  # restrict taps by conv index
    include_baselines: bool = True
    jobs: int = 1


@dataclass
class ConfigurationResult:
    name: str
    kind: str  # "tap" or "baseline"
    tap: str | None
    conv_index: int | None
    selection: bool
    k_used: int
    confusion: np.ndarray
    metrics: MetricsReport
    predictions: np.ndarray


@dataclass
class EvalReport:
    n_instances: int
    classes: list[str]
    fold_plan: FoldPlan
    configurations: list[ConfigurationResult]
    best_name: str
    best_conv_index: int | None
    best_accuracy: float

    def configuration(self, name: str) -> ConfigurationResult:
        for cfg in self.configurations:
            if cfg.name == name:
                return cfg
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "classes": self.classes,
            "folds": {
                "k": self.fold_plan.k,
                "seed": self.fold_plan.seed,
                "fold_of_row": self.fold_plan.fold_of_row.tolist(),
            },
            "configurations": [
                {
                    "name": c.name,
                    "kind": c.kind,
                    "tap": c.tap,
                    "conv_index": c.conv_index,
                    "selection": c.selection,
                    "k_used": c.k_used,
                    "confusion": c.confusion.tolist(),
                    "accuracy": c.metrics.accuracy,
                    "macro_precision": c.metrics.macro_precision,
                    "macro_recall": c.metrics.macro_recall,
                    "macro_f1": c.metrics.macro_f1,
                    "per_class": [
                        {
                            "class": self.classes[i],
                            "precision": m.precision,
                            "recall": m.recall,
                            "f1": m.f1,
                            "zero_division": m.zero_division,
                        }
                        for i, m in enumerate(c.metrics.per_class)
                    ],
                    "predictions": c.predictions.tolist(),
                }
                for c in self.configurations
            ],
            "best": {
                "name": self.best_name,
                "conv_index": self.best_conv_index,
                "accuracy": self.best_accuracy,
            },
        }


def evaluate_configuration(
    features: np.ndarray,
    labels: np.ndarray,
    plan: FoldPlan,
    select_k: int,
    selection_on: bool,
    svm_cfg: TrainConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Cross-validate one feature matrix; returns (confusion, predictions).

    Scaling/selection extrema and scores come from training rows only.
    """
    n = features.shape[0]
    predictions = np.empty(n, dtype=np.int64)
    k_eff = min(select_k, features.shape[1]) if selection_on else features.shape[1]
    for fold in range(plan.k):
        tr = plan.training_rows(fold)
        va = plan.validation_rows(fold)
        selector = chi2.fit(features[tr], labels[tr], k_eff)
        model = svm.train(chi2.transform(selector, features[tr]), labels[tr], svm_cfg)
        predictions[va] = svm.predict(model, chi2.transform(selector, features[va]))
    return confusion_matrix(labels, predictions), predictions


def spectrogram_features(instances: list[WindowInstance], cfg: ExperimentConfig):
    """Per-instance spectrograms and their flattened feature rows."""
    specs = [
        stft_spectrogram(
            inst.samples, partitions=cfg.partitions, window=cfg.window, overlap=cfg.overlap
        )
        for inst in instances
    ]
    flat = np.stack([s.values.ravel() for s in specs]).astype(np.float32)
    return specs, flat


def tap_features(
    instances: list[WindowInstance], bundle: ModelBundle, cfg: ExperimentConfig
) -> dict[str, np.ndarray]:
    specs, _ = spectrogram_features(instances, cfg)
    images = [to_image(s, target=cfg.image_size) for s in specs]
    return extract_all(bundle, images, jobs=cfg.jobs)


def selected_taps(bundle: ModelBundle, cfg: ExperimentConfig) -> list[Tap]:
    taps = list(bundle.taps)
    if cfg.layers is not None:
        wanted = set(cfg.layers)
        taps = [t for t in taps if t.conv_index in wanted]
        if not taps:
            raise ValueError(
                f"no bundle tap matches --layers {sorted(wanted)}; "
                f"available: {sorted(t.conv_index for t in bundle.taps)}"
            )
    return sorted(taps, key=lambda t: t.conv_index)


def evaluate_all(
    features_by_tap: dict[str, np.ndarray],
    taps: list[Tap],
    labels: np.ndarray,
    cfg: ExperimentConfig,
    baselines: dict[str, np.ndarray] | None = None,
) -> EvalReport:
    """Cross-validate every tap x selection mode plus the baselines."""
    plan = make_folds(labels, k=cfg.folds, seed=cfg.fold_seed)
    configurations: list[ConfigurationResult] = []
    for tap in taps:
        matrix = features_by_tap[tap.name]
        for selection_on in cfg.selection_modes:
            cm, preds = evaluate_configuration(
                matrix, labels, plan, cfg.select_k, selection_on, cfg.svm
            )
            k_used = min(cfg.select_k, matrix.shape[1]) if selection_on else matrix.shape[1]
            suffix = "+chi2" if selection_on else ""
            configurations.append(
                ConfigurationResult(
                    name=f"layer{tap.conv_index:03d}{suffix}",
                    kind="tap",
                    tap=tap.name,
                    conv_index=tap.conv_index,
                    selection=selection_on,
                    k_used=k_used,
                    confusion=cm,
                    metrics=compute_metrics(cm),
                    predictions=preds,
                )
            )
    for name, matrix in (baselines or {}).items():
        cm, preds = evaluate_configuration(
            matrix, labels, plan, matrix.shape[1], False, cfg.svm
        )
        configurations.append(
            ConfigurationResult(
                name=name,
                kind="baseline",
                tap=None,
                conv_index=None,
                selection=False,
                k_used=matrix.shape[1],
                confusion=cm,
                metrics=compute_metrics(cm),
                predictions=preds,
            )
        )

    tap_configs = [c for c in configurations if c.kind == "tap"]
    if tap_configs:
        best = min(
            tap_configs,
            key=lambda c: (-c.metrics.accuracy, c.conv_index, not c.selection),
        )
        best_name, best_conv, best_acc = best.name, best.conv_index, best.metrics.accuracy
    else:
        best = max(configurations, key=lambda c: c.metrics.accuracy)
        best_name, best_conv, best_acc = best.name, None, best.metrics.accuracy

    return EvalReport(
        n_instances=int(labels.shape[0]),
        classes=[cls.name for cls in RhythmClass],
        fold_plan=plan,
        configurations=configurations,
        best_name=best_name,
        best_conv_index=best_conv,
        best_accuracy=best_acc,
    )


def run_experiment(
    instances: list[WindowInstance],
    bundle: ModelBundle,
    cfg: ExperimentConfig | None = None,
) -> EvalReport:
    """The full pipeline from windows to the pooled evaluation report."""
    cfg = cfg or ExperimentConfig()
    labels = np.array([int(inst.label) for inst in instances], dtype=np.int64)
    taps = selected_taps(bundle, cfg)
    specs, flat_specs = spectrogram_features(instances, cfg)
    images = [to_image(s, target=cfg.image_size) for s in specs]
    features_by_tap = extract_all(bundle, images, jobs=cfg.jobs)

    baselines = None
    if cfg.include_baselines:
        raw = np.stack([inst.samples for inst in instances])
        baselines = {"raw-1d": raw, "spectrogram-flat": flat_specs}
    return evaluate_all(features_by_tap, taps, labels, cfg, baselines=baselines)

"""Chi-squared feature scoring and top-k selection, fold-local.

Each column is min-max scaled to [0,1] with extrema taken from the
training rows only (constant columns map to 0, supplying the
non-negativity the statistic needs).  The observed value of feature j in
class c is the per-class sum of the scaled column; expected is the total
column sum times the class share of rows.  The score sums
(observed - expected)^2 / expected over classes, with a zero score when
the column sums to 0.  The k largest scores are kept, ties going to the
lower column index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class SelectionModel:
    col_min: np.ndarray  # training extrema, float64
    col_max: np.ndarray
    scores: np.ndarray  # chi-squared statistic per feature, >= 0
    kept: np.ndarray  # selected column indices, strictly increasing

    def to_json(self) -> str:
        return json.dumps(
            {
                "col_min": self.col_min.tolist(),
                "col_max": self.col_max.tolist(),
                "scores": self.scores.tolist(),
                "kept": self.kept.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SelectionModel":
        raw = json.loads(text)
        return cls(
            col_min=np.asarray(raw["col_min"], dtype=np.float64),
            col_max=np.asarray(raw["col_max"], dtype=np.float64),
            scores=np.asarray(raw["scores"], dtype=np.float64),
            kept=np.asarray(raw["kept"], dtype=np.int64),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


def _scale(X: np.ndarray, col_min: np.ndarray, col_max: np.ndarray) -> np.ndarray:
    span = col_max - col_min
    scaled = np.zeros_like(X, dtype=np.float64)
    nonconst = span > 0
    scaled[:, nonconst] = (X[:, nonconst] - col_min[nonconst]) / span[nonconst]
    return scaled


def fit(X, labels, k: int) -> SelectionModel:
    """Score features on training rows and keep the top k."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    labels = np.asarray(labels)
    if labels.shape[0] != X.shape[0]:
        raise ValueError(f"{labels.shape[0]} labels for {X.shape[0]} rows")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("need at least 2 distinct labels to score features")
    n_features = X.shape[1]
    if not 1 <= k <= n_features:
        raise ValueError(f"k must be in [1, {n_features}], got {k}")

    col_min = X.min(axis=0)
    col_max = X.max(axis=0)
    scaled = _scale(X, col_min, col_max)

    n = X.shape[0]
    observed = np.stack([scaled[labels == c].sum(axis=0) for c in classes])
    class_share = np.array([(labels == c).sum() / n for c in classes])
    col_sum = observed.sum(axis=0)
    expected = class_share[:, None] * col_sum[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(expected > 0, (observed - expected) ** 2 / expected, 0.0)
    scores = terms.sum(axis=0)
    scores[col_sum == 0] = 0.0

    ranking = np.lexsort((np.arange(n_features), -scores))
    kept = np.sort(ranking[:k])
    return SelectionModel(col_min=col_min, col_max=col_max, scores=scores, kept=kept)


def transform(model: SelectionModel, X) -> np.ndarray:
    """Scale with the training extrema, clamp to [0,1], keep selected columns."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.col_min.shape[0]:
        raise ValueError(
            f"matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"model was fitted on {model.col_min.shape[0]}"
        )
    scaled = np.clip(_scale(X, model.col_min, model.col_max), 0.0, 1.0)
    return scaled[:, model.kept]

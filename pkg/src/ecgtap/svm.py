"""One-vs-rest linear SVM trained by dual coordinate descent.

Per class the solver minimizes  0.5*||w||^2 + C * sum_i max(0, 1 - y_i
(w.x_i + b))  through its dual, one box-constrained coordinate at a time
(alpha_i in [0, C]), visiting rows in a fresh seeded permutation every
epoch.  The bias rides along as an appended constant-1 feature, so it is
(slightly) regularized.  Training stops when the largest projected
gradient violation seen in an epoch drops below the tolerance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class TrainConfig:
    c: float = 1.0
    tolerance: float = 1e-4
    max_epochs: int = 1000
    shuffle_seed: int = 0
    track_objective: bool = False  # record the dual after every update (tests)

    def validate(self) -> None:
        if self.c <= 0:
            raise ValueError(f"C must be positive, got {self.c}")
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")


@dataclass
class BinaryResult:
    w: np.ndarray  # without the bias component
    bias: float
    alpha: np.ndarray
    epochs: int
    max_violation: float
    duality_gap: float
    objective_trace: list[float] = field(default_factory=list)


@dataclass
class SvmModel:
    classes: np.ndarray  # sorted label values
    weights: np.ndarray  # (n_classes, n_features)
    biases: np.ndarray
    c: float
    epochs: list[int]
    max_violations: list[float]
    duality_gaps: list[float]

    def decision_values(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.weights.shape[1]:
            raise ValueError(
                f"matrix has {X.shape[1] if X.ndim == 2 else '?'} features, "
                f"model was trained on {self.weights.shape[1]}"
            )
        return X @ self.weights.T + self.biases

    def to_json(self) -> str:
        return json.dumps(
            {
                "classes": self.classes.tolist(),
                "weights": self.weights.tolist(),
                "biases": self.biases.tolist(),
                "c": self.c,
                "epochs": self.epochs,
                "max_violations": self.max_violations,
                "duality_gaps": self.duality_gaps,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        raw = json.loads(text)
        return cls(
            classes=np.asarray(raw["classes"]),
            weights=np.asarray(raw["weights"], dtype=np.float64),
            biases=np.asarray(raw["biases"], dtype=np.float64),
            c=float(raw["c"]),
            epochs=list(raw["epochs"]),
            max_violations=list(raw["max_violations"]),
            duality_gaps=list(raw["duality_gaps"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


def _solve_binary(
    Xa: np.ndarray,
    ybin: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> BinaryResult:
    """Dual coordinate descent on one one-vs-rest problem.

    ``Xa`` already carries the constant-1 bias feature in its last column.
    """
    n, _ = Xa.shape
    qii = np.einsum("ij,ij->i", Xa, Xa)  # > 0 thanks to the bias column
    yx = np.ascontiguousarray(ybin[:, None] * Xa)  # g = w.yx_i - 1, update along yx_i
    alpha = np.zeros(n)
    w = np.zeros(Xa.shape[1])
    c = cfg.c
    dot = np.dot
    trace: list[float] = []
    epoch = 0
    max_violation = np.inf
    for epoch in range(1, cfg.max_epochs + 1):
        max_violation = 0.0
        for i in rng.permutation(n):
            yrow = yx[i]
            g = dot(w, yrow) - 1.0
            a = alpha[i]
            if a <= 0.0:
                pg = min(g, 0.0)
            elif a >= c:
                pg = max(g, 0.0)
            else:
                pg = g
            violation = abs(pg)
            if violation > max_violation:
                max_violation = violation
            if violation > 1e-12:
                new_a = min(max(a - g / qii[i], 0.0), c)
                if new_a != a:
                    w += (new_a - a) * yrow
                    alpha[i] = new_a
                    if cfg.track_objective:
                        trace.append(alpha.sum() - 0.5 * dot(w, w))
        if max_violation < cfg.tolerance:
            break

    margins = ybin * (Xa @ w)
    primal = 0.5 * (w @ w) + c * np.maximum(0.0, 1.0 - margins).sum()
    dual = alpha.sum() - 0.5 * (w @ w)
    return BinaryResult(
        w=w[:-1].copy(),
        bias=float(w[-1]),
        alpha=alpha,
        epochs=epoch,
        max_violation=float(max_violation),
        duality_gap=float(primal - dual),
        objective_trace=trace,
    )


def train(X, y, cfg: TrainConfig | None = None) -> SvmModel:
    """Train one separator per class; deterministic under the seed."""
    cfg = cfg or TrainConfig()
    cfg.validate()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    y = np.asarray(y)
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"{y.shape[0]} labels for {X.shape[0]} rows")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("need at least 2 classes to train")

    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    weights = np.empty((classes.size, X.shape[1]))
    biases = np.empty(classes.size)
    epochs: list[int] = []
    violations: list[float] = []
    gaps: list[float] = []
    for ci, cls in enumerate(classes):
        ybin = np.where(y == cls, 1.0, -1.0)
        rng = np.random.default_rng([cfg.shuffle_seed, ci])
        result = _solve_binary(Xa, ybin, cfg, rng)
        weights[ci] = result.w
        biases[ci] = result.bias
        epochs.append(result.epochs)
        violations.append(result.max_violation)
        gaps.append(result.duality_gap)
    return SvmModel(
        classes=classes,
        weights=weights,
        biases=biases,
        c=cfg.c,
        epochs=epochs,
        max_violations=violations,
        duality_gaps=gaps,
    )


def predict(model: SvmModel, X) -> np.ndarray:
    """argmax of decision values; ties go to the lowest class index."""
    scores = model.decision_values(X)
    return model.classes[np.argmax(scores, axis=1)]

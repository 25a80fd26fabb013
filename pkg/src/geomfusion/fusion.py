"""Fusion-score inference, classification metrics, and calibration sweeps.

The fusion score is non-probabilistic: per-class channels are normalized
within each sample, mixed convexly, and the label is the argmin. All
argmin/argmax ties break to the lowest index / earliest grid element.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .medoid import MedoidSet
from .quantum import batch_channels

DEFAULT_EPSILON = 1e-12
DEFAULT_ALPHA_GRID = tuple(round(a, 2) for a in np.arange(0.0, 1.0001, 0.05))
DEFAULT_FBETA_GRID = (0.5, 1.0, 2.0)


@dataclass
class FusionParams:
    alpha: float = 0.5
    use_angular: bool = True
    epsilon: float = DEFAULT_EPSILON
    class_weights: dict[int, float] | None = None
    shots: int | None = None
    qseed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DataError(f"alpha must lie in [0,1], got {self.alpha}")
        if self.epsilon <= 0.0:
            raise DataError(f"epsilon must be positive, got {self.epsilon}")


@dataclass
class FusionChannels:
    """Per-sample per-class normalized channels, kept for delta construction."""

    D_norm: np.ndarray  # N x C
    theta_norm: np.ndarray  # N x C
    scores: np.ndarray  # N x C, fused (pre-weighting)
    classes: list[int]


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    macro_precision: float
    macro_recall: float
    weighted_f1: float
    per_class: dict[int, dict[str, float]]
    confusion: np.ndarray
    macro_fbeta: float | None = None
    beta: float | None = None

    def to_dict(self) -> dict:
        d = {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "weighted_f1": self.weighted_f1,
            "per_class": {str(c): v for c, v in self.per_class.items()},
            "confusion": self.confusion.tolist(),
        }
        if self.beta is not None:
            d["beta"] = self.beta
            d["macro_fbeta"] = self.macro_fbeta
        return d


def class_weights_inv_sqrt(class_counts: dict[int, int]) -> dict[int, float]:
    """w_c = sqrt(n_c / max n_c): minority classes get smaller multipliers,
    which favors them under the argmin decision rule."""
    n_max = max(class_counts.values())
    return {c: float(np.sqrt(n / n_max)) for c, n in class_counts.items()}


def fusion_infer(
    F: np.ndarray, medoids: MedoidSet, params: FusionParams
) -> tuple[np.ndarray, FusionChannels]:
    """Predict labels by the minimum fused score against class medoids."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    classes = medoids.classes
    C = len(classes)
    if C < 2:
        raise DataError(f"fusion needs at least 2 classes, got {C}")
    for c, mu in medoids.medoids.items():
        if mu.shape[0] != F.shape[1]:
            raise DataError(
                f"medoid for class {c} has dimension {mu.shape[0]}, features have {F.shape[1]}"
            )

    rng = np.random.default_rng(params.qseed) if params.shots is not None else None
    N = F.shape[0]
    D = np.zeros((N, C))
    theta = np.zeros((N, C))
    for j, c in enumerate(classes):
        D[:, j], theta[:, j], _ = batch_channels(
            F, medoids.medoids[c], shots=params.shots, rng=rng
        )

    Dn = D / (D.sum(axis=1, keepdims=True) + params.epsilon)
    Tn = theta / (theta.sum(axis=1, keepdims=True) + params.epsilon)
    if params.use_angular:
        scores = params.alpha * Dn + (1.0 - params.alpha) * Tn
    else:
        scores = Dn.copy()

    weighted = scores
    if params.class_weights is not None:
        missing = [c for c in classes if c not in params.class_weights]
        if missing:
            raise DataError(f"class weights missing for classes {missing}")
        w = np.array([params.class_weights[c] for c in classes])
        weighted = scores * w

    labels = np.array([classes[j] for j in np.argmin(weighted, axis=1)])
    return labels, FusionChannels(D_norm=Dn, theta_norm=Tn, scores=scores, classes=classes)


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def evaluate(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    averaging: str = "macro",
    beta: float | None = None,
    n_classes: int | None = None,
) -> MetricsReport:
    """Confusion-matrix metrics; zero denominators yield 0."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.size == 0:
        raise DataError("cannot evaluate empty label arrays")
    if y_true.shape != y_pred.shape:
        raise DataError("y_true and y_pred lengths differ")
    if averaging not in ("macro", "weighted"):
        raise DataError(f"unknown averaging mode {averaging!r}")
    if beta is not None and beta <= 0:
        raise DataError(f"beta must be positive, got {beta}")

    C = n_classes if n_classes is not None else int(max(y_true.max(), y_pred.max())) + 1
    if y_true.min() < 0 or y_true.max() >= C or y_pred.min() < 0 or y_pred.max() >= C:
        raise DataError(f"labels out of range for {C} classes")
    confusion = np.zeros((C, C), dtype=int)
    np.add.at(confusion, (y_true, y_pred), 1)

    N = y_true.size
    per_class: dict[int, dict[str, float]] = {}
    precs, recs, f1s, fbetas, supports = [], [], [], [], []
    for c in range(C):
        tp = confusion[c, c]
        fp = confusion[:, c].sum() - tp
        fn = confusion[c, :].sum() - tp
        p = _safe_div(tp, tp + fp)
        r = _safe_div(tp, tp + fn)
        f1 = _safe_div(2 * p * r, p + r)
        per_class[c] = {"precision": p, "recall": r, "f1": f1}
        precs.append(p)
        recs.append(r)
        f1s.append(f1)
        supports.append(confusion[c, :].sum())
        if beta is not None:
            fbetas.append(_safe_div((1 + beta**2) * p * r, beta**2 * p + r))

    supports = np.array(supports, dtype=float)
    pi = supports / N
    macro_fbeta = float(np.mean(fbetas)) if beta is not None else None
    return MetricsReport(
        accuracy=float(np.trace(confusion) / N),
        macro_f1=float(np.mean(f1s)),
        macro_precision=float(np.mean(precs)),
        macro_recall=float(np.mean(recs)),
        weighted_f1=float(np.dot(pi, f1s)),
        per_class=per_class,
        confusion=confusion,
        macro_fbeta=macro_fbeta,
        beta=beta,
    )


def calibrate_alpha(
    F_val: np.ndarray,
    y_val: np.ndarray,
    medoids: MedoidSet,
    grid,
    params: FusionParams,
) -> tuple[float, list[dict]]:
    """Pick alpha maximizing validation macro-F1; alpha*=1 when angular is off."""
    grid = list(grid)
    if not grid:
        raise DataError("alpha grid is empty")
    for a in grid:
        if not 0.0 <= a <= 1.0:
            raise DataError(f"alpha grid value {a} outside [0,1]")
    if not params.use_angular:
        return 1.0, []

    records = []
    best_alpha, best_f1 = None, -np.inf
    for a in grid:
        trial = FusionParams(
            alpha=float(a),
            use_angular=True,
            epsilon=params.epsilon,
            class_weights=params.class_weights,
            shots=params.shots,
            qseed=params.qseed,
        )
        y_hat, _ = fusion_infer(F_val, medoids, trial)
        rep = evaluate(y_val, y_hat, n_classes=len(medoids.classes))
        records.append({"alpha": float(a), "macro_f1": rep.macro_f1, "accuracy": rep.accuracy})
        if rep.macro_f1 > best_f1:  # strict: first grid element wins ties
            best_f1 = rep.macro_f1
            best_alpha = float(a)
    return best_alpha, records


def fbeta_sweep(y_true: np.ndarray, y_pred: np.ndarray, grid) -> list[dict]:
    """Macro F_beta over a grid of reporting betas, predictions held fixed."""
    out = []
    for b in grid:
        if b <= 0:
            raise DataError(f"beta grid value {b} must be positive")
        rep = evaluate(y_true, y_pred, beta=float(b))
        out.append({"beta": float(b), "macro_fbeta": rep.macro_fbeta})
    return out


def alert_rate(y_pred: np.ndarray, positive_class: int = 1) -> float:
    """Fraction of samples predicted positive."""
    y_pred = np.asarray(y_pred)
    if y_pred.size == 0:
        raise DataError("cannot compute alert rate on empty predictions")
    return float(np.mean(y_pred == positive_class))

"""Tabular ingestion, standardization, stratified splitting, and correlation.

All statistics use the population (1/N) convention so that closed-form
hand checks line up exactly with what the code produces.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError


@dataclass
class Dataset:
    """Feature matrix with contiguous integer labels.

    Labels are re-encoded to {0..C-1} in first-appearance order at load
    time; ``label_names`` keeps the original values for reporting.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    class_counts: dict[int, int] = field(default_factory=dict)
    label_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.shape[0] != self.y.shape[0]:
            raise DataError(
                f"row count mismatch: X has {self.X.shape[0]} rows, y has {self.y.shape[0]}"
            )
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature names are not unique")
        if not self.class_counts:
            vals, counts = np.unique(self.y, return_counts=True)
            self.class_counts = {int(v): int(c) for v, c in zip(vals, counts)}

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_counts)

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            X=self.X[idx],
            y=self.y[idx],
            feature_names=list(self.feature_names),
            label_names=dict(self.label_names),
        )


@dataclass
class Scaler:
    """Column-wise standardizer with population variance.

    Zero-variance columns store std 1 so transform maps them to 0 and
    the round trip stays exact.
    """

    means: np.ndarray
    stds: np.ndarray

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.means.shape[0]:
            raise DataError(
                f"scaler expects {self.means.shape[0]} columns, got {X.shape[1]}"
            )
        return X

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X)
        return (X - self.means) / self.stds

    def inverse_transform(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X)
        return X * self.stds + self.means

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(means=np.asarray(d["means"], float), stds=np.asarray(d["stds"], float))


@dataclass
class CorrelationModel:
    """Pearson correlation matrix, optionally with per-feature target correlations."""

    R: np.ndarray
    target_corr: np.ndarray | None = None


def load_csv(path: str, label_column: str) -> Dataset:
    """Load a headered CSV, encoding labels to {0..C-1} in first-appearance order."""
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}")
    except pd.errors.EmptyDataError:
        raise DataError(f"empty data file: {path}")
    if label_column not in df.columns:
        raise DataError(f"label column {label_column!r} not present in {path}")
    if len(df) == 0:
        raise DataError(f"no data rows in {path}")

    feature_cols = [c for c in df.columns if c != label_column]
    if not feature_cols:
        raise DataError(f"no feature columns in {path}")
    X = np.empty((len(df), len(feature_cols)), dtype=float)
    for j, col in enumerate(feature_cols):
        values = pd.to_numeric(df[col], errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise DataError(
                f"non-numeric value in column {col!r}, row {int(bad[0])}: "
                f"{df[col].iloc[int(bad[0])]!r}"
            )
        X[:, j] = values

    raw_labels = df[label_column].tolist()
    encoding: dict = {}
    y = np.empty(len(raw_labels), dtype=int)
    for i, lab in enumerate(raw_labels):
        if lab not in encoding:
            encoding[lab] = len(encoding)
        y[i] = encoding[lab]
    label_names = {v: str(k) for k, v in encoding.items()}
    return Dataset(X=X, y=y, feature_names=feature_cols, label_names=label_names)


def _split_sizes(n: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    # Round val/test half-up, train absorbs the remainder; this reproduces
    # published per-dataset split sizes that plain largest-remainder does not.
    f_tr, f_val, f_te = fractions
    n_val = int(np.floor(n * f_val + 0.5))
    n_te = int(np.floor(n * f_te + 0.5))
    return n - n_val - n_te, n_val, n_te


def _allocate(class_sizes: np.ndarray, frac: float, total: int) -> np.ndarray:
    """Largest-remainder allocation of `total` seats across classes."""
    exact = class_sizes * frac
    out = np.floor(exact).astype(int)
    remainder = exact - out
    short = total - int(out.sum())
    # larger remainder first; lower class index breaks ties
    order = sorted(range(len(out)), key=lambda c: (-remainder[c], c))
    for c in order[:short]:
        out[c] += 1
    return out


def stratified_split(
    ds: Dataset, fractions: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic stratified train/val/test split.

    Per-class counts differ from exact proportionality by at most one.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise DataError(f"fractions must be three positive values, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1, got {sum(fractions)}")

    classes = sorted(ds.class_counts)
    sizes = np.array([ds.class_counts[c] for c in classes], dtype=float)
    if sizes.min() < 3:
        small = classes[int(np.argmin(sizes))]
        raise DataError(
            f"class {small} has {int(sizes.min())} rows, fewer than the 3 splits"
        )

    n = ds.n_samples
    _, n_val, n_te = _split_sizes(n, fractions)
    val_c = _allocate(sizes, fractions[1], n_val)
    te_c = _allocate(sizes, fractions[2], n_te)

    rng = np.random.default_rng(seed)
    tr_idx, val_idx, te_idx = [], [], []
    for ci, c in enumerate(classes):
        idx = np.flatnonzero(ds.y == c)
        idx = idx[rng.permutation(idx.size)]
        nv, nt = int(val_c[ci]), int(te_c[ci])
        val_idx.append(idx[:nv])
        te_idx.append(idx[nv : nv + nt])
        tr_idx.append(idx[nv + nt :])
    tr = np.sort(np.concatenate(tr_idx))
    val = np.sort(np.concatenate(val_idx))
    te = np.sort(np.concatenate(te_idx))
    return ds.subset(tr), ds.subset(val), ds.subset(te)


def fit_scaler(X: np.ndarray) -> Scaler:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise DataError("cannot fit scaler on an empty matrix")
    means = X.mean(axis=0)
    stds = X.std(axis=0)  # population std
    stds = np.where(stds > 0.0, stds, 1.0)
    return Scaler(means=means, stds=stds)


def correlation(ds: Dataset, include_target: bool = False) -> CorrelationModel:
    """Population Pearson correlations between features (and optionally vs labels).

    Zero-variance columns yield correlation 0 everywhere, including the diagonal.
    """
    if ds.n_samples < 2:
        raise DataError("correlation requires at least 2 rows")
    X = ds.X
    n = X.shape[0]
    centered = X - X.mean(axis=0)
    stds = X.std(axis=0)
    safe = np.where(stds > 0.0, stds, 1.0)
    Z = centered / safe
    R = (Z.T @ Z) / n
    constant = stds == 0.0
    R[constant, :] = 0.0
    R[:, constant] = 0.0
    np.fill_diagonal(R, np.where(constant, 0.0, 1.0))
    R = np.clip(R, -1.0, 1.0)

    target_corr = None
    if include_target:
        yv = ds.y.astype(float)
        ys = yv.std()
        if ys > 0.0:
            t = ((yv - yv.mean()) / ys) @ Z / n
        else:
            t = np.zeros(X.shape[1])
        t[constant] = 0.0
        target_corr = np.abs(np.clip(t, -1.0, 1.0))
    return CorrelationModel(R=R, target_corr=target_corr)

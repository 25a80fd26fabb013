"""Contrastive margin features from the fusion channels.

Binary: class-1 minus class-0 normalized channels. Multiclass: runner-up
minus best by fused score, ties broken to the lowest class index.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import Scaler, fit_scaler
from .errors import DataError
from .fusion import FusionChannels


@dataclass
class DeltaFeatures:
    Z: np.ndarray  # N x m
    scaler: Scaler | None = None
    columns: tuple[str, ...] = ("delta_d", "delta_theta")


def build_deltas(
    channels: FusionChannels, C: int, include_fused: bool = False
) -> DeltaFeatures:
    if C < 2:
        raise DataError(f"delta construction needs C >= 2, got {C}")
    Dn, Tn, S = channels.D_norm, channels.theta_norm, channels.scores
    if Dn.shape[1] != C:
        raise DataError(f"channels cover {Dn.shape[1]} classes, expected {C}")

    if C == 2:
        delta_d = Dn[:, 1] - Dn[:, 0]
        delta_t = Tn[:, 1] - Tn[:, 0]
        delta_s = S[:, 1] - S[:, 0]
    else:
        n = Dn.shape[0]
        order = np.argsort(S, axis=1, kind="stable")
        best = order[:, 0]
        runner = order[:, 1]
        rows = np.arange(n)
        delta_d = Dn[rows, runner] - Dn[rows, best]
        delta_t = Tn[rows, runner] - Tn[rows, best]
        delta_s = S[rows, runner] - S[rows, best]

    cols = [delta_d, delta_t]
    names = ["delta_d", "delta_theta"]
    if include_fused:
        cols.append(delta_s)
        names.append("delta_s")
    return DeltaFeatures(Z=np.column_stack(cols), columns=tuple(names))


def standardize_deltas(
    train: DeltaFeatures, *others: DeltaFeatures
) -> tuple[DeltaFeatures, ...]:
    """Standardize all splits with statistics fit on the training rows only."""
    if train.Z.shape[0] == 0:
        raise DataError("no training rows to fit delta scaler on")
    scaler = fit_scaler(train.Z)
    out = [DeltaFeatures(Z=scaler.transform(train.Z), scaler=scaler, columns=train.columns)]
    for d in others:
        if d.Z.shape[1] != train.Z.shape[1]:
            raise DataError(
                f"delta dimension mismatch: {d.Z.shape[1]} vs train {train.Z.shape[1]}"
            )
        out.append(DeltaFeatures(Z=scaler.transform(d.Z), scaler=scaler, columns=d.columns))
    return tuple(out)


def export_csv(path: str, deltas: DeltaFeatures, y: np.ndarray) -> None:
    y = np.asarray(y, dtype=int)
    if y.shape[0] != deltas.Z.shape[0]:
        raise DataError("label count does not match delta rows")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(deltas.columns) + ["label"])
        for row, lab in zip(deltas.Z, y):
            writer.writerow([repr(float(v)) for v in row] + [int(lab)])


def load_csv(path: str) -> tuple[DeltaFeatures, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label":
            raise DataError(f"{path} is not a delta CSV (expected trailing label column)")
        rows, labels = [], []
        for rec in reader:
            rows.append([float(v) for v in rec[:-1]])
            labels.append(int(rec[-1]))
    if not rows:
        raise DataError(f"no rows in {path}")
    return (
        DeltaFeatures(Z=np.asarray(rows, float), columns=tuple(header[:-1])),
        np.asarray(labels, int),
    )

"""Anchor-centered correlation groups and the nonlinear feature transforms.

Each feature acts as an anchor with a membership list of its most
correlated neighbors; features are l2 aggregations of correlation-weighted
subvectors. Tie-breaking is everywhere a stable sort with ascending
feature index as the secondary key.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import CorrelationModel
from .errors import DataError


@dataclass
class AnchorModel:
    """Ordered anchors with per-anchor membership lists and correlation weights."""

    anchors: list[int]
    membership: dict[int, list[int]]  # anchor -> ordered members, anchor first
    weights: dict[tuple[int, int], float]  # (anchor, member) -> rho

    def weight_vector(self, a: int, members: list[int]) -> np.ndarray:
        return np.array([self.weights[(a, f)] for f in members], dtype=float)

    def to_dict(self) -> dict:
        return {
            "anchors": self.anchors,
            "membership": {str(a): m for a, m in self.membership.items()},
            "weights": {f"{a},{f}": w for (a, f), w in self.weights.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnchorModel":
        weights = {}
        for key, w in d["weights"].items():
            a, f = key.split(",")
            weights[(int(a), int(f))] = float(w)
        return cls(
            anchors=[int(a) for a in d["anchors"]],
            membership={int(a): [int(f) for f in m] for a, m in d["membership"].items()},
            weights=weights,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class CgrConfig:
    """Assignment of a size-k, anchor-first subset of each membership list."""

    k: int
    subsets: dict[int, list[int]]  # anchor -> ordered subset, anchor first

    def validate_against(self, model: AnchorModel) -> None:
        for a in model.anchors:
            if a not in self.subsets:
                raise DataError(f"config missing subset for anchor {a}")
        for a, subset in self.subsets.items():
            if a not in model.membership:
                raise DataError(f"config references unknown anchor {a}")
            if not subset or subset[0] != a:
                raise DataError(f"subset for anchor {a} must list the anchor first")
            extra = set(subset) - set(model.membership[a])
            if extra:
                raise DataError(f"subset for anchor {a} not within membership: {sorted(extra)}")

    def to_dict(self) -> dict:
        return {"k": self.k, "subsets": {str(a): s for a, s in self.subsets.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "CgrConfig":
        return cls(
            k=int(d["k"]),
            subsets={int(a): [int(f) for f in s] for a, s in d["subsets"].items()},
        )


@dataclass
class CgrFeatures:
    F: np.ndarray  # N x K, nonnegative
    anchor_order: list[int]


def build_anchor_model(
    corr: CorrelationModel, m: int, max_anchors: int | None = None
) -> AnchorModel:
    """Rank anchors by target correlation and pick top-m neighbors per anchor."""
    if m < 0:
        raise DataError(f"m must be nonnegative, got {m}")
    M = corr.R.shape[0]
    if m >= M:
        raise DataError(f"m={m} must be smaller than the feature count {M}")

    features = list(range(M))
    if corr.target_corr is not None:
        anchors = sorted(features, key=lambda f: (-corr.target_corr[f], f))
    else:
        anchors = features
    if max_anchors is not None:
        anchors = anchors[:max_anchors]

    membership: dict[int, list[int]] = {}
    weights: dict[tuple[int, int], float] = {}
    for a in anchors:
        others = [f for f in features if f != a]
        others.sort(key=lambda f: (-abs(corr.R[a, f]), f))
        members = [a] + others[:m]
        membership[a] = members
        for f in members:
            rho = 1.0 if f == a else float(corr.R[a, f])
            if not np.isfinite(rho):
                rho = 0.0
            weights[(a, f)] = rho
    return AnchorModel(anchors=anchors, membership=membership, weights=weights)


def anchor_feature_vector(
    X: np.ndarray, a: int, subset: list[int], weights: dict[tuple[int, int], float]
) -> np.ndarray:
    """u_a(i) = sqrt(sum_f (rho_{a,f} * x_{i,f})^2) over the subset."""
    if not subset:
        raise DataError(f"empty subset for anchor {a}")
    X = np.asarray(X, dtype=float)
    for f in subset:
        if f < 0 or f >= X.shape[1]:
            raise DataError(f"anchor {a}: member {f} is not a valid column")
    rho = np.array([weights[(a, f)] for f in subset], dtype=float)
    sub = X[:, subset] * rho
    return np.sqrt(np.sum(sub * sub, axis=1))


def build_feature_matrix(
    X: np.ndarray, anchor_model: AnchorModel, config: CgrConfig
) -> CgrFeatures:
    config.validate_against(anchor_model)
    X = np.asarray(X, dtype=float)
    K = len(anchor_model.anchors)
    F = np.zeros((X.shape[0], K))
    for j, a in enumerate(anchor_model.anchors):
        F[:, j] = anchor_feature_vector(X, a, config.subsets[a], anchor_model.weights)
    return CgrFeatures(F=F, anchor_order=list(anchor_model.anchors))


def group_strength(anchor_model: AnchorModel, a: int) -> float:
    """g_a: l2 norm of the absolute member correlations, anchor included."""
    if a not in anchor_model.membership:
        raise DataError(f"{a} is not an anchor")
    rho = anchor_model.weight_vector(a, anchor_model.membership[a])
    return float(np.sqrt(np.sum(np.abs(rho) ** 2)))


def multiplicative_feature(X: np.ndarray, anchor_model: AnchorModel, a: int) -> np.ndarray:
    """z_a(x) = g_a * ||x restricted to the membership of a||_2."""
    if a not in anchor_model.membership:
        raise DataError(f"{a} is not an anchor")
    X = np.asarray(X, dtype=float)
    members = anchor_model.membership[a]
    h = np.sqrt(np.sum(X[:, members] ** 2, axis=1))
    return group_strength(anchor_model, a) * h


def default_config(anchor_model: AnchorModel, k: int) -> CgrConfig:
    """Anchor plus the first k-1 members of each membership list."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    subsets = {}
    for a in anchor_model.anchors:
        members = anchor_model.membership[a]
        subsets[a] = members[: min(k, len(members))]
    return CgrConfig(k=k, subsets=subsets)


def z_feature_matrix(X: np.ndarray, anchor_model: AnchorModel) -> CgrFeatures:
    """Stacked multiplicative z_a features; alternative embedding to phi."""
    X = np.asarray(X, dtype=float)
    K = len(anchor_model.anchors)
    F = np.zeros((X.shape[0], K))
    for j, a in enumerate(anchor_model.anchors):
        F[:, j] = multiplicative_feature(X, anchor_model, a)
    return CgrFeatures(F=F, anchor_order=list(anchor_model.anchors))

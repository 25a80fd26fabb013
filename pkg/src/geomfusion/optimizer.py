"""Coordinate-descent search over anchor subsets, maximizing validation macro-F1.

One anchor's subset is updated at a time, accepting only strict
improvements; the best configuration at size k seeds the search at k+1.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cgr import AnchorModel, CgrConfig, build_feature_matrix, default_config
from .data import Dataset, fit_scaler
from .errors import DataError
from .fusion import FusionParams, MetricsReport, evaluate, fusion_infer
from .medoid import DEFAULT_SUBSAMPLE_CAP, fit_class_medoids

DEFAULT_PASSES = 3
DEFAULT_BUDGET = 200
DEFAULT_K_RANGE = (2, 5)


@dataclass
class SearchEntry:
    k: int
    best_config: CgrConfig
    best_f1: float
    metrics: MetricsReport
    passes_used: int
    evaluations: int


@dataclass
class SearchRecord:
    entries: dict[int, SearchEntry] = field(default_factory=dict)
    f1_trace: list[float] = field(default_factory=list)  # incumbent after each accepted move

    def best_k(self) -> int:
        # highest validation macro-F1; smaller k breaks ties
        return min(self.entries, key=lambda k: (-self.entries[k].best_f1, k))

    def ranked_k(self) -> list[int]:
        return sorted(self.entries, key=lambda k: (-self.entries[k].best_f1, k))

    def to_dict(self) -> dict:
        return {
            "entries": {
                str(k): {
                    "k": e.k,
                    "best_config": e.best_config.to_dict(),
                    "best_f1": e.best_f1,
                    "metrics": e.metrics.to_dict(),
                    "passes_used": e.passes_used,
                    "evaluations": e.evaluations,
                }
                for k, e in self.entries.items()
            },
            "f1_trace": self.f1_trace,
        }


@dataclass
class MedoidParams:
    m_max: int = DEFAULT_SUBSAMPLE_CAP
    seed: int = 0


def candidate_subsets(
    a: int,
    members: list[int],
    k: int,
    budget: int | None = None,
    seed: int = 0,
) -> list[list[int]]:
    """All anchor-first size-k subsets of the membership, optionally subsampled.

    Non-anchor members are taken in membership order, so enumeration (and
    the budgeted subsample under a fixed seed) is deterministic.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    others = [f for f in members if f != a]
    if k - 1 >= len(others):
        return [[a] + others]
    subsets = [[a] + list(combo) for combo in itertools.combinations(others, k - 1)]
    if budget is not None and len(subsets) > budget:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(subsets), size=budget, replace=False))
        subsets = [subsets[i] for i in keep]
    return subsets


def score_config(
    config: CgrConfig,
    train: Dataset,
    val: Dataset,
    anchor_model: AnchorModel,
    fusion_params: FusionParams,
    medoid_params: MedoidParams,
) -> tuple[float, MetricsReport]:
    """Features under the config, train-fitted scaler and medoids, val macro-F1."""
    F_tr = build_feature_matrix(train.X, anchor_model, config).F
    F_val = build_feature_matrix(val.X, anchor_model, config).F
    scaler = fit_scaler(F_tr)
    F_tr = scaler.transform(F_tr)
    F_val = scaler.transform(F_val)
    medoids = fit_class_medoids(
        F_tr, train.y, m_max=medoid_params.m_max, seed=medoid_params.seed
    )
    y_hat, _ = fusion_infer(F_val, medoids, fusion_params)
    report = evaluate(val.y, y_hat, n_classes=len(medoids.classes))
    return report.macro_f1, report


def normalize_config(
    prev: CgrConfig, k: int, anchor_model: AnchorModel
) -> CgrConfig:
    """Resize each subset to k: truncate from the tail, pad with the
    highest-|rho| members not already present (membership order)."""
    subsets = {}
    for a in anchor_model.anchors:
        subset = list(prev.subsets.get(a, [a]))
        if subset[0] != a:
            subset = [a] + [f for f in subset if f != a]
        members = anchor_model.membership[a]
        target = min(k, len(members))
        if len(subset) > target:
            subset = subset[:target]
        else:
            present = set(subset)
            for f in members:
                if len(subset) >= target:
                    break
                if f not in present:
                    subset.append(f)
                    present.add(f)
        subsets[a] = subset
    return CgrConfig(k=k, subsets=subsets)


def coordinate_descent(
    train: Dataset,
    val: Dataset,
    anchor_model: AnchorModel,
    k_range: tuple[int, int] = DEFAULT_K_RANGE,
    max_passes: int = DEFAULT_PASSES,
    budget: int | None = DEFAULT_BUDGET,
    seed: int = 0,
    fusion_params: FusionParams | None = None,
    medoid_params: MedoidParams | None = None,
) -> SearchRecord:
    k_min, k_max = k_range
    if k_min > k_max:
        raise DataError(f"invalid k range [{k_min}, {k_max}]")
    if max_passes < 1:
        raise DataError(f"max_passes must be >= 1, got {max_passes}")
    if not anchor_model.anchors:
        raise DataError("anchor model has no anchors")
    fusion_params = fusion_params or FusionParams()
    medoid_params = medoid_params or MedoidParams()

    record = SearchRecord()
    prev_config: CgrConfig | None = None
    for k in range(k_min, k_max + 1):
        if prev_config is not None:
            config = normalize_config(prev_config, k, anchor_model)
        else:
            config = default_config(anchor_model, k)

        best_f1, best_metrics = score_config(
            config, train, val, anchor_model, fusion_params, medoid_params
        )
        record.f1_trace.append(best_f1)
        evaluations = 1
        passes_used = 0
        for _ in range(max_passes):
            passes_used += 1
            improved = False
            for a in anchor_model.anchors:
                candidates = candidate_subsets(
                    a, anchor_model.membership[a], k, budget=budget, seed=seed
                )
                best_subset = config.subsets[a]
                best_a_f1 = best_f1
                best_a_metrics = best_metrics
                for subset in candidates:
                    if subset == config.subsets[a]:
                        continue
                    trial = CgrConfig(
                        k=k, subsets={**config.subsets, a: subset}
                    )
                    f1, metrics = score_config(
                        trial, train, val, anchor_model, fusion_params, medoid_params
                    )
                    evaluations += 1
                    if f1 > best_a_f1:
                        best_a_f1, best_subset, best_a_metrics = f1, subset, metrics
                if best_subset != config.subsets[a]:
                    config = CgrConfig(k=k, subsets={**config.subsets, a: best_subset})
                    best_f1, best_metrics = best_a_f1, best_a_metrics
                    record.f1_trace.append(best_f1)
                    improved = True
            if not improved:
                break

        record.entries[k] = SearchEntry(
            k=k,
            best_config=config,
            best_f1=best_f1,
            metrics=best_metrics,
            passes_used=passes_used,
            evaluations=evaluations,
        )
        prev_config = config
    return record

"""Persistence of fusion and VQC model bundles, and scoring of new records.

All artifacts are versioned JSON with plain float arrays; writes go to a
temp file and are atomically renamed.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .cgr import AnchorModel, CgrConfig, build_feature_matrix, z_feature_matrix
from .data import Dataset, Scaler, fit_scaler
from .errors import ArtifactError, DataError
from .fusion import (
    DEFAULT_ALPHA_GRID,
    FusionParams,
    calibrate_alpha,
    evaluate,
    fusion_infer,
)
from .medoid import MedoidSet, fit_class_medoids
from .optimizer import MedoidParams, SearchRecord

FORMAT_VERSION = 1


def write_json(path: str, payload: dict) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=1)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ArtifactError(f"artifact not found: {path}")
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"malformed artifact {path}: {exc}")


def _check_version(payload: dict, path: str) -> None:
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ArtifactError(
            f"{path}: unsupported artifact format version {version!r} "
            f"(this build reads version {FORMAT_VERSION})"
        )


@dataclass
class FusionArtifact:
    k: int
    config: CgrConfig
    anchor_model: AnchorModel
    scaler: Scaler
    medoids: MedoidSet
    alpha_star: float
    use_angular: bool
    epsilon: float
    feature_names: list[str]
    class_weights: dict[int, float] | None = None
    metrics: dict = field(default_factory=dict)
    label_names: dict[int, str] = field(default_factory=dict)
    seed: int | None = None
    embedding: str = "phi"  # "phi" (subset l2 features) or "z" (strength x activation)

    def fusion_params(self, shots: int | None = None, qseed: int | None = None) -> FusionParams:
        return FusionParams(
            alpha=self.alpha_star,
            use_angular=self.use_angular,
            epsilon=self.epsilon,
            class_weights=self.class_weights,
            shots=shots,
            qseed=qseed,
        )

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "fusion",
            "k": self.k,
            "config": self.config.to_dict(),
            "anchor_model": self.anchor_model.to_dict(),
            "scaler": self.scaler.to_dict(),
            "medoids": self.medoids.to_dict(),
            "alpha_star": self.alpha_star,
            "use_angular": self.use_angular,
            "epsilon": self.epsilon,
            "feature_names": self.feature_names,
            "class_weights": (
                None
                if self.class_weights is None
                else {str(c): w for c, w in self.class_weights.items()}
            ),
            "metrics": self.metrics,
            "label_names": {str(c): n for c, n in self.label_names.items()},
            "seed": self.seed,
            "embedding": self.embedding,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusionArtifact":
        cw = d.get("class_weights")
        return cls(
            k=int(d["k"]),
            config=CgrConfig.from_dict(d["config"]),
            anchor_model=AnchorModel.from_dict(d["anchor_model"]),
            scaler=Scaler.from_dict(d["scaler"]),
            medoids=MedoidSet.from_dict(d["medoids"]),
            alpha_star=float(d["alpha_star"]),
            use_angular=bool(d["use_angular"]),
            epsilon=float(d["epsilon"]),
            feature_names=list(d["feature_names"]),
            class_weights=None if cw is None else {int(c): float(w) for c, w in cw.items()},
            metrics=d.get("metrics", {}),
            label_names={int(c): n for c, n in d.get("label_names", {}).items()},
            seed=d.get("seed"),
            embedding=d.get("embedding", "phi"),
        )


def save_fusion_artifact(path: str, artifact: FusionArtifact) -> None:
    write_json(path, artifact.to_dict())


def load_fusion_artifact(path: str) -> FusionArtifact:
    payload = read_json(path)
    _check_version(payload, path)
    if payload.get("kind") != "fusion":
        raise ArtifactError(f"{path} is not a fusion artifact (kind={payload.get('kind')!r})")
    return FusionArtifact.from_dict(payload)


def save_vqc_artifact(path: str, payload: dict) -> None:
    if payload.get("kind") != "vqc":
        raise ArtifactError("payload is not a VQC artifact bundle")
    write_json(path, payload)


def load_vqc_artifact(path: str) -> dict:
    payload = read_json(path)
    _check_version(payload, path)
    if payload.get("kind") != "vqc":
        raise ArtifactError(f"{path} is not a VQC artifact (kind={payload.get('kind')!r})")
    return payload


def _embed(
    X: np.ndarray, anchor_model: AnchorModel, config: CgrConfig, embedding: str
) -> np.ndarray:
    if embedding == "z":
        return z_feature_matrix(X, anchor_model).F
    if embedding == "phi":
        return build_feature_matrix(X, anchor_model, config).F
    raise ArtifactError(f"unknown embedding {embedding!r}")


def build_fusion_artifact(
    k: int,
    config: CgrConfig,
    train: Dataset,
    val: Dataset,
    test: Dataset,
    anchor_model: AnchorModel,
    base_params: FusionParams,
    medoid_params: MedoidParams,
    alpha_grid=DEFAULT_ALPHA_GRID,
    seed: int | None = None,
    embedding: str = "phi",
) -> FusionArtifact:
    """Refit scaler and medoids on train, calibrate alpha, evaluate val/test."""
    F_tr = _embed(train.X, anchor_model, config, embedding)
    scaler = fit_scaler(F_tr)
    F_tr = scaler.transform(F_tr)
    F_val = scaler.transform(_embed(val.X, anchor_model, config, embedding))
    F_te = scaler.transform(_embed(test.X, anchor_model, config, embedding))
    medoids = fit_class_medoids(
        F_tr, train.y, m_max=medoid_params.m_max, seed=medoid_params.seed
    )
    alpha_star, alpha_records = calibrate_alpha(
        F_val, val.y, medoids, alpha_grid, base_params
    )
    params = FusionParams(
        alpha=alpha_star,
        use_angular=base_params.use_angular,
        epsilon=base_params.epsilon,
        class_weights=base_params.class_weights,
    )
    C = len(medoids.classes)
    val_hat, _ = fusion_infer(F_val, medoids, params)
    te_hat, _ = fusion_infer(F_te, medoids, params)
    val_rep = evaluate(val.y, val_hat, n_classes=C)
    te_rep = evaluate(test.y, te_hat, n_classes=C)
    return FusionArtifact(
        k=k,
        config=config,
        anchor_model=anchor_model,
        scaler=scaler,
        medoids=medoids,
        alpha_star=alpha_star,
        use_angular=base_params.use_angular,
        epsilon=base_params.epsilon,
        feature_names=list(train.feature_names),
        class_weights=base_params.class_weights,
        metrics={
            "val": val_rep.to_dict(),
            "test": te_rep.to_dict(),
            "alpha_records": alpha_records,
        },
        label_names=dict(train.label_names),
        seed=seed,
        embedding=embedding,
    )


def persist_top_r(
    search_record: SearchRecord,
    train: Dataset,
    val: Dataset,
    test: Dataset,
    anchor_model: AnchorModel,
    r: int = 2,
    out_dir: str = ".",
    base_params: FusionParams | None = None,
    medoid_params: MedoidParams | None = None,
    alpha_grid=DEFAULT_ALPHA_GRID,
    seed: int | None = None,
) -> list[str]:
    """Persist the top-r fusion models by validation macro-F1, plus a best alias."""
    if r < 1:
        raise DataError(f"r must be >= 1, got {r}")
    if not search_record.entries:
        raise DataError("search record is empty")
    base_params = base_params or FusionParams()
    medoid_params = medoid_params or MedoidParams()

    paths = []
    top = search_record.ranked_k()[:r]
    for k in top:
        entry = search_record.entries[k]
        artifact = build_fusion_artifact(
            k, entry.best_config, train, val, test, anchor_model,
            base_params, medoid_params, alpha_grid=alpha_grid, seed=seed,
        )
        path = os.path.join(out_dir, f"fusion_k{k}.json")
        save_fusion_artifact(path, artifact)
        paths.append(path)
    write_json(
        os.path.join(out_dir, "best_alias.json"),
        {
            "format_version": FORMAT_VERSION,
            "kind": "alias",
            "best": os.path.basename(paths[0]),
            "ranked_k": top,
            "seed": seed,
        },
    )
    return paths


def score_features(
    artifact: FusionArtifact, X: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Score raw feature rows: (labels, per-class scores, best-vs-runner-up margins)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != len(artifact.feature_names):
        raise ArtifactError(
            f"record has {X.shape[1]} features, artifact expects "
            f"{len(artifact.feature_names)}"
        )
    F = _embed(X, artifact.anchor_model, artifact.config, artifact.embedding)
    F = artifact.scaler.transform(F)
    labels, channels = fusion_infer(F, artifact.medoids, artifact.fusion_params())
    scores = channels.scores
    if artifact.class_weights is not None:
        w = np.array([artifact.class_weights[c] for c in channels.classes])
        scores = scores * w
    part = np.sort(scores, axis=1)
    margins = part[:, 1] - part[:, 0]
    return labels, scores, margins


def score_record(artifact: FusionArtifact, x) -> tuple[int, np.ndarray, float]:
    """Score one record given as a mapping feature->value or a plain vector."""
    if isinstance(x, dict):
        missing = [f for f in artifact.feature_names if f not in x]
        if missing:
            raise ArtifactError(f"record is missing feature column(s): {missing}")
        vec = np.array([float(x[f]) for f in artifact.feature_names])
    else:
        vec = np.asarray(x, dtype=float).ravel()
    labels, scores, margins = score_features(artifact, vec[None, :])
    return int(labels[0]), scores[0], float(margins[0])

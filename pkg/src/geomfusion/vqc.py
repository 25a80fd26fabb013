"""Variational classifier on delta features: angle encoding, re-uploading
ansatz, parity/direct decoding, SPSA training, and K-fold model selection.

All forward passes are exact statevector evaluations, batched across
samples; SPSA needs only two loss evaluations per step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Scaler, fit_scaler
from .errors import DataError
from .fusion import MetricsReport, evaluate
from .quantum import _cx, _cz, _ry, _rz

DEFAULT_THRESHOLD_GRID = tuple(round(t, 2) for t in np.arange(0.05, 0.9501, 0.05))
DEFAULT_HP_SPACE = tuple(
    {"reps": L, "reupload": up} for L in (1, 2, 3) for up in (True, False)
)
PROB_FLOOR = 1e-10


@dataclass
class VqcSpec:
    n_qubits: int
    reps: int
    reupload: bool
    mapping: str  # "parity" or "direct"
    m_inputs: int
    z_max: float = 3.0
    feature_scales: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n_qubits < 1 or self.reps < 1:
            raise DataError("n_qubits and reps must be >= 1")
        if self.mapping not in ("parity", "direct"):
            raise DataError(f"unknown mapping {self.mapping!r}")
        if self.z_max <= 0:
            raise DataError(f"z_max must be positive, got {self.z_max}")
        if self.feature_scales is None:
            self.feature_scales = tuple(1.0 for _ in range(self.m_inputs))
        if len(self.feature_scales) != self.m_inputs:
            raise DataError("feature_scales length must match m_inputs")
        if any(l <= 0 for l in self.feature_scales):
            raise DataError("feature_scales must be positive")

    @property
    def n_params(self) -> int:
        return 2 * self.reps * self.n_qubits

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "reps": self.reps,
            "reupload": self.reupload,
            "mapping": self.mapping,
            "m_inputs": self.m_inputs,
            "z_max": self.z_max,
            "feature_scales": list(self.feature_scales),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VqcSpec":
        return cls(
            n_qubits=int(d["n_qubits"]),
            reps=int(d["reps"]),
            reupload=bool(d["reupload"]),
            mapping=str(d["mapping"]),
            m_inputs=int(d["m_inputs"]),
            z_max=float(d["z_max"]),
            feature_scales=tuple(float(v) for v in d["feature_scales"]),
        )


@dataclass
class SpsaConfig:
    steps: int = 300
    batch: int = 64
    a: float = 0.2
    c: float = 0.15
    alpha: float = 0.602
    gamma: float = 0.101
    clip_norm: float = 1.0
    patience: int = 25
    tolerance: float = 1e-4
    init_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0:
            raise DataError("SPSA gains a and c must be positive")
        if not (0 < self.alpha <= 1 and 0 < self.gamma <= 1):
            raise DataError("SPSA exponents must lie in (0, 1]")
        if self.steps < 1 or self.batch < 1 or self.patience < 1:
            raise DataError("steps, batch, and patience must be >= 1")


@dataclass
class VqcCircuit:
    """Gate program for the re-uploading ansatz; evaluates batched states."""

    spec: VqcSpec

    def states(self, theta: np.ndarray, A: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.spec.n_params,):
            raise DataError(
                f"theta must have {self.spec.n_params} entries, got {theta.shape}"
            )
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[1] != self.spec.m_inputs:
            raise DataError(
                f"angle matrix has {A.shape[1]} columns, spec expects {self.spec.m_inputs}"
            )
        n = self.spec.n_qubits
        N = A.shape[0]
        amps = np.zeros((N, 2**n), dtype=complex)
        amps[:, 0] = 1.0
        th = theta.reshape(self.spec.reps, n, 2)
        for r in range(self.spec.reps):
            if r == 0 or self.spec.reupload:
                for j in range(self.spec.m_inputs):
                    amps = _ry(amps, n, (j % n), A[:, j])
            if n >= 2:
                for q in range(n - 1):
                    amps = _cx(amps, n, q, q + 1)
                for q in range(n - 1):
                    amps = _cz(amps, n, q, q + 1)
            for q in range(n):
                amps = _ry(amps, n, q, th[r, q, 0])
                amps = _rz(amps, n, q, th[r, q, 1])
        return amps


def build_circuit(spec: VqcSpec) -> VqcCircuit:
    return VqcCircuit(spec=spec)


def angle_map(
    Z: np.ndarray, scaler: Scaler, z_max: float, feature_scales=None
) -> np.ndarray:
    """Standardize with the train-fitted scaler, clip, and map to [-pi, pi]."""
    if z_max <= 0:
        raise DataError(f"z_max must be positive, got {z_max}")
    Zs = scaler.transform(Z)
    A = np.clip(Zs, -z_max, z_max) * (math.pi / z_max)
    if feature_scales is not None:
        lam = np.asarray(feature_scales, dtype=float)
        if lam.shape[0] != A.shape[1]:
            raise DataError("feature_scales length must match feature count")
        if np.any(lam <= 0):
            raise DataError("feature_scales must be positive")
        A = A * lam
    return A


def _parity_mask(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    bits = ((idx[:, None] >> np.arange(n)) & 1).sum(axis=1)
    return (bits % 2).astype(bool)


def forward_probs(
    circuit: VqcCircuit, theta: np.ndarray, A: np.ndarray, C: int
) -> np.ndarray:
    """Exact class probabilities per sample; rows sum to 1."""
    spec = circuit.spec
    if spec.mapping == "parity" and C != 2:
        raise DataError("parity mapping requires exactly 2 classes")
    if spec.mapping == "direct" and 2**spec.n_qubits < C:
        raise DataError(
            f"direct mapping needs 2^n >= C, got n={spec.n_qubits}, C={C}"
        )
    amps = circuit.states(theta, A)
    basis = np.abs(amps) ** 2
    if spec.mapping == "parity":
        odd = _parity_mask(spec.n_qubits)
        p1 = basis[:, odd].sum(axis=1)
        P = np.column_stack((1.0 - p1, p1))
    else:
        P = basis[:, :C]
        P = P / np.maximum(P.sum(axis=1, keepdims=True), PROB_FLOOR)
    return np.clip(P, 0.0, 1.0)


def cross_entropy(P: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y, dtype=int)
    picked = P[np.arange(y.size), y]
    return float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))


def spsa_train(
    A: np.ndarray,
    y: np.ndarray,
    spec: VqcSpec,
    cfg: SpsaConfig,
    n_classes: int | None = None,
) -> tuple[np.ndarray, dict]:
    """Minibatch SPSA with gradient clipping and patience-based early stop."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    y = np.asarray(y, dtype=int)
    if A.shape[0] == 0:
        raise DataError("no training data")
    C = n_classes if n_classes is not None else int(y.max()) + 1
    circuit = build_circuit(spec)
    rng = np.random.default_rng(cfg.seed)
    theta = rng.normal(0.0, cfg.init_sigma, size=spec.n_params)

    N = A.shape[0]
    batch = min(cfg.batch, N)
    best_loss = np.inf
    no_improve = 0
    losses = []
    steps_run = 0
    for t in range(1, cfg.steps + 1):
        steps_run = t
        a_t = cfg.a / t**cfg.alpha
        c_t = cfg.c / t**cfg.gamma
        idx = rng.choice(N, size=batch, replace=False)
        delta = rng.integers(0, 2, size=spec.n_params) * 2 - 1
        f_plus = cross_entropy(forward_probs(circuit, theta + c_t * delta, A[idx], C), y[idx])
        f_minus = cross_entropy(forward_probs(circuit, theta - c_t * delta, A[idx], C), y[idx])
        # Rademacher perturbation: elementwise inverse equals delta itself
        ghat = ((f_plus - f_minus) / (2.0 * c_t)) * delta
        gnorm = float(np.linalg.norm(ghat))
        if gnorm > cfg.clip_norm:
            ghat = ghat * (cfg.clip_norm / gnorm)
        theta = theta - a_t * ghat
        mb_loss = 0.5 * (f_plus + f_minus)
        losses.append(mb_loss)
        if mb_loss < best_loss - cfg.tolerance:
            best_loss = mb_loss
            no_improve = 0
        else:
            no_improve += 1
        if no_improve >= cfg.patience:
            break

    eval_idx = np.arange(min(N, 512))
    final_loss = cross_entropy(forward_probs(circuit, theta, A[eval_idx], C), y[eval_idx])
    record = {
        "steps_run": steps_run,
        "losses": losses,
        "best_minibatch_loss": float(best_loss),
        "final_loss": final_loss,
    }
    return theta, record


def stratified_kfold(y: np.ndarray, K: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded stratified folds via round-robin dealing within each class."""
    y = np.asarray(y, dtype=int)
    if K < 2:
        raise DataError(f"K must be >= 2, got {K}")
    rng = np.random.default_rng(seed)
    assignment = np.empty(y.size, dtype=int)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < K:
            raise DataError(f"class {int(c)} has {idx.size} rows, fewer than K={K}")
        idx = idx[rng.permutation(idx.size)]
        assignment[idx] = np.arange(idx.size) % K
    folds = []
    for f in range(K):
        va = np.flatnonzero(assignment == f)
        tr = np.flatnonzero(assignment != f)
        folds.append((tr, va))
    return folds


def tune_threshold(
    y_true: np.ndarray, p1: np.ndarray, grid, target_metric: str = "macro_f1"
) -> tuple[float, float]:
    """Binary threshold maximizing a MetricsReport attribute; first grid
    element wins ties. Predict class 1 iff p1 >= tau."""
    best_tau, best_score = None, -np.inf
    for tau in grid:
        y_hat = (np.asarray(p1) >= tau).astype(int)
        rep = evaluate(y_true, y_hat, n_classes=2)
        score = getattr(rep, target_metric)
        if score > best_score:
            best_score, best_tau = score, float(tau)
    return best_tau, float(best_score)


def tune_threshold_alert_rate(
    p1: np.ndarray, max_alert_rate: float, grid=DEFAULT_THRESHOLD_GRID
) -> float:
    """Smallest grid threshold whose predicted-positive fraction stays
    within the alert budget; falls back to the most conservative one."""
    p1 = np.asarray(p1, dtype=float)
    for tau in sorted(grid):
        if float(np.mean(p1 >= tau)) <= max_alert_rate:
            return float(tau)
    return float(max(grid))


def _predict(P: np.ndarray, threshold: float | None) -> np.ndarray:
    if P.shape[1] == 2 and threshold is not None:
        return (P[:, 1] >= threshold).astype(int)
    return np.argmax(P, axis=1)


@dataclass
class VqcModel:
    spec: VqcSpec
    theta: np.ndarray
    scaler: Scaler
    threshold: float | None
    metrics: dict = field(default_factory=dict)
    final_loss: float = float("nan")

    def probabilities(self, Z: np.ndarray, C: int) -> np.ndarray:
        A = angle_map(Z, self.scaler, self.spec.z_max, self.spec.feature_scales)
        return forward_probs(build_circuit(self.spec), self.theta, A, C)

    def predict(self, Z: np.ndarray, C: int, threshold: float | None = None) -> np.ndarray:
        tau = self.threshold if threshold is None else threshold
        return _predict(self.probabilities(Z, C), tau)


def default_spec(
    m_inputs: int, n_classes: int, reps: int, reupload: bool, z_max: float = 3.0,
    feature_scales=None,
) -> VqcSpec:
    n_qubits = max(2, m_inputs)
    if n_classes == 2:
        mapping = "parity"
    else:
        mapping = "direct"
        n_qubits = max(n_qubits, math.ceil(math.log2(n_classes)))
    return VqcSpec(
        n_qubits=n_qubits,
        reps=reps,
        reupload=reupload,
        mapping=mapping,
        m_inputs=m_inputs,
        z_max=z_max,
        feature_scales=feature_scales,
    )


def kfold_train(
    Z_train: np.ndarray,
    y_train: np.ndarray,
    Z_val: np.ndarray,
    y_val: np.ndarray,
    Z_test: np.ndarray,
    y_test: np.ndarray,
    hp_space=DEFAULT_HP_SPACE,
    K: int = 5,
    threshold_grid=DEFAULT_THRESHOLD_GRID,
    target_metric: str = "macro_f1",
    z_max: float = 3.0,
    feature_scales=None,
    spsa: SpsaConfig | None = None,
    seed: int = 0,
) -> tuple[VqcModel, dict]:
    """Stratified K-fold hyperparameter selection, full-train refit,
    validation threshold tuning (binary), and artifact assembly."""
    Z_train = np.atleast_2d(np.asarray(Z_train, float))
    y_train = np.asarray(y_train, int)
    hp_space = list(hp_space)
    if not hp_space:
        raise DataError("hyperparameter space is empty")
    spsa = spsa or SpsaConfig(seed=seed)
    C = int(max(y_train.max(), y_val.max(), y_test.max())) + 1
    m = Z_train.shape[1]

    folds = stratified_kfold(y_train, K, seed=seed)
    best_hp, best_cv = None, -np.inf
    cv_records = []
    for hi, hp in enumerate(hp_space):
        spec = default_spec(
            m, C, reps=int(hp["reps"]), reupload=bool(hp["reupload"]),
            z_max=z_max, feature_scales=feature_scales,
        )
        scores = []
        for fi, (tr, va) in enumerate(folds):
            fold_scaler = fit_scaler(Z_train[tr])
            A_tr = angle_map(Z_train[tr], fold_scaler, z_max, spec.feature_scales)
            A_va = angle_map(Z_train[va], fold_scaler, z_max, spec.feature_scales)
            fold_cfg = replace(spsa, seed=seed * 10007 + hi * 101 + fi)
            theta, _ = spsa_train(A_tr, y_train[tr], spec, fold_cfg, n_classes=C)
            P_va = forward_probs(build_circuit(spec), theta, A_va, C)
            if C == 2:
                _, score = tune_threshold(y_train[va], P_va[:, 1], threshold_grid, target_metric)
            else:
                rep = evaluate(y_train[va], np.argmax(P_va, axis=1), n_classes=C)
                score = getattr(rep, target_metric)
            scores.append(score)
        cv_mean = float(np.mean(scores))
        cv_records.append({"hp": dict(hp), "cv_mean": cv_mean, "fold_scores": scores})
        if cv_mean > best_cv:
            best_cv, best_hp = cv_mean, dict(hp)

    spec = default_spec(
        m, C, reps=int(best_hp["reps"]), reupload=bool(best_hp["reupload"]),
        z_max=z_max, feature_scales=feature_scales,
    )
    scaler = fit_scaler(Z_train)
    A_tr = angle_map(Z_train, scaler, z_max, spec.feature_scales)
    A_val = angle_map(Z_val, scaler, z_max, spec.feature_scales)
    A_te = angle_map(Z_test, scaler, z_max, spec.feature_scales)
    final_cfg = replace(spsa, seed=seed * 10007 + 999983)
    theta, train_record = spsa_train(A_tr, y_train, spec, final_cfg, n_classes=C)

    circuit = build_circuit(spec)
    P_val = forward_probs(circuit, theta, A_val, C)
    P_te = forward_probs(circuit, theta, A_te, C)
    threshold = None
    if C == 2:
        threshold, _ = tune_threshold(y_val, P_val[:, 1], threshold_grid, target_metric)
    val_rep = evaluate(y_val, _predict(P_val, threshold), n_classes=C)
    test_rep = evaluate(y_test, _predict(P_te, threshold), n_classes=C)

    model = VqcModel(
        spec=spec,
        theta=theta,
        scaler=scaler,
        threshold=threshold,
        metrics={"val": val_rep.to_dict(), "test": test_rep.to_dict()},
        final_loss=train_record["final_loss"],
    )
    artifact = {
        "format_version": 1,
        "kind": "vqc",
        "spec": spec.to_dict(),
        "theta": theta.tolist(),
        "scaler": scaler.to_dict(),
        "threshold": threshold,
        "n_classes": C,
        "metrics": model.metrics,
        "final_loss": train_record["final_loss"],
        "best_alias": False,
        "selection": {"best_hp": best_hp, "cv_mean": best_cv, "records": cv_records},
        "seed": seed,
    }
    return model, artifact

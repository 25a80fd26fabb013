"""Batch command-line driver for the full pipeline.

Subcommands mirror the pipeline stages: prepare, search, calibrate,
fit-fusion, build-delta, train-vqc, score, evaluate. Every JSON output
embeds a manifest of the seeds and package version that produced it.
Exit codes: 0 success, 2 usage error, 3 data error, 4 artifact error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import pandas as pd

from . import __version__
from .artifacts import (
    build_fusion_artifact,
    load_fusion_artifact,
    load_vqc_artifact,
    persist_top_r,
    read_json,
    save_fusion_artifact,
    save_vqc_artifact,
    score_features,
    write_json,
)
from .cgr import build_anchor_model, group_strength, z_feature_matrix
from .data import correlation, load_csv, stratified_split
from .delta import build_deltas, export_csv as export_delta_csv, load_csv as load_delta_csv
from .errors import ArtifactError, DataError, GeomFusionError, UsageError
from .fusion import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_FBETA_GRID,
    FusionParams,
    alert_rate,
    class_weights_inv_sqrt,
    evaluate,
    fbeta_sweep,
    fusion_infer,
)
from .medoid import DEFAULT_SUBSAMPLE_CAP
from .optimizer import (
    DEFAULT_BUDGET,
    DEFAULT_PASSES,
    MedoidParams,
    SearchEntry,
    SearchRecord,
    coordinate_descent,
)
from .cgr import CgrConfig
from .vqc import (
    DEFAULT_THRESHOLD_GRID,
    SpsaConfig,
    forward_probs,
    build_circuit,
    VqcSpec,
    kfold_train,
)
from .data import Scaler
from .vqc import angle_map


def _manifest(args, extra: dict | None = None) -> dict:
    m = {"package": "geomfusion", "version": __version__}
    for key in ("seed", "split", "shots", "qseed"):
        if hasattr(args, key):
            m[key] = getattr(args, key)
    if extra:
        m.update(extra)
    return m


def _parse_split(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"--split needs three comma-separated fractions, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise UsageError(f"non-numeric split fraction in {text!r}")


def _parse_shots(text: str) -> int | None:
    if text == "exact":
        return None
    try:
        shots = int(text)
    except ValueError:
        raise UsageError(f"--shots must be an integer or 'exact', got {text!r}")
    if shots < 1:
        raise UsageError(f"--shots must be positive, got {shots}")
    return shots


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise UsageError(f"bad numeric grid {text!r}")


def _parse_k_range(text: str) -> tuple[int, int]:
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return int(lo), int(hi)
        k = int(text)
        return k, k
    except ValueError:
        raise UsageError(f"bad k range {text!r}; expected e.g. 2:5 or 3")


def add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="input CSV with header row")
    p.add_argument("--label", required=True, help="label column name")
    p.add_argument("--split", default="0.56,0.19,0.25", help="train,val,test fractions")
    p.add_argument("--seed", type=int, default=42, help="split / pipeline seed")


def add_pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m-neighbors", type=int, default=5,
                   help="correlation-neighborhood size per anchor")
    p.add_argument("--max-anchors", type=int, default=None,
                   help="keep only the first K anchors in target-correlation order")
    p.add_argument("--alpha", type=float, default=0.5, help="fusion mixing weight")
    p.add_argument("--no-angular", action="store_true", help="distance channel only")
    p.add_argument("--weight-mode", choices=("none", "inv_sqrt"), default="none")
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--shots", default="exact", help="SWAP-test shots, or 'exact'")
    p.add_argument("--qseed", type=int, default=None, help="shot-sampling seed")
    p.add_argument("--mmax", type=int, default=DEFAULT_SUBSAMPLE_CAP,
                   help="medoid subsample cap")


def _load_splits(args):
    ds = load_csv(args.data, args.label)
    return ds, stratified_split(ds, _parse_split(args.split), args.seed)


def _fusion_params(args, train) -> FusionParams:
    weights = None
    if args.weight_mode == "inv_sqrt":
        weights = class_weights_inv_sqrt(train.class_counts)
    return FusionParams(
        alpha=args.alpha,
        use_angular=not args.no_angular,
        epsilon=args.epsilon,
        class_weights=weights,
        shots=_parse_shots(args.shots),
        qseed=args.qseed,
    )


def _anchor_model(args, train):
    corr = correlation(train, include_target=True)
    return build_anchor_model(corr, m=args.m_neighbors, max_anchors=args.max_anchors)


def cmd_prepare(args) -> int:
    ds, (train, val, test) = _load_splits(args)
    model = _anchor_model(args, train)
    split_manifest = {
        "manifest": _manifest(args),
        "n_samples": ds.n_samples,
        "n_features": ds.n_features,
        "feature_names": ds.feature_names,
        "label_names": {str(c): n for c, n in ds.label_names.items()},
        "sizes": {"train": train.n_samples, "val": val.n_samples, "test": test.n_samples},
        "class_counts": {
            name: {str(c): n for c, n in part.class_counts.items()}
            for name, part in (("train", train), ("val", val), ("test", test))
        },
    }
    corr_summary = {
        "manifest": _manifest(args),
        "anchors": model.anchors,
        "membership": {str(a): m for a, m in model.membership.items()},
        "group_strength": {str(a): group_strength(model, a) for a in model.anchors},
    }
    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, "split_manifest.json"), split_manifest)
    write_json(os.path.join(args.out, "correlation_summary.json"), corr_summary)
    if args.export_z:
        Z = z_feature_matrix(ds.X, model).F
        cols = [f"z_{a}" for a in model.anchors]
        frame = pd.DataFrame(Z, columns=cols)
        frame["label"] = ds.y
        frame.to_csv(args.export_z, index=False)
    print(json.dumps(split_manifest["sizes"]))
    return 0


def cmd_search(args) -> int:
    _, (train, val, _) = _load_splits(args)
    model = _anchor_model(args, train)
    record = coordinate_descent(
        train,
        val,
        model,
        k_range=_parse_k_range(args.k),
        max_passes=args.passes,
        budget=args.budget,
        seed=args.seed,
        fusion_params=_fusion_params(args, train),
        medoid_params=MedoidParams(m_max=args.mmax, seed=args.seed),
    )
    payload = record.to_dict()
    payload["manifest"] = _manifest(args)
    write_json(args.out, payload)
    best = record.best_k()
    print(json.dumps({"best_k": best, "best_f1": record.entries[best].best_f1}))
    return 0


def _load_search_record(path: str) -> SearchRecord:
    payload = read_json(path)
    if "entries" not in payload:
        raise ArtifactError(f"{path} is not a search record")
    record = SearchRecord()
    record.f1_trace = payload.get("f1_trace", [])
    for k, e in payload["entries"].items():
        from .fusion import MetricsReport

        rep = e["metrics"]
        record.entries[int(k)] = SearchEntry(
            k=int(e["k"]),
            best_config=CgrConfig.from_dict(e["best_config"]),
            best_f1=float(e["best_f1"]),
            metrics=MetricsReport(
                accuracy=rep["accuracy"],
                macro_f1=rep["macro_f1"],
                macro_precision=rep["macro_precision"],
                macro_recall=rep["macro_recall"],
                weighted_f1=rep["weighted_f1"],
                per_class={int(c): v for c, v in rep["per_class"].items()},
                confusion=np.asarray(rep["confusion"], int),
            ),
            passes_used=int(e["passes_used"]),
            evaluations=int(e["evaluations"]),
        )
    return record


def cmd_calibrate(args) -> int:
    _, (train, val, test) = _load_splits(args)
    model = _anchor_model(args, train)
    record = _load_search_record(args.search_record)
    k = args.k if args.k is not None else record.best_k()
    if k not in record.entries:
        raise UsageError(f"k={k} not present in the search record")
    base = _fusion_params(args, train)
    artifact = build_fusion_artifact(
        k, record.entries[k].best_config, train, val, test, model,
        base, MedoidParams(m_max=args.mmax, seed=args.seed),
        alpha_grid=_parse_grid(args.alpha_grid), seed=args.seed,
    )
    # F_beta sweep on the validation predictions at alpha*
    from .artifacts import _embed

    F_val = artifact.scaler.transform(
        _embed(val.X, model, artifact.config, artifact.embedding)
    )
    y_hat, _ = fusion_infer(F_val, artifact.medoids, artifact.fusion_params())
    sweep = fbeta_sweep(val.y, y_hat, _parse_grid(args.fbeta_grid))
    payload = {
        "manifest": _manifest(args),
        "k": k,
        "alpha_star": artifact.alpha_star,
        "alpha_records": artifact.metrics.get("alpha_records", []),
        "fbeta_sweep": sweep,
        "val_metrics": artifact.metrics["val"],
    }
    write_json(args.out, payload)
    print(json.dumps({"k": k, "alpha_star": artifact.alpha_star}))
    return 0


def cmd_fit_fusion(args) -> int:
    _, (train, val, test) = _load_splits(args)
    model = _anchor_model(args, train)
    record = _load_search_record(args.search_record)
    base = _fusion_params(args, train)
    if args.embedding == "z":
        # z-features ignore the subset search; persist a single z-mode artifact
        k = record.best_k()
        artifact = build_fusion_artifact(
            k, record.entries[k].best_config, train, val, test, model,
            base, MedoidParams(m_max=args.mmax, seed=args.seed),
            alpha_grid=_parse_grid(args.alpha_grid), seed=args.seed, embedding="z",
        )
        path = os.path.join(args.outdir, "fusion_z.json")
        save_fusion_artifact(path, artifact)
        paths = [path]
    else:
        paths = persist_top_r(
            record, train, val, test, model,
            r=args.top_r, out_dir=args.outdir, base_params=base,
            medoid_params=MedoidParams(m_max=args.mmax, seed=args.seed),
            alpha_grid=_parse_grid(args.alpha_grid), seed=args.seed,
        )
    print(json.dumps({"artifacts": paths}))
    return 0


def cmd_build_delta(args) -> int:
    _, (train, val, test) = _load_splits(args)
    artifact = load_fusion_artifact(args.artifact)
    os.makedirs(args.outdir, exist_ok=True)
    out = {}
    C = len(artifact.medoids.classes)
    from .artifacts import _embed

    for name, part in (("train", train), ("val", val), ("test", test)):
        F = artifact.scaler.transform(
            _embed(part.X, artifact.anchor_model, artifact.config, artifact.embedding)
        )
        _, channels = fusion_infer(F, artifact.medoids, artifact.fusion_params())
        deltas = build_deltas(channels, C, include_fused=args.include_fused)
        path = os.path.join(args.outdir, f"delta_{name}.csv")
        export_delta_csv(path, deltas, part.y)
        out[name] = path
    print(json.dumps(out))
    return 0


def cmd_train_vqc(args) -> int:
    if args.delta_dir:
        paths = {
            name: os.path.join(args.delta_dir, f"delta_{name}.csv")
            for name in ("train", "val", "test")
        }
    else:
        if not (args.train and args.val and args.test):
            raise UsageError("provide --delta-dir or all of --train/--val/--test")
        paths = {"train": args.train, "val": args.val, "test": args.test}
    splits = {}
    columns = None
    for name, path in paths.items():
        deltas, y = load_delta_csv(path)
        splits[name] = (deltas.Z, y)
        columns = list(deltas.columns)

    reps = [int(v) for v in args.reps.split(",")]
    if args.reupload == "both":
        uploads = (True, False)
    else:
        uploads = (args.reupload == "on",)
    hp_space = [{"reps": L, "reupload": up} for L in reps for up in uploads]
    spsa = SpsaConfig(steps=args.steps, batch=args.batch, seed=args.seed)
    scales = _parse_grid(args.scales) if args.scales else None

    model, artifact = kfold_train(
        *splits["train"], *splits["val"], *splits["test"],
        hp_space=hp_space, K=args.kfolds,
        threshold_grid=DEFAULT_THRESHOLD_GRID,
        target_metric=args.target_metric,
        z_max=args.z_max, feature_scales=scales,
        spsa=spsa, seed=args.seed,
    )
    artifact["columns"] = columns
    artifact["manifest"] = _manifest(args)

    summary = {"threshold": model.threshold, "metrics": artifact["metrics"]}
    C = int(max(splits["train"][1].max(), splits["test"][1].max())) + 1
    if C == 2:
        P_te = model.probabilities(splits["test"][0], C)
        y_at_tau = (P_te[:, 1] >= args.tau).astype(int)
        rep = evaluate(splits["test"][1], y_at_tau, n_classes=2)
        summary["operating_point"] = {
            "tau": args.tau,
            "alert_rate": alert_rate(y_at_tau),
            "recall_positive": rep.per_class[1]["recall"],
            "precision_positive": rep.per_class[1]["precision"],
        }
        artifact["operating_point"] = summary["operating_point"]

    os.makedirs(args.outdir, exist_ok=True)
    name = f"vqc_k{args.k}.json" if args.k is not None else "vqc.json"
    path = os.path.join(args.outdir, name)
    save_vqc_artifact(path, artifact)
    write_json(
        os.path.join(args.outdir, "best_alias.json"),
        {"format_version": 1, "kind": "alias", "best": name, "manifest": _manifest(args)},
    )
    print(json.dumps(summary))
    return 0


def _score_vqc(args, payload) -> int:
    spec = VqcSpec.from_dict(payload["spec"])
    theta = np.asarray(payload["theta"], float)
    scaler = Scaler.from_dict(payload["scaler"])
    deltas, y = _read_delta_for_scoring(args.data)
    if deltas.shape[1] != spec.m_inputs:
        raise ArtifactError(
            f"input has {deltas.shape[1]} delta columns, artifact expects {spec.m_inputs}"
        )
    A = angle_map(deltas, scaler, spec.z_max, spec.feature_scales)
    if spec.mapping == "parity":
        C = 2
    else:
        C = args.classes or int(payload.get("n_classes", 2))
    P = forward_probs(build_circuit(spec), theta, A, C)
    tau = args.tau if args.tau is not None else payload.get("threshold")
    if C == 2 and tau is not None:
        labels = (P[:, 1] >= tau).astype(int)
    else:
        labels = np.argmax(P, axis=1)
    part = np.sort(P, axis=1)
    margins = part[:, -1] - part[:, -2]
    frame = pd.DataFrame(
        {"row_id": np.arange(len(labels)), "label": labels, "margin": margins}
    )
    if C == 2:
        frame["p1"] = P[:, 1]
    frame.to_csv(args.out, index=False)
    summary = {"n": int(len(labels)), "out": args.out}
    if C == 2:
        summary["tau"] = tau
        summary["alert_rate"] = alert_rate(labels)
    print(json.dumps(summary))
    return 0


def _read_delta_for_scoring(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}")
    y = None
    if "label" in frame.columns:
        y = frame.pop("label").to_numpy(int)
    return frame.to_numpy(float), y


def cmd_score(args) -> int:
    payload = read_json(args.artifact)
    kind = payload.get("kind")
    if kind == "vqc":
        return _score_vqc(args, payload)
    if kind != "fusion":
        raise ArtifactError(f"{args.artifact}: unknown artifact kind {kind!r}")
    artifact = load_fusion_artifact(args.artifact)
    try:
        frame = pd.read_csv(args.data)
    except FileNotFoundError:
        raise DataError(f"data file not found: {args.data}")
    if args.label and args.label in frame.columns:
        frame = frame.drop(columns=[args.label])
    missing = [f for f in artifact.feature_names if f not in frame.columns]
    if missing:
        raise ArtifactError(f"input is missing feature column(s): {missing}")
    X = frame[artifact.feature_names].to_numpy(float)
    labels, _, margins = score_features(artifact, X)
    out = pd.DataFrame(
        {"row_id": np.arange(len(labels)), "label": labels, "margin": margins}
    )
    out.to_csv(args.out, index=False)
    print(json.dumps({"n": int(len(labels)), "out": args.out}))
    return 0


def cmd_evaluate(args) -> int:
    try:
        pred = pd.read_csv(args.pred)
        truth = pd.read_csv(args.data)
    except FileNotFoundError as exc:
        raise DataError(str(exc))
    if "label" not in pred.columns:
        raise DataError(f"{args.pred} has no 'label' column")
    if args.label not in truth.columns:
        raise DataError(f"{args.data} has no {args.label!r} column")
    y_pred = pred["label"].to_numpy(int)
    y_true_raw = truth[args.label].tolist()
    encoding: dict = {}
    y_true = np.empty(len(y_true_raw), dtype=int)
    for i, lab in enumerate(y_true_raw):
        if lab not in encoding:
            encoding[lab] = len(encoding)
        y_true[i] = encoding[lab]
    if len(y_true) != len(y_pred):
        raise DataError(
            f"prediction count {len(y_pred)} does not match truth count {len(y_true)}"
        )
    rep = evaluate(y_true, y_pred, beta=args.beta)
    payload = {"manifest": _manifest(args), **rep.to_dict()}
    if args.out:
        write_json(args.out, payload)
    print(json.dumps({"accuracy": rep.accuracy, "macro_f1": rep.macro_f1}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geomfusion", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="split the data and summarize correlations")
    add_dataset_args(p)
    add_pipeline_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--export-z", default=None, help="optional CSV of z-features")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("search", help="coordinate-descent configuration search")
    add_dataset_args(p)
    add_pipeline_args(p)
    p.add_argument("--k", default="2:5", help="subset-size range, e.g. 2:5")
    p.add_argument("--passes", type=int, default=DEFAULT_PASSES)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--out", default="search_record.json")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("calibrate", help="alpha grid calibration and F_beta sweep")
    add_dataset_args(p)
    add_pipeline_args(p)
    p.add_argument("--search-record", required=True)
    p.add_argument("--k", type=int, default=None, help="k to calibrate (default: best)")
    p.add_argument("--alpha-grid", default=",".join(str(a) for a in DEFAULT_ALPHA_GRID))
    p.add_argument("--fbeta-grid", default=",".join(str(b) for b in DEFAULT_FBETA_GRID))
    p.add_argument("--out", default="calibration.json")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fit-fusion", help="persist top-r fusion artifacts")
    add_dataset_args(p)
    add_pipeline_args(p)
    p.add_argument("--search-record", required=True)
    p.add_argument("--top-r", type=int, default=2)
    p.add_argument("--alpha-grid", default=",".join(str(a) for a in DEFAULT_ALPHA_GRID))
    p.add_argument("--embedding", choices=("phi", "z"), default="phi")
    p.add_argument("--outdir", default=".")
    p.set_defaults(func=cmd_fit_fusion)

    p = sub.add_parser("build-delta", help="export contrastive delta features")
    add_dataset_args(p)
    p.add_argument("--artifact", required=True, help="fusion artifact JSON")
    p.add_argument("--include-fused", action="store_true")
    p.add_argument("--outdir", default=".")
    p.set_defaults(func=cmd_build_delta)

    p = sub.add_parser("train-vqc", help="K-fold VQC training on delta features")
    p.add_argument("--delta-dir", default=None, help="directory with delta_{train,val,test}.csv")
    p.add_argument("--train", default=None)
    p.add_argument("--val", default=None)
    p.add_argument("--test", default=None)
    p.add_argument("--k", type=int, default=None, help="k tag for the artifact filename")
    p.add_argument("--kfolds", type=int, default=5)
    p.add_argument("--reps", default="1,2,3", help="ansatz repetition grid")
    p.add_argument("--reupload", choices=("both", "on", "off"), default="both")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--tau", type=float, default=0.3, help="fixed operating threshold")
    p.add_argument("--target-metric", default="macro_f1")
    p.add_argument("--z-max", type=float, default=3.0)
    p.add_argument("--scales", default=None, help="per-feature encoding scales")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--outdir", default=".")
    p.set_defaults(func=cmd_train_vqc)

    p = sub.add_parser("score", help="apply a persisted artifact to a CSV")
    p.add_argument("--artifact", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label", default=None, help="label column to ignore if present")
    p.add_argument("--tau", type=float, default=None, help="override VQC threshold")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--out", default="predictions.csv")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="metrics from predictions and labels")
    p.add_argument("--pred", required=True, help="predictions CSV (row_id,label,...)")
    p.add_argument("--data", required=True, help="CSV holding the true labels")
    p.add_argument("--label", required=True, help="label column in --data")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)
    return parser


def _apply_config_file(argv: list[str]) -> list[str]:
    """Expand --config FILE into leading defaults; explicit flags win."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config requires a file path")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2 :]
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError:
        cfg = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"bad config line (expected key=value): {line!r}")
            key, value = line.split("=", 1)
            cfg[key.strip()] = value.strip()
    if not isinstance(cfg, dict):
        raise UsageError(f"config file {path} must hold a JSON object or key=value lines")
    extra: list[str] = []
    for key, value in cfg.items():
        flag = "--" + str(key).replace("_", "-")
        if flag in rest:
            continue  # explicit flag wins
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        else:
            extra.extend([flag, str(value)])
    # insert config-derived options right after the subcommand
    if rest:
        return rest[:1] + extra + rest[1:]
    return extra


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config_file(argv)
        parser = build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            # argparse exits with 2 on usage errors and 0 on --help
            return int(exc.code or 0)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return 4
    except GeomFusionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

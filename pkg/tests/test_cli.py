import json
import os

import numpy as np
import pandas as pd
import pytest

from geomfusion.cli import main
from tests.conftest import make_blobs_dataset


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    ds = make_blobs_dataset(n=200, n_features=5, seed=30)
    root = tmp_path_factory.mktemp("cli")
    path = root / "data.csv"
    frame = pd.DataFrame(ds.X, columns=ds.feature_names)
    frame["target"] = ds.y
    frame.to_csv(path, index=False)
    return str(path)


def run(args, capsys):
    rc = main(args)
    out = capsys.readouterr()
    return rc, out.out, out.err


COMMON = ["--label", "target", "--seed", "0", "--m-neighbors", "3"]


class TestPrepare:
    def test_writes_manifests(self, data_csv, tmp_path, capsys):
        out = str(tmp_path / "prep")
        rc, stdout, _ = run(
            ["prepare", "--data", data_csv, *COMMON, "--out", out], capsys
        )
        assert rc == 0
        sizes = json.loads(stdout.strip().splitlines()[-1])
        assert sizes["train"] + sizes["val"] + sizes["test"] == 200
        manifest = json.load(open(os.path.join(out, "split_manifest.json")))
        assert manifest["manifest"]["package"] == "geomfusion"
        assert manifest["manifest"]["seed"] == 0
        corr = json.load(open(os.path.join(out, "correlation_summary.json")))
        assert set(map(int, corr["membership"])) == set(corr["anchors"])

    def test_export_z(self, data_csv, tmp_path, capsys):
        z_path = str(tmp_path / "z.csv")
        rc, _, _ = run(
            ["prepare", "--data", data_csv, *COMMON,
             "--out", str(tmp_path / "p"), "--export-z", z_path],
            capsys,
        )
        assert rc == 0
        frame = pd.read_csv(z_path)
        assert "label" in frame.columns
        assert len(frame) == 200


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return str(tmp_path_factory.mktemp("pipeline"))


class TestFullPipeline:
    def test_search_then_fit_then_score(self, data_csv, workdir, capsys):
        search = os.path.join(workdir, "search.json")
        rc, stdout, _ = run(
            ["search", "--data", data_csv, *COMMON, "--k", "2:3", "--out", search],
            capsys,
        )
        assert rc == 0
        assert json.loads(stdout.strip().splitlines()[-1])["best_k"] in (2, 3)

        rc, stdout, _ = run(
            ["calibrate", "--data", data_csv, *COMMON,
             "--search-record", search, "--out", os.path.join(workdir, "cal.json")],
            capsys,
        )
        assert rc == 0
        cal = json.load(open(os.path.join(workdir, "cal.json")))
        assert 0.0 <= cal["alpha_star"] <= 1.0
        assert cal["fbeta_sweep"]

        rc, stdout, _ = run(
            ["fit-fusion", "--data", data_csv, *COMMON,
             "--search-record", search, "--top-r", "1", "--outdir", workdir],
            capsys,
        )
        assert rc == 0
        artifacts = json.loads(stdout.strip().splitlines()[-1])["artifacts"]
        assert len(artifacts) == 1

        preds = os.path.join(workdir, "preds.csv")
        rc, _, _ = run(
            ["score", "--artifact", artifacts[0], "--data", data_csv,
             "--label", "target", "--out", preds],
            capsys,
        )
        assert rc == 0
        frame = pd.read_csv(preds)
        assert list(frame.columns) == ["row_id", "label", "margin"]
        assert len(frame) == 200

        rc, stdout, _ = run(
            ["evaluate", "--pred", preds, "--data", data_csv, "--label", "target"],
            capsys,
        )
        assert rc == 0
        metrics = json.loads(stdout.strip().splitlines()[-1])
        assert metrics["accuracy"] > 0.8  # separable blobs

    def test_build_delta_and_train_vqc(self, data_csv, workdir, capsys):
        artifact = os.path.join(workdir, "fusion_k2.json")
        if not os.path.exists(artifact):
            artifact = os.path.join(workdir, "fusion_k3.json")
        deltas = os.path.join(workdir, "deltas")
        rc, stdout, _ = run(
            ["build-delta", "--data", data_csv, "--label", "target", "--seed", "0",
             "--artifact", artifact, "--outdir", deltas],
            capsys,
        )
        assert rc == 0
        for name in ("train", "val", "test"):
            assert os.path.exists(os.path.join(deltas, f"delta_{name}.csv"))

        vqc_dir = os.path.join(workdir, "vqc")
        rc, stdout, _ = run(
            ["train-vqc", "--delta-dir", deltas, "--steps", "40",
             "--reps", "1", "--reupload", "on", "--seed", "0",
             "--outdir", vqc_dir],
            capsys,
        )
        assert rc == 0
        assert os.path.exists(os.path.join(vqc_dir, "vqc.json"))
        alias = json.load(open(os.path.join(vqc_dir, "best_alias.json")))
        assert alias["best"] == "vqc.json"

        preds = os.path.join(workdir, "vqc_preds.csv")
        rc, _, _ = run(
            ["score", "--artifact", os.path.join(vqc_dir, "vqc.json"),
             "--data", os.path.join(deltas, "delta_test.csv"), "--out", preds],
            capsys,
        )
        assert rc == 0
        assert len(pd.read_csv(preds)) > 0


class TestConfigFile:
    def test_json_config_supplies_defaults(self, data_csv, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"data": data_csv, "label": "target"}))
        rc, _, _ = run(
            ["prepare", "--config", str(cfg), "--out", str(tmp_path / "p")], capsys
        )
        assert rc == 0

    def test_explicit_flag_beats_config(self, data_csv, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps({"data": data_csv, "label": "target", "out": str(tmp_path / "a")})
        )
        rc, _, _ = run(
            ["prepare", "--config", str(cfg), "--out", str(tmp_path / "b")], capsys
        )
        assert rc == 0
        assert (tmp_path / "b").exists() and not (tmp_path / "a").exists()

    def test_key_value_config(self, data_csv, tmp_path, capsys):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(f"data={data_csv}\nlabel=target\nout={tmp_path / 'kv'}\n")
        rc, _, _ = run(["prepare", "--config", str(cfg)], capsys)
        assert rc == 0
        assert (tmp_path / "kv").exists()

    def test_missing_config(self, capsys):
        rc, _, err = run(["prepare", "--config", "/nope.json"], capsys)
        assert rc == 2


class TestExitCodes:
    def test_usage_error_is_2(self, data_csv, capsys):
        rc, _, err = run(
            ["search", "--data", data_csv, "--label", "target", "--k", "x", "--out", "/tmp/s.json"],
            capsys,
        )
        assert rc == 2 and "k range" in err

    def test_data_error_is_3(self, capsys, tmp_path):
        rc, _, err = run(
            ["prepare", "--data", str(tmp_path / "no.csv"), "--label", "y",
             "--out", str(tmp_path / "p")],
            capsys,
        )
        assert rc == 3 and "not found" in err

    def test_artifact_error_is_4(self, data_csv, capsys, tmp_path):
        rc, _, err = run(
            ["score", "--artifact", str(tmp_path / "no.json"), "--data", data_csv,
             "--out", str(tmp_path / "p.csv")],
            capsys,
        )
        assert rc == 4 and "not found" in err

    def test_bad_split_is_2(self, data_csv, capsys, tmp_path):
        rc, _, _ = run(
            ["prepare", "--data", data_csv, "--label", "target",
             "--split", "0.5,0.5", "--out", str(tmp_path / "p")],
            capsys,
        )
        assert rc == 2

    def test_bad_shots_is_2(self, data_csv, capsys, tmp_path):
        rc, _, _ = run(
            ["search", "--data", data_csv, "--label", "target",
             "--shots", "banana", "--out", str(tmp_path / "s.json")],
            capsys,
        )
        assert rc == 2

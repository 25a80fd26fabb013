import numpy as np
import pytest

from geomfusion.delta import (
    DeltaFeatures,
    build_deltas,
    export_csv,
    load_csv,
    standardize_deltas,
)
from geomfusion.errors import DataError
from geomfusion.fusion import FusionChannels


def channels(Dn, Tn, S, classes=None):
    Dn, Tn, S = (np.asarray(a, float) for a in (Dn, Tn, S))
    return FusionChannels(
        D_norm=Dn, theta_norm=Tn, scores=S,
        classes=classes or list(range(Dn.shape[1])),
    )


class TestBuildDeltas:
    def test_binary_is_class1_minus_class0(self):
        ch = channels([[0.3, 0.7]], [[0.6, 0.4]], [[0.45, 0.55]])
        d = build_deltas(ch, 2)
        assert d.columns == ("delta_d", "delta_theta")
        np.testing.assert_allclose(d.Z, [[0.4, -0.2]])

    def test_binary_with_fused_column(self):
        ch = channels([[0.3, 0.7]], [[0.6, 0.4]], [[0.45, 0.55]])
        d = build_deltas(ch, 2, include_fused=True)
        assert d.columns == ("delta_d", "delta_theta", "delta_s")
        assert d.Z[0, 2] == pytest.approx(0.1)

    def test_multiclass_runner_up_minus_best(self):
        # fused scores pick best=2, runner-up=0
        ch = channels(
            [[0.5, 0.3, 0.2]], [[0.2, 0.3, 0.5]], [[0.35, 0.45, 0.2]]
        )
        d = build_deltas(ch, 3)
        np.testing.assert_allclose(d.Z, [[0.5 - 0.2, 0.2 - 0.5]])

    def test_multiclass_tie_prefers_lower_class(self):
        ch = channels([[0.4, 0.4, 0.2]], [[0.3, 0.3, 0.4]], [[0.3, 0.3, 0.4]])
        d = build_deltas(ch, 3)
        # best=0 and runner-up=1 under the stable sort
        np.testing.assert_allclose(d.Z, [[0.0, 0.0]])

    def test_deltas_are_nonnegative_for_fused_margin(self):
        rng = np.random.default_rng(2)
        S = rng.random((50, 4))
        ch = channels(S, S, S)
        d = build_deltas(ch, 4, include_fused=True)
        assert np.all(d.Z[:, 2] >= 0.0)  # runner-up minus best in fused scores

    def test_class_count_validation(self):
        ch = channels([[0.5, 0.5]], [[0.5, 0.5]], [[0.5, 0.5]])
        with pytest.raises(DataError):
            build_deltas(ch, 3)
        with pytest.raises(DataError):
            build_deltas(ch, 1)


class TestStandardize:
    def test_train_statistics_applied_to_all_splits(self):
        rng = np.random.default_rng(0)
        tr = DeltaFeatures(Z=rng.normal(3, 2, (100, 2)))
        va = DeltaFeatures(Z=rng.normal(3, 2, (30, 2)))
        tr2, va2 = standardize_deltas(tr, va)
        np.testing.assert_allclose(tr2.Z.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(tr2.Z.std(axis=0), 1.0, atol=1e-9)
        expect = (va.Z - tr.Z.mean(axis=0)) / tr.Z.std(axis=0)
        np.testing.assert_allclose(va2.Z, expect)
        assert tr2.scaler is va2.scaler

    def test_dimension_mismatch(self):
        tr = DeltaFeatures(Z=np.ones((5, 2)) * np.arange(5)[:, None])
        with pytest.raises(DataError, match="mismatch"):
            standardize_deltas(tr, DeltaFeatures(Z=np.ones((5, 3))))


class TestCsvRoundTrip:
    def test_export_and_load(self, tmp_path):
        rng = np.random.default_rng(1)
        d = DeltaFeatures(Z=rng.normal(0, 1, (20, 3)), columns=("delta_d", "delta_theta", "delta_s"))
        y = rng.integers(0, 2, 20)
        path = str(tmp_path / "d.csv")
        export_csv(path, d, y)
        d2, y2 = load_csv(path)
        np.testing.assert_array_equal(d.Z, d2.Z)  # repr round trip is exact
        np.testing.assert_array_equal(y, y2)
        assert d2.columns == d.columns

    def test_label_count_mismatch(self, tmp_path):
        d = DeltaFeatures(Z=np.ones((3, 2)))
        with pytest.raises(DataError):
            export_csv(str(tmp_path / "x.csv"), d, np.array([0, 1]))

    def test_load_rejects_wrong_schema(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(DataError, match="label"):
            load_csv(str(p))

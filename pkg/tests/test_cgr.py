import numpy as np
import pytest

from geomfusion.cgr import (
    AnchorModel,
    CgrConfig,
    anchor_feature_vector,
    build_anchor_model,
    build_feature_matrix,
    default_config,
    group_strength,
    multiplicative_feature,
    z_feature_matrix,
)
from geomfusion.data import CorrelationModel
from geomfusion.errors import DataError


def toy_correlation():
    # [DERIVED] hand-built correlation structure: feature 0 strongly tied to
    # 2 and 1; feature 3 nearly independent; target order 1 > 0 > 3 > 2
    R = np.array(
        [
            [1.0, 0.6, -0.8, 0.1],
            [0.6, 1.0, 0.3, 0.2],
            [-0.8, 0.3, 1.0, 0.05],
            [0.1, 0.2, 0.05, 1.0],
        ]
    )
    target = np.array([0.5, 0.9, 0.2, 0.4])
    return CorrelationModel(R=R, target_corr=target)


class TestBuildAnchorModel:
    def test_anchor_order_follows_target_correlation(self):
        model = build_anchor_model(toy_correlation(), m=2)
        assert model.anchors == [1, 0, 3, 2]

    def test_membership_by_absolute_correlation(self):
        model = build_anchor_model(toy_correlation(), m=2)
        # anchor 0: |R| to (1,2,3) is (0.6, 0.8, 0.1) -> picks 2 then 1
        assert model.membership[0] == [0, 2, 1]
        # anchor 3: |R| to (0,1,2) is (0.1, 0.2, 0.05) -> picks 1 then 0
        assert model.membership[3] == [3, 1, 0]

    def test_membership_tie_breaks_to_lower_index(self):
        R = np.array([[1.0, 0.5, 0.5], [0.5, 1.0, 0.2], [0.5, 0.2, 1.0]])
        model = build_anchor_model(CorrelationModel(R=R), m=1)
        assert model.membership[0] == [0, 1]

    def test_anchor_weight_is_one(self):
        model = build_anchor_model(toy_correlation(), m=2)
        for a in model.anchors:
            assert model.weights[(a, a)] == 1.0
        assert model.weights[(0, 2)] == pytest.approx(-0.8)

    def test_max_anchors_truncates_ordered_list(self):
        model = build_anchor_model(toy_correlation(), m=2, max_anchors=2)
        assert model.anchors == [1, 0]

    def test_m_must_be_below_feature_count(self):
        with pytest.raises(DataError, match="smaller"):
            build_anchor_model(toy_correlation(), m=4)

    def test_serialization_round_trip(self):
        model = build_anchor_model(toy_correlation(), m=2)
        model2 = AnchorModel.from_dict(model.to_dict())
        assert model2.anchors == model.anchors
        assert model2.membership == model.membership
        assert model2.weights == model.weights


class TestFeatures:
    def test_anchor_feature_hand_value(self):
        # [DERIVED] u = sqrt((1*3)^2 + (-0.8*4)^2) with x=(3,_,4,_)
        model = build_anchor_model(toy_correlation(), m=2)
        X = np.array([[3.0, 9.9, 4.0, 9.9]])
        u = anchor_feature_vector(X, 0, [0, 2], model.weights)
        assert u[0] == pytest.approx(np.sqrt(9.0 + (0.8 * 4.0) ** 2))

    def test_features_are_nonnegative(self, blobs_dataset, blobs_anchor_model):
        cfg = default_config(blobs_anchor_model, 3)
        F = build_feature_matrix(blobs_dataset.X, blobs_anchor_model, cfg).F
        assert np.all(F >= 0.0)
        assert F.shape == (blobs_dataset.n_samples, len(blobs_anchor_model.anchors))

    def test_column_order_matches_anchor_order(self):
        model = build_anchor_model(toy_correlation(), m=2)
        cfg = default_config(model, 1)  # subsets are just the anchors
        X = np.array([[1.0, 2.0, 3.0, 4.0]])
        F = build_feature_matrix(X, model, cfg).F
        np.testing.assert_allclose(F[0], [2.0, 1.0, 4.0, 3.0])

    def test_invalid_member_column(self):
        model = build_anchor_model(toy_correlation(), m=2)
        with pytest.raises(DataError, match="valid column"):
            anchor_feature_vector(np.ones((2, 2)), 0, [0, 2], model.weights)


class TestConfig:
    def test_default_config_prefix_of_membership(self):
        model = build_anchor_model(toy_correlation(), m=2)
        cfg = default_config(model, 2)
        assert cfg.subsets[0] == model.membership[0][:2]

    def test_validation_catches_missing_anchor(self):
        model = build_anchor_model(toy_correlation(), m=2)
        cfg = CgrConfig(k=1, subsets={1: [1]})
        with pytest.raises(DataError, match="missing subset"):
            cfg.validate_against(model)

    def test_validation_requires_anchor_first(self):
        model = build_anchor_model(toy_correlation(), m=2)
        cfg = default_config(model, 2)
        cfg.subsets[0] = [2, 0]
        with pytest.raises(DataError, match="anchor first"):
            cfg.validate_against(model)

    def test_validation_rejects_out_of_membership(self):
        model = build_anchor_model(toy_correlation(), m=2)
        cfg = default_config(model, 2)
        cfg.subsets[0] = [0, 3]
        with pytest.raises(DataError, match="not within membership"):
            cfg.validate_against(model)

    def test_serialization_round_trip(self):
        model = build_anchor_model(toy_correlation(), m=2)
        cfg = default_config(model, 2)
        cfg2 = CgrConfig.from_dict(cfg.to_dict())
        assert cfg2.k == cfg.k and cfg2.subsets == cfg.subsets


class TestZFeatures:
    def test_group_strength_hand_value(self):
        model = build_anchor_model(toy_correlation(), m=2)
        # [DERIVED] anchor 0 members (0,2,1): sqrt(1 + 0.64 + 0.36)
        assert group_strength(model, 0) == pytest.approx(np.sqrt(2.0))

    def test_multiplicative_feature_is_strength_times_norm(self):
        model = build_anchor_model(toy_correlation(), m=2)
        X = np.array([[3.0, 0.0, 4.0, 1.0]])
        z = multiplicative_feature(X, model, 0)
        assert z[0] == pytest.approx(group_strength(model, 0) * 5.0)

    def test_z_matrix_stacks_anchor_order(self, blobs_dataset, blobs_anchor_model):
        Z = z_feature_matrix(blobs_dataset.X, blobs_anchor_model)
        assert Z.anchor_order == blobs_anchor_model.anchors
        col0 = multiplicative_feature(
            blobs_dataset.X, blobs_anchor_model, blobs_anchor_model.anchors[0]
        )
        np.testing.assert_allclose(Z.F[:, 0], col0)

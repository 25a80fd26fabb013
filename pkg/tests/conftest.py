import numpy as np
import pytest

from geomfusion import Dataset
from geomfusion.cgr import build_anchor_model
from geomfusion.data import correlation


@pytest.fixture(scope="session")
def wine_dataset():
    sklearn = pytest.importorskip("sklearn.datasets")
    bunch = sklearn.load_wine()
    return Dataset(
        X=bunch.data,
        y=bunch.target,
        feature_names=list(bunch.feature_names),
        label_names={i: n for i, n in enumerate(bunch.target_names)},
    )


@pytest.fixture(scope="session")
def cancer_dataset():
    sklearn = pytest.importorskip("sklearn.datasets")
    bunch = sklearn.load_breast_cancer()
    return Dataset(
        X=bunch.data,
        y=bunch.target,
        feature_names=list(bunch.feature_names),
        label_names={i: n for i, n in enumerate(bunch.target_names)},
    )


@pytest.fixture(scope="session")
def heart_dataset():
    import os

    from geomfusion.data import load_csv

    path = os.environ.get("GEOMFUSION_HEART_CSV")
    if not path:
        pytest.skip("set GEOMFUSION_HEART_CSV to a local heart-disease CSV to run")
    return load_csv(path, label_column="HeartDisease")


def make_blobs_dataset(n=240, n_features=6, n_classes=3, seed=0, spread=0.8):
    """Well-separated gaussian blobs with a couple of correlated columns."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, n_classes, n)
    centers = rng.normal(0.0, 3.0, (n_classes, n_features))
    X = centers[y] + rng.normal(0.0, spread, (n, n_features))
    X = np.hstack([X, X[:, :2] * 0.5 + rng.normal(0.0, 0.3, (n, 2))])
    names = [f"f{i}" for i in range(X.shape[1])]
    return Dataset(X=X, y=y, feature_names=names)


@pytest.fixture
def blobs_dataset():
    return make_blobs_dataset()


@pytest.fixture
def blobs_anchor_model(blobs_dataset):
    corr = correlation(blobs_dataset, include_target=True)
    return build_anchor_model(corr, m=4)

import numpy as np
import pytest

from geomfusion.errors import DataError
from geomfusion.medoid import MedoidSet, euclidean_medoid, fit_class_medoids


def brute_force_medoid(points):
    """Independent oracle: O(n^2) loop; near-ties go to the lowest index."""
    costs = []
    for i in range(points.shape[0]):
        costs.append(
            sum(np.linalg.norm(points[i] - points[j]) for j in range(points.shape[0]))
        )
    low = min(costs)
    cutoff = low + 1e-9 * max(1.0, abs(low))
    for i, cost in enumerate(costs):
        if cost <= cutoff:
            return points[i]


class TestEuclideanMedoid:
    def test_matches_brute_force_below_cap(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            pts = rng.normal(0, 2, (rng.integers(1, 40), rng.integers(1, 6)))
            np.testing.assert_array_equal(
                euclidean_medoid(pts), brute_force_medoid(pts)
            )

    def test_tie_goes_to_lowest_index(self):
        pts = np.array([[0.0, 1.0], [0.0, -1.0]])  # symmetric pair, equal cost
        np.testing.assert_array_equal(euclidean_medoid(pts), pts[0])

    def test_medoid_is_an_actual_row(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(0, 1, (30, 4))
        mu = euclidean_medoid(pts)
        assert any(np.array_equal(mu, p) for p in pts)

    def test_subsample_above_cap_is_deterministic(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(0, 1, (50, 3))
        a = euclidean_medoid(pts, m_max=20, seed=4)
        b = euclidean_medoid(pts, m_max=20, seed=4)
        np.testing.assert_array_equal(a, b)
        assert any(np.array_equal(a, p) for p in pts)

    def test_empty_set_rejected(self):
        with pytest.raises(DataError, match="empty"):
            euclidean_medoid(np.empty((0, 3)))

    def test_single_point(self):
        np.testing.assert_array_equal(
            euclidean_medoid(np.array([[1.0, 2.0]])), [1.0, 2.0]
        )


class TestFitClassMedoids:
    def test_one_medoid_per_class_from_that_class(self):
        rng = np.random.default_rng(8)
        F = rng.normal(0, 1, (60, 3))
        y = rng.integers(0, 3, 60)
        ms = fit_class_medoids(F, y)
        assert ms.classes == [0, 1, 2]
        for c in ms.classes:
            rows = F[y == c]
            assert any(np.array_equal(ms.medoids[c], r) for r in rows)

    def test_as_matrix_sorted_by_class(self):
        F = np.array([[0.0], [10.0], [0.1], [10.1]])
        y = np.array([1, 0, 1, 0])
        ms = fit_class_medoids(F, y)
        M = ms.as_matrix()
        assert M[0, 0] in (10.0, 10.1) and M[1, 0] in (0.0, 0.1)

    def test_serialization_round_trip(self):
        F = np.random.default_rng(1).normal(0, 1, (20, 2))
        y = np.repeat([0, 1], 10)
        ms = fit_class_medoids(F, y)
        ms2 = MedoidSet.from_dict(ms.to_dict())
        for c in ms.classes:
            np.testing.assert_array_equal(ms.medoids[c], ms2.medoids[c])

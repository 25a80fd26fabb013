"""Class prototypes as subsampled Euclidean medoids in CGR feature space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError

DEFAULT_SUBSAMPLE_CAP = 2000


@dataclass
class MedoidSet:
    """One medoid per class; each medoid is an actual (sub)sampled row."""

    medoids: dict[int, np.ndarray]
    subsample_cap: int
    seed: int

    @property
    def classes(self) -> list[int]:
        return sorted(self.medoids)

    def as_matrix(self) -> np.ndarray:
        return np.stack([self.medoids[c] for c in self.classes])

    def to_dict(self) -> dict:
        return {str(c): mu.tolist() for c, mu in self.medoids.items()}

    @classmethod
    def from_dict(cls, d: dict, subsample_cap: int = DEFAULT_SUBSAMPLE_CAP, seed: int = 0):
        return cls(
            medoids={int(c): np.asarray(mu, float) for c, mu in d.items()},
            subsample_cap=subsample_cap,
            seed=seed,
        )


def euclidean_medoid(
    points: np.ndarray, m_max: int = DEFAULT_SUBSAMPLE_CAP, seed: int = 0
) -> np.ndarray:
    """Point minimizing the total Euclidean distance to the (sub)sampled set.

    Exact below the cap; above it, the argmin is taken within a seeded
    uniform subsample without replacement. Ties go to the lowest index.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if n == 0:
        raise DataError("cannot compute the medoid of an empty point set")
    if m_max < 1:
        raise DataError(f"m_max must be >= 1, got {m_max}")
    if n > m_max:
        rng = np.random.default_rng(seed)
        sample = points[rng.choice(n, size=m_max, replace=False)]
    else:
        sample = points
    dist = cdist(sample, sample)
    row_sums = dist.sum(axis=1)
    # near-ties (e.g. both medians of an even 1-d set) go to the lowest index
    cutoff = row_sums.min() + 1e-9 * max(1.0, abs(row_sums.min()))
    winner = int(np.flatnonzero(row_sums <= cutoff)[0])
    return sample[winner].copy()


def fit_class_medoids(
    F: np.ndarray, y: np.ndarray, m_max: int = DEFAULT_SUBSAMPLE_CAP, seed: int = 0
) -> MedoidSet:
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=int)
    medoids = {}
    for c in np.unique(y):
        rows = F[y == c]
        if rows.shape[0] == 0:
            raise DataError(f"class {c} has no rows")
        medoids[int(c)] = euclidean_medoid(rows, m_max=m_max, seed=seed)
    return MedoidSet(medoids=medoids, subsample_cap=m_max, seed=seed)

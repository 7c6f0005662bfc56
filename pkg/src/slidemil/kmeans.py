"""Lloyd's k-means with k-means++ seeding and deterministic tie-breaking."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .validation import as_rng, check_matrix


def _squared_distances(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("kcp,kcp->kc", diff, diff)


def kmeans_plusplus(X: np.ndarray, n_clusters: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first center uniform, then proportional to D^2."""
    k = X.shape[0]
    centers = np.empty((n_clusters, X.shape[1]))
    centers[0] = X[int(rng.integers(k))]
    d2 = np.square(X - centers[0]).sum(axis=1)
    for j in range(1, n_clusters):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(k))
        else:
            idx = int(rng.choice(k, p=d2 / total))
        centers[j] = X[idx]
        d2 = np.minimum(d2, np.square(X - centers[j]).sum(axis=1))
    return centers


class KMeansCluster(ClusterMixin, BaseEstimator):
    """Euclidean k-means: Lloyd iterations until the max centroid shift drops
    below ``tol`` or ``max_iter`` is reached.

    An empty cluster is repaired by reseeding its centroid on the point
    currently farthest from its assigned centroid. ``inertia_history_`` records
    the within-cluster sum of squares after each assignment, which Lloyd's
    updates make non-increasing.
    """

    def __init__(self, n_clusters: int = 4, init="k-means++", max_iter: int = 100, tol: float = 1e-6, random_state: int = 0):
        self.n_clusters = n_clusters
        self.init = init
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_matrix(X)
        k = X.shape[0]
        c = int(self.n_clusters)
        if c < 1 or c > k:
            raise ValueError(f"n_clusters must lie in [1, {k}], got {c}")
        if isinstance(self.init, str):
            if self.init != "k-means++":
                raise ValueError(f"unknown init {self.init!r}")
            rng = as_rng(self.random_state)
            centers = kmeans_plusplus(X, c, rng)
        else:
            centers = np.array(self.init, dtype=np.float64)
            if centers.shape != (c, X.shape[1]):
                raise ValueError(f"explicit init must have shape ({c}, {X.shape[1]})")

        history: list[float] = []
        labels = np.zeros(k, dtype=np.int64)
        for _ in range(int(self.max_iter)):
            d2 = _squared_distances(X, centers)
            labels = d2.argmin(axis=1)
            centers, labels = self._repair_empty(X, centers, labels)
            point_cost = np.square(X - centers[labels]).sum(axis=1)
            history.append(float(point_cost.sum()))
            new_centers = centers.copy()
            for j in range(c):
                members = labels == j
                new_centers[j] = X[members].mean(axis=0)
            shift = float(np.sqrt(np.square(new_centers - centers).sum(axis=1)).max())
            centers = new_centers
            if shift < self.tol:
                break
        d2 = _squared_distances(X, centers)
        labels = d2.argmin(axis=1)
        centers, labels = self._repair_empty(X, centers, labels)
        self.cluster_centers_ = centers
        self.labels_ = labels
        self.inertia_ = float(np.square(X - centers[labels]).sum())
        self.inertia_history_ = history
        self.n_iter_ = len(history)
        return self

    @staticmethod
    def _repair_empty(X, centers, labels):
        c = centers.shape[0]
        counts = np.bincount(labels, minlength=c)
        if counts.min() > 0:
            return centers, labels
        centers = centers.copy()
        labels = labels.copy()
        point_cost = np.square(X - centers[labels]).sum(axis=1)
        for j in np.flatnonzero(counts == 0):
            # never steal a cluster's last member, or the emptiness just moves
            eligible = counts[labels] > 1
            candidates = np.where(eligible, point_cost, -1.0)
            far = int(candidates.argmax())
            counts[labels[far]] -= 1
            counts[j] += 1
            centers[j] = X[far]
            labels[far] = j
            point_cost[far] = 0.0
        return centers, labels

    def predict(self, X) -> np.ndarray:
        X = check_matrix(X)
        return _squared_distances(X, self.cluster_centers_).argmin(axis=1)

"""Principal component analysis via eigendecomposition of the covariance."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import check_matrix


class PrincipalComponents(TransformerMixin, BaseEstimator):
    """Project onto the top principal directions of mean-centered data.

    Basis rows are orthonormal eigenvectors of the (population) covariance in
    decreasing eigenvalue order; each row is sign-fixed so its largest-
    magnitude component is positive.
    """

    def __init__(self, n_components: int = 8):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_matrix(X)
        k, d = X.shape
        if k < 2:
            raise ValueError("insufficient instances")
        p = int(self.n_components)
        if not (1 <= p <= min(k, d)):
            raise ValueError(f"n_components must lie in [1, min(k, d)] = [1, {min(k, d)}], got {p}")
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        cov = (centered.T @ centered) / k
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1][:p]
        basis = eigvecs[:, order].T.copy()
        for row in basis:
            j = int(np.abs(row).argmax())
            if row[j] < 0:
                row *= -1.0
        self.components_ = basis
        self.explained_variance_ = eigvals[order]
        return self

    def transform(self, X) -> np.ndarray:
        X = check_matrix(X)
        return (X - self.mean_) @ self.components_.T


def pca_fit_transform(X, n_components: int):
    """Convenience wrapper returning (fitted model, projected points)."""
    model = PrincipalComponents(n_components=n_components).fit(X)
    return model, model.transform(X)

"""Informative-tile selection from attention maps.

Two strategies: plain top-attention ranking, and cluster-guided selection
where instances are PCA-reduced, k-means clustered, and a per-cluster tile
budget is allocated proportionally to normalized cluster mean attention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .kmeans import KMeansCluster
from .pca import PrincipalComponents
from .preprocess import TileRef
from .validation import check_matrix, check_vector


@dataclass
class SelectionResult:
    """Chosen tiles plus the evidence that produced them."""

    selected: list[TileRef]
    selected_indices: list[int]
    alpha: np.ndarray
    cluster_labels: np.ndarray | None = None
    budgets: list[int] | None = None
    centroids: np.ndarray | None = field(default=None, repr=False)


def cluster_mean_attention(alpha, labels, n_clusters: int) -> np.ndarray:
    """Mean attention per cluster, normalized to sum to one.

    Empty clusters contribute zero before normalization.
    """
    a = check_vector(alpha, "alpha")
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(a):
        raise ValueError("alpha and labels must align")
    sums = np.bincount(labels, weights=a, minlength=n_clusters)
    counts = np.bincount(labels, minlength=n_clusters)
    means = np.divide(sums, counts, out=np.zeros(n_clusters), where=counts > 0)
    total = means.sum()
    if total <= 0.0:
        raise ValueError("attention mass is zero across all clusters")
    return means / total


def allocate_budget(cluster_attention, total: int, sizes: Sequence[int]) -> list[int]:
    """Integer per-cluster budgets proportional to cluster attention.

    Ideal shares total * abar_j are capped at cluster size and integerized by
    the largest-remainder rule (ties to the lower cluster index); capacity
    freed by capped clusters is redistributed among the rest by the same rule.
    Budgets always sum to min(total, sum(sizes)). Shares are computed in exact
    rational arithmetic so remainder ordering is unambiguous.
    """
    abar = check_vector(cluster_attention, "cluster_attention")
    sizes = [int(s) for s in sizes]
    if len(sizes) != len(abar):
        raise ValueError("cluster_attention and sizes must align")
    if total < 1:
        raise ValueError(f"total must be >= 1, got {total}")
    n = len(sizes)
    goal = min(int(total), sum(sizes))
    weights = [Fraction(float(w)) for w in abar]
    capped: dict[int, int] = {}
    assignment: dict[int, int] = {}
    while True:
        active = [j for j in range(n) if j not in capped]
        remaining = goal - sum(capped.values())
        if not active or remaining <= 0:
            assignment = dict(capped)
            assignment.update({j: 0 for j in active})
            break
        weight_sum = sum(weights[j] for j in active)
        if weight_sum == 0:
            # zero attention everywhere: hand out units round-robin by index
            base = {j: 0 for j in active}
            while remaining > 0:
                for j in active:
                    if remaining > 0 and base[j] < sizes[j]:
                        base[j] += 1
                        remaining -= 1
            assignment = dict(capped)
            assignment.update(base)
            break
        shares = {j: Fraction(remaining) * weights[j] / weight_sum for j in active}
        base = {j: int(shares[j]) for j in active}
        leftover = remaining - sum(base.values())
        order = sorted(active, key=lambda j: (-(shares[j] - base[j]), j))
        for j in order[:leftover]:
            base[j] += 1
        over = [j for j in active if base[j] > sizes[j]]
        if not over:
            assignment = dict(capped)
            assignment.update(base)
            break
        for j in over:
            capped[j] = sizes[j]
    return [assignment[j] for j in range(n)]


def select_top_attention(
    tile_refs: Sequence[TileRef],
    alpha,
    n_select: int | None = None,
    top_percentile: float | None = None,
) -> SelectionResult:
    """Top tiles by attention, descending, ties broken by bag order.

    Give either an absolute count or a percentile (count = ceil(k * p / 100)).
    """
    a = check_vector(alpha, "alpha")
    k = len(tile_refs)
    if len(a) != k:
        raise ValueError("alpha and tile_refs must align")
    if (n_select is None) == (top_percentile is None):
        raise ValueError("give exactly one of n_select or top_percentile")
    if top_percentile is not None:
        if not (0.0 < top_percentile <= 100.0):
            raise ValueError(f"top_percentile must lie in (0, 100], got {top_percentile}")
        n_select = math.ceil(k * top_percentile / 100.0)
    n_select = min(int(n_select), k)
    if n_select < 1:
        raise ValueError("empty selection budget")
    order = sorted(range(k), key=lambda i: (-a[i], i))[:n_select]
    return SelectionResult(
        selected=[tile_refs[i] for i in order],
        selected_indices=list(order),
        alpha=a,
    )


def select_attention_clusters(
    tile_refs: Sequence[TileRef],
    alpha,
    features,
    n_components: int,
    n_clusters: int,
    total: int,
    seed: int = 0,
) -> SelectionResult:
    """Cluster-guided selection: PCA -> k-means -> mean-attention budgets.

    Within each cluster tiles are taken by descending attention, ties by bag
    order. Degenerate bags fall back gracefully: fewer instances than clusters
    shrinks the cluster count, and a single-instance bag is selected outright.
    """
    a = check_vector(alpha, "alpha")
    V = check_matrix(features, "features")
    k = len(tile_refs)
    if len(a) != k or V.shape[0] != k:
        raise ValueError("alpha, features, and tile_refs must align")
    if total < 1:
        raise ValueError("empty selection budget")
    if k == 1:
        return SelectionResult(
            selected=[tile_refs[0]],
            selected_indices=[0],
            alpha=a,
            cluster_labels=np.zeros(1, dtype=np.int64),
            budgets=[1],
        )
    c = min(int(n_clusters), k)
    p = min(int(n_components), k, V.shape[1])
    projected = PrincipalComponents(n_components=p).fit_transform(V)
    km = KMeansCluster(n_clusters=c, random_state=seed).fit(projected)
    abar = cluster_mean_attention(a, km.labels_, c)
    sizes = np.bincount(km.labels_, minlength=c)
    budgets = allocate_budget(abar, total, sizes)
    indices: list[int] = []
    for j in range(c):
        members = np.flatnonzero(km.labels_ == j)
        ranked = sorted(members, key=lambda i: (-a[i], i))
        indices.extend(int(i) for i in ranked[: budgets[j]])
    return SelectionResult(
        selected=[tile_refs[i] for i in indices],
        selected_indices=indices,
        alpha=a,
        cluster_labels=km.labels_,
        budgets=budgets,
        centroids=km.cluster_centers_,
    )


def write_selection_csv(path, tile_refs: Sequence[TileRef], result: SelectionResult) -> None:
    """CSV of every tile: tile_x, tile_y, alpha, cluster, selected(0/1)."""
    chosen = set(result.selected_indices)
    labels = result.cluster_labels
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tile_x,tile_y,alpha,cluster,selected\n")
        for i, ref in enumerate(tile_refs):
            cluster = int(labels[i]) if labels is not None else -1
            fh.write(f"{ref.x},{ref.y},{result.alpha[i]:.8f},{cluster},{1 if i in chosen else 0}\n")

"""Deterministic agglomerative clustering over cosine distances.

Implemented in-house rather than delegated so that tie-breaking, the
threshold boundary, and floating-point behavior are pinned down: merging is
bottom-up with Lance-Williams updates, always taking the pair with the
smallest distance (ties broken by the lexicographically smallest index
pair), and merging strictly while distance < threshold. Identical inputs
therefore always land in one cluster for any positive threshold, and the
whole procedure is reproducible across processes.
"""

from __future__ import annotations

import numpy as np

LINKAGES = ("average", "complete")

# Distances below this are treated as exact duplicates; normalization noise
# on identical vectors must not survive a "merge duplicates at any positive
# threshold" cut.
_DUPLICATE_EPS = 1e-12


def cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise cosine distances of unit vectors, snapped into [0, 2].

    Uses an unoptimized einsum so the summation order (and thus the exact
    float result) does not depend on the BLAS backend.
    """
    v = np.asarray(vectors, dtype=np.float64)
    sims = np.einsum("id,jd->ij", v, v, optimize=False)
    dist = 1.0 - sims
    np.clip(dist, 0.0, 2.0, out=dist)
    dist[dist < _DUPLICATE_EPS] = 0.0
    np.fill_diagonal(dist, 0.0)
    return dist


def agglomerate(
    distances: np.ndarray, threshold: float, linkage: str = "average"
) -> list[int]:
    """Cluster items, merging while inter-cluster distance < threshold.

    Returns one label per item; labels are dense and ordered by each
    cluster's smallest member index.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    n = len(distances)
    if n == 0:
        return []
    if n == 1:
        return [0]
    work = np.array(distances, dtype=np.float64)
    np.fill_diagonal(work, np.inf)
    sizes = np.ones(n, dtype=np.int64)
    members: list[list[int] | None] = [[i] for i in range(n)]
    active = np.ones(n, dtype=bool)
    while active.sum() > 1:
        flat = np.argmin(work)
        i, j = divmod(int(flat), n)
        if i > j:
            i, j = j, i
        if not work[i, j] < threshold:
            break
        keep = active.copy()
        keep[i] = keep[j] = False
        if linkage == "average":
            merged_row = (sizes[i] * work[i] + sizes[j] * work[j]) / (sizes[i] + sizes[j])
        else:
            merged_row = np.maximum(work[i], work[j])
        work[i, :] = np.where(keep, merged_row, np.inf)
        work[:, i] = work[i, :]
        work[i, i] = np.inf
        work[j, :] = np.inf
        work[:, j] = np.inf
        sizes[i] += sizes[j]
        members[i].extend(members[j])  # type: ignore[union-attr]
        members[j] = None
        active[j] = False
    clusters = [sorted(m) for m in members if m is not None]
    clusters.sort(key=lambda c: c[0])
    labels = [0] * n
    for label, cluster in enumerate(clusters):
        for index in cluster:
            labels[index] = label
    return labels


def cluster_groups(labels: list[int]) -> list[list[int]]:
    """Member indices per cluster label, in label order."""
    groups: dict[int, list[int]] = {}
    for index, label in enumerate(labels):
        groups.setdefault(label, []).append(index)
    return [groups[label] for label in sorted(groups)]

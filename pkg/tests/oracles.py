"""Independent reference implementations used as oracles.

Each oracle re-derives the expected answer from the definition, separately
from the package's code paths, so a test that compares the two is a real
dual-route check and not a tautology.
"""

from __future__ import annotations

import hashlib
import math


def kappa_reference(a, b) -> float:
    """Cohen's kappa straight from the definition: observed agreement vs
    chance agreement from the raters' marginal distributions."""
    assert len(a) == len(b) and a
    n = len(a)
    agree = sum(1 for x, y in zip(a, b) if x == y)
    p_o = agree / n
    labels = sorted(set(a) | set(b), key=repr)
    p_e = 0.0
    for label in labels:
        p_a = sum(1 for x in a if x == label) / n
        p_b = sum(1 for y in b if y == label) / n
        p_e += p_a * p_b
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def chunk_boundaries_reference(timestamps, min_gap, factor) -> list[int]:
    """Boundary positions re-derived literally: a boundary before message i
    needs gap >= min_gap and gap >= factor * median of nonzero gaps."""
    gaps = [t1 - t0 for t0, t1 in zip(timestamps, timestamps[1:])]
    nonzero = sorted(g for g in gaps if g > 0)
    if nonzero:
        mid = len(nonzero) // 2
        if len(nonzero) % 2:
            median = nonzero[mid]
        else:
            median = (nonzero[mid - 1] + nonzero[mid]) / 2
    else:
        median = 0.0
    out = []
    for i, gap in enumerate(gaps):
        if gap >= min_gap and gap >= factor * median:
            out.append(i + 1)
    return out


def stub_embedding_reference(text: str, dim: int = 64, seed: int = 0) -> list[float]:
    """Re-implementation of the stub embedder's hash-projection formula."""
    normalized = " ".join(text.lower().split())
    padded = f" {normalized} "
    total = [0.0] * dim
    for start in range(len(padded) - 2):
        gram = padded[start : start + 3]
        values: list[float] = []
        block = 0
        while len(values) < dim:
            digest = hashlib.sha256(f"{seed}:{gram}|{block}".encode()).digest()
            for off in range(0, 32, 4):
                values.append(int.from_bytes(digest[off : off + 4], "big") / 2**31 - 1.0)
            block += 1
        for k in range(dim):
            total[k] += values[k]
    norm = math.sqrt(sum(v * v for v in total))
    return [v / norm for v in total]


def agglomerative_partition_reference(dist, threshold, linkage) -> set[frozenset]:
    """Naive O(n^3) agglomerative clustering: repeatedly merge the closest
    pair while its distance is strictly below the threshold."""
    n = len(dist)
    clusters: list[list[int]] = [[i] for i in range(n)]

    def cluster_distance(c1, c2):
        pairs = [dist[i][j] for i in c1 for j in c2]
        return (sum(pairs) / len(pairs)) if linkage == "average" else max(pairs)

    while len(clusters) > 1:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                d = cluster_distance(clusters[i], clusters[j])
                if best is None or d < best[0]:
                    best = (d, i, j)
        if best is None or not best[0] < threshold:
            break
        _, i, j = best
        clusters[i] = clusters[i] + clusters[j]
        del clusters[j]
    return {frozenset(c) for c in clusters}


def scipy_partition(dist_matrix, threshold, linkage) -> set[frozenset]:
    """Dendrogram cut via scipy for cross-validation on generic inputs.

    scipy's fcluster cut is inclusive (d <= t) where ours is strict (d < t);
    callers must pick thresholds away from exact merge distances.
    """
    import numpy as np
    from scipy.cluster.hierarchy import fcluster, linkage as scipy_linkage
    from scipy.spatial.distance import squareform

    condensed = squareform(np.asarray(dist_matrix), checks=False)
    tree = scipy_linkage(condensed, method=linkage)
    # Move the cut just below our strict threshold.
    cut = np.nextafter(threshold, -np.inf)
    labels = fcluster(tree, t=cut, criterion="distance")
    groups: dict[int, list[int]] = {}
    for index, label in enumerate(labels):
        groups.setdefault(int(label), []).append(index)
    return {frozenset(group) for group in groups.values()}

"""Independent reference implementations used only by the tests."""

from itertools import combinations

import numpy as np


def brute_force_concepts(incidence):
    """Every (extent, intent) pair, found by closing all 2^m attribute subsets."""
    inc = np.asarray(incidence, dtype=bool)
    n, m = inc.shape
    found = set()
    for r in range(m + 1):
        for attrs in combinations(range(m), r):
            ext = frozenset(i for i in range(n) if all(inc[i, j] for j in attrs))
            intent = frozenset(j for j in range(m) if all(inc[i, j] for i in ext))
            if intent == frozenset(attrs):
                found.add((ext, intent))
    return found


def naive_ward(points):
    """Ward agglomeration recomputing every cluster distance from centroids.

    Returns [(id_a, id_b, height, size)] with scipy-style ids and the
    sqrt(2 na nb / (na + nb)) * ||ca - cb|| height convention.
    """
    x = np.asarray(points, dtype=float)
    n = len(x)
    clusters = {i: [i] for i in range(n)}
    merges = []
    for step in range(n - 1):
        best = None
        ids = sorted(clusters)
        for a_pos, a in enumerate(ids):
            ca = x[clusters[a]].mean(axis=0)
            na = len(clusters[a])
            for b in ids[a_pos + 1 :]:
                cb = x[clusters[b]].mean(axis=0)
                nb = len(clusters[b])
                h = np.sqrt(2.0 * na * nb / (na + nb)) * np.linalg.norm(ca - cb)
                if best is None or h < best[0]:
                    best = (h, a, b)
        h, a, b = best
        clusters[n + step] = clusters.pop(a) + clusters.pop(b)
        merges.append((a, b, float(h), len(clusters[n + step])))
    return merges


def partition(labels):
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, set()).add(i)
    return {frozenset(g) for g in groups.values()}

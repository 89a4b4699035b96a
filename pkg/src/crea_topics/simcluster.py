"""Concept-based term similarity, feature scaling, Ward clustering and maxclust cuts."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DomainError, UnknownReferenceError
from .fca import FormalConcept, FormalContext


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    term_keys: tuple[str, ...]
    values: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["term", *self.term_keys])
            for t, row in zip(self.term_keys, self.values):
                w.writerow([t, *(f"{v:.6f}" for v in row)])


def conceptual_similarity(
    concepts: Sequence[FormalConcept], term_keys: Sequence[str]
) -> SimilarityMatrix:
    """Jaccard index of the sets of concepts whose intents contain each term.

    ``sim(t, t) = 1``; two terms that belong to no concept have similarity 0.
    """
    term_keys = tuple(term_keys)
    known = set().union(*(c.intent for c in concepts)) if concepts else set()
    # every attribute of the context lies in the bottom intent
    for t in term_keys:
        if concepts and t not in known:
            raise UnknownReferenceError(f"term {t!r} does not occur in any concept intent")
    member = {t: 0 for t in term_keys}
    for idx, c in enumerate(concepts):
        bit = 1 << idx
        for t in c.intent:
            if t in member:
                member[t] |= bit
    m = len(term_keys)
    values = np.eye(m)
    for a in range(m):
        ca = member[term_keys[a]]
        for b in range(a + 1, m):
            cb = member[term_keys[b]]
            union = (ca | cb).bit_count()
            v = (ca & cb).bit_count() / union if union else 0.0
            values[a, b] = values[b, a] = v
    values.setflags(write=False)
    return SimilarityMatrix(term_keys, values)


def concept_membership(concepts: Sequence[FormalConcept], term_keys: Sequence[str]) -> np.ndarray:
    """Term x concept 0/1 indicator matrix; the alternative feature representation."""
    out = np.zeros((len(term_keys), len(concepts)))
    index = {t: i for i, t in enumerate(term_keys)}
    for j, c in enumerate(concepts):
        for t in c.intent:
            if t in index:
                out[index[t], j] = 1.0
    return out


def standardize_features(values) -> np.ndarray:
    """Column-wise zero mean / unit population variance; constant columns become 0."""
    x = np.array(values.values if isinstance(values, SimilarityMatrix) else values, dtype=float)
    if x.ndim != 2:
        raise DomainError("features must be a 2-D array")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    centered = x - mean
    out = np.zeros_like(x)
    # exact constancy test; std of a constant column can be rounding noise
    nz = (std > 0) & (x != x[:1]).any(axis=0)
    out[:, nz] = centered[:, nz] / std[nz]
    return out


@dataclass(frozen=True)
class Merge:
    a: int
    b: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge history with scipy-compatible cluster ids (merge ``i`` creates id ``n + i``)."""

    n: int
    merges: tuple[Merge, ...]

    def as_array(self) -> np.ndarray:
        return np.array([[m.a, m.b, m.height, m.size] for m in self.merges], dtype=float).reshape(-1, 4)

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges])

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "merges": [
                    {"a": m.a, "b": m.b, "height": round(m.height, 12), "size": m.size}
                    for m in self.merges
                ],
            },
            indent=1,
        )


def ward_linkage(features) -> Dendrogram:
    """Ward agglomeration with Lance-Williams updates on squared distances.

    Heights follow the scipy convention: the merge distance between clusters
    ``A`` and ``B`` is ``sqrt(2 |A||B| / (|A|+|B|)) * ||c_A - c_B||`` (plain
    Euclidean distance for two singletons). Ties on the minimum distance go to
    the lexicographically smallest (id, id) pair.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DomainError("ward linkage needs at least 2 feature rows")
    n = x.shape[0]
    d = squareform(pdist(x, "sqeuclidean"))
    np.fill_diagonal(d, np.inf)
    active = np.ones(n, dtype=bool)
    slot_id = np.arange(n)
    size = np.ones(n)
    merges = []
    for step in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], d, np.inf)
        best = masked.min()
        ii, jj = np.nonzero(masked == best)
        pairs = [(min(slot_id[i], slot_id[j]), max(slot_id[i], slot_id[j]), i, j) for i, j in zip(ii, jj)]
        ida, idb, i, j = min(pairs)
        ni, nj = size[i], size[j]
        merges.append(Merge(int(ida), int(idb), float(np.sqrt(best)), int(ni + nj)))
        # Lance-Williams for Ward on squared distances; result goes to slot i
        nk = size
        t = ni + nj + nk
        new = ((ni + nk) * d[i] + (nj + nk) * d[j] - nk * best) / t
        new = np.maximum(new, 0.0)
        d[i, :] = new
        d[:, i] = new
        d[i, i] = np.inf
        active[j] = False
        d[j, :] = np.inf
        d[:, j] = np.inf
        size[i] = ni + nj
        slot_id[i] = n + step
    return Dendrogram(n, tuple(merges))


@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple[int, ...]
    items: tuple[str, ...] | None = None

    @property
    def k(self) -> int:
        return len(set(self.labels))

    def clusters(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for i, lab in enumerate(self.labels):
            out.setdefault(lab, []).append(i)
        return dict(sorted(out.items()))

    def as_mapping(self) -> dict[str, int]:
        names = self.items or tuple(str(i) for i in range(len(self.labels)))
        return dict(zip(names, self.labels))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["term", "cluster"])
            for name, lab in self.as_mapping().items():
                w.writerow([name, lab])


def cut_maxclust(dendrogram: Dendrogram, k: int, items: Sequence[str] | None = None) -> ClusterAssignment:
    """Flat clusters from the lowest cut height that yields at most ``k`` clusters.

    Labels run 1..k in order of each cluster's first member.
    """
    n = dendrogram.n
    if not 1 <= k <= n:
        raise DomainError(f"k={k} outside [1, {n}]")
    merges = dendrogram.merges
    if k == n:
        n_apply = 0
    else:
        cut = merges[n - k - 1].height
        n_apply = n - k
        while n_apply < len(merges) and merges[n_apply].height <= cut:
            n_apply += 1
    parent = list(range(n + len(merges)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for step in range(n_apply):
        m = merges[step]
        new = n + step
        parent[find(m.a)] = new
        parent[find(m.b)] = new

    labels, seen = [], {}
    for i in range(n):
        root = find(i)
        if root not in seen:
            seen[root] = len(seen) + 1
        labels.append(seen[root])
    return ClusterAssignment(tuple(labels), tuple(items) if items is not None else None)


FeatureBuilder = Callable[[Sequence[FormalConcept], Sequence[str]], np.ndarray]


def similarity_features(concepts, term_keys) -> np.ndarray:
    return conceptual_similarity(concepts, term_keys).values


FEATURES: dict[str, FeatureBuilder] = {
    "similarity": similarity_features,
    "membership": concept_membership,
}


def cluster_terms(
    context: FormalContext,
    concepts: Sequence[FormalConcept],
    ks: Sequence[int],
    features: str = "similarity",
) -> tuple[np.ndarray, Dendrogram, dict[int, ClusterAssignment]]:
    """Standardized features, Ward dendrogram and one maxclust assignment per k."""
    terms = context.attributes
    x = standardize_features(FEATURES[features](concepts, terms))
    dendro = ward_linkage(x)
    return x, dendro, {k: cut_maxclust(dendro, k, terms) for k in ks}

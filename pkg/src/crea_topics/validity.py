"""Cluster-structure and internal validity metrics, and the strategy x beta x k sweep.

All distances are Euclidean on the standardized feature rows. Degenerate
perfect separations (zero within-cluster spread, coincident centroids) are
reported as ``inf`` rather than a large finite number.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .binarize import BinarizationSpec, binarize_matrix, retained_terms
from .errors import CreaError, DomainError
from .fca import DEFAULT_CONCEPT_CEILING, enumerate_concepts
from .simcluster import ClusterAssignment, cluster_terms
from .term_extraction import TermFrequencyMatrix

log = logging.getLogger(__name__)

INF = math.inf
CSV_COLUMNS = ["strategy", "beta", "k", "silhouette", "chi", "dunn", "dbi",
               "min", "max", "balance", "largest_pct"]


def _labels(assignment) -> np.ndarray:
    if isinstance(assignment, ClusterAssignment):
        return np.asarray(assignment.labels)
    return np.asarray(assignment)


def _groups(points, assignment) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    labels = _labels(assignment)
    if len(labels) != len(x):
        raise DomainError(f"{len(labels)} labels for {len(x)} points")
    uniq = np.unique(labels)
    return x, labels, [np.flatnonzero(labels == u) for u in uniq]


def silhouette(points, assignment) -> float:
    """Mean silhouette; singleton members contribute 0, as does a = b = 0."""
    x, labels, groups = _groups(points, assignment)
    if len(groups) < 2:
        raise DomainError("silhouette needs at least 2 clusters")
    d = squareform(pdist(x))
    scores = np.zeros(len(x))
    for gi, idx in enumerate(groups):
        if len(idx) == 1:
            continue
        a = d[np.ix_(idx, idx)].sum(axis=1) / (len(idx) - 1)
        b = np.full(len(idx), np.inf)
        for gj, other in enumerate(groups):
            if gj != gi:
                b = np.minimum(b, d[np.ix_(idx, other)].mean(axis=1))
        denom = np.maximum(a, b)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(denom > 0, (b - a) / denom, 0.0)
        scores[idx] = s
    return float(scores.mean())


def calinski_harabasz(points, assignment) -> float:
    x, labels, groups = _groups(points, assignment)
    n, k = len(x), len(groups)
    if not 2 <= k < n:
        raise DomainError(f"Calinski-Harabasz needs 2 <= k < n, got k={k}, n={n}")
    centre = x.mean(axis=0)
    between = within = 0.0
    for idx in groups:
        c = x[idx].mean(axis=0)
        between += len(idx) * float(((c - centre) ** 2).sum())
        within += float(((x[idx] - c) ** 2).sum())
    if within == 0:
        return INF
    return (between / (k - 1)) / (within / (n - k))


def dunn_index(points, assignment) -> float:
    """Smallest single-linkage gap between clusters over the largest complete diameter."""
    x, labels, groups = _groups(points, assignment)
    if len(groups) < 2:
        raise DomainError("Dunn index needs at least 2 clusters")
    diameter = max(float(pdist(x[idx]).max()) if len(idx) > 1 else 0.0 for idx in groups)
    gap = min(
        float(cdist(x[gi], x[gj]).min())
        for a, gi in enumerate(groups)
        for gj in groups[a + 1 :]
    )
    if diameter == 0:
        return INF
    return gap / diameter


def davies_bouldin(points, assignment) -> float:
    x, labels, groups = _groups(points, assignment)
    k = len(groups)
    if k < 2:
        raise DomainError("Davies-Bouldin needs at least 2 clusters")
    centroids = np.array([x[idx].mean(axis=0) for idx in groups])
    spread = np.array(
        [float(np.linalg.norm(x[idx] - c, axis=1).mean()) for idx, c in zip(groups, centroids)]
    )
    sep = squareform(pdist(centroids))
    worst = np.zeros(k)
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            if sep[i, j] == 0:
                return INF
            worst[i] = max(worst[i], (spread[i] + spread[j]) / sep[i, j])
    return float(worst.mean())


@dataclass(frozen=True)
class StructureMetrics:
    min_size: int
    max_size: int
    balance_ratio: float
    largest_pct: float


def structure_metrics(assignment) -> StructureMetrics:
    labels = _labels(assignment)
    if len(labels) == 0:
        raise DomainError("empty assignment")
    _, sizes = np.unique(labels, return_counts=True)
    lo, hi = int(sizes.min()), int(sizes.max())
    return StructureMetrics(lo, hi, lo / hi, 100.0 * hi / len(labels))


@dataclass(frozen=True)
class ValidityReport:
    k: int
    silhouette: float
    calinski_harabasz: float
    dunn: float
    davies_bouldin: float
    min_size: int
    max_size: int
    balance_ratio: float
    largest_pct: float


def validity_report(points, assignment) -> ValidityReport:
    st = structure_metrics(assignment)
    return ValidityReport(
        k=len(np.unique(_labels(assignment))),
        silhouette=silhouette(points, assignment),
        calinski_harabasz=calinski_harabasz(points, assignment),
        dunn=dunn_index(points, assignment),
        davies_bouldin=davies_bouldin(points, assignment),
        min_size=st.min_size,
        max_size=st.max_size,
        balance_ratio=st.balance_ratio,
        largest_pct=st.largest_pct,
    )


@dataclass(frozen=True)
class SweepRow:
    strategy: str
    beta: float
    k: int
    report: ValidityReport | None = None
    error: str | None = None
    n_terms: int = 0
    n_concepts: int = 0


def _fmt(v: float) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return f"{v:.6f}"


def _sweep_cell(matrix, spec, ks, features, ceiling) -> list[SweepRow]:
    tag = (spec.strategy.value, spec.beta)
    try:
        n_terms, ctx = retained_terms(binarize_matrix(matrix, spec))
        if n_terms < 2:
            raise DomainError(f"only {n_terms} term(s) retained; nothing to cluster")
        concepts = enumerate_concepts(ctx, ceiling=ceiling)
        x, _, assignments = cluster_terms(ctx, concepts, [k for k in ks if 1 <= k <= n_terms], features)
    except CreaError as exc:
        return [SweepRow(*tag, k, error=str(exc)) for k in ks]
    rows = []
    for k in ks:
        if k not in assignments:
            rows.append(SweepRow(*tag, k, error=f"k={k} outside [1, {n_terms}]", n_terms=n_terms,
                                 n_concepts=len(concepts)))
            continue
        try:
            report = validity_report(x, assignments[k])
        except CreaError as exc:
            rows.append(SweepRow(*tag, k, error=str(exc), n_terms=n_terms, n_concepts=len(concepts)))
        else:
            rows.append(SweepRow(*tag, k, report=report, n_terms=n_terms, n_concepts=len(concepts)))
    return rows


def sweep(
    matrix: TermFrequencyMatrix,
    strategies: Iterable[str],
    betas: Iterable[float],
    k_range: Iterable[int],
    features: str = "similarity",
    jobs: int = 1,
    ceiling: int = DEFAULT_CONCEPT_CEILING,
) -> list[SweepRow]:
    """One row per (strategy, beta, k), ordered by strategy, then beta, then k.

    Failing cells become rows carrying ``error`` and the sweep carries on.
    """
    ks = list(k_range)
    specs = [BinarizationSpec(s, float(b)) for s in strategies for b in betas]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(lambda sp: _sweep_cell(matrix, sp, ks, features, ceiling), specs))
    else:
        chunks = [_sweep_cell(matrix, sp, ks, features, ceiling) for sp in specs]
    rows = [r for chunk in chunks for r in chunk]
    for r in rows:
        if r.error:
            log.warning("sweep cell %s beta=%.2f k=%d failed: %s", r.strategy, r.beta, r.k, r.error)
    return rows


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    """CSV text; error rows keep their keys and leave the metric cells empty."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        head = [r.strategy, f"{r.beta:.2f}", r.k]
        if r.report is None:
            w.writerow(head + [""] * 8)
            continue
        rep = r.report
        w.writerow(head + [_fmt(v) for v in (
            rep.silhouette, rep.calinski_harabasz, rep.dunn, rep.davies_bouldin,
            rep.min_size, rep.max_size, rep.balance_ratio, rep.largest_pct,
        )])
    return buf.getvalue()


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path) -> None:
    Path(path).write_text(sweep_to_csv(rows), encoding="utf-8")


def _md(v: float) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "inf" if math.isinf(v) else f"{v:.2f}"


def sweep_to_markdown(rows: Sequence[SweepRow]) -> str:
    """Markdown metric tables, one per (strategy, beta)."""
    out = []
    current = None
    for r in rows:
        if (r.strategy, r.beta) != current:
            current = (r.strategy, r.beta)
            if out:
                out.append("")
            out.append(f"### {r.strategy} strategy, beta = {r.beta:.2f}")
            out.append("")
            out.append("| k | Silh. (↑) | CHI (↑) | DI (↑) | DBI (↓) | min | max | BalanceRatio | Largest (%) |")
            out.append("|---|---|---|---|---|---|---|---|---|")
        if r.report is None:
            out.append(f"| {r.k} | error: {r.error} | | | | | | | |")
            continue
        rep = r.report
        cells = [rep.silhouette, rep.calinski_harabasz, rep.dunn, rep.davies_bouldin,
                 rep.min_size, rep.max_size, rep.balance_ratio, rep.largest_pct]
        out.append("| " + " | ".join([str(r.k)] + [_md(c) for c in cells]) + " |")
    return "\n".join(out) + "\n"

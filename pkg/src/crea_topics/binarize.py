"""Binarization of the term-frequency matrix into a formal context.

Thresholds are per term and use the mean ``mu`` and population standard
deviation ``sigma`` of the term's *nonzero* frequencies, scaled by ``beta``:

=========  ==========================================
Direct     ``f > 0``
High       ``f > mu + beta*sigma``
Low        ``0 < f < mu - beta*sigma``
Medium     ``f > 0 and mu - beta*sigma <= f <= mu + beta*sigma``
=========  ==========================================

Comparisons are made on the standardized value ``(f - mu) / sigma`` (zero
when ``sigma = 0``), which keeps the boundaries exact in floating point.
Strict bounds for High/Low and inclusive bounds for Medium mean that at
``beta = 0`` every nonzero cell is claimed by exactly one of High, Low or
Medium. The rule is a reconstruction; :data:`RULES` is the seam for
swapping in a different one.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError
from .fca import FormalContext
from .term_extraction import TermFrequencyMatrix


class Strategy(str, enum.Enum):
    DIRECT = "Direct"
    LOW = "Low"
    HIGH = "High"
    MEDIUM = "Medium"

    @classmethod
    def parse(cls, name: str | "Strategy") -> "Strategy":
        if isinstance(name, Strategy):
            return name
        for s in cls:
            if s.value.lower() == str(name).strip().lower():
                return s
        raise DomainError(f"unknown binarization strategy {name!r}")


@dataclass(frozen=True)
class BinarizationSpec:
    strategy: Strategy
    beta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if not (self.beta >= 0) or math.isinf(self.beta):
            raise DomainError(f"beta must be a finite value >= 0, got {self.beta}")

    @property
    def label(self) -> str:
        return f"{self.strategy.value}-{self.beta:.2f}"


@dataclass(frozen=True)
class TermStats:
    mean: float
    stddev: float


def column_stats(values: np.ndarray) -> TermStats:
    nz = np.asarray(values, dtype=float)
    nz = nz[nz != 0]
    if nz.size == 0:
        raise DomainError("term has no nonzero frequency")
    mean = float(nz.mean())
    # exact zero for constant columns, not rounding noise
    std = 0.0 if np.all(nz == nz[0]) else float(nz.std())
    return TermStats(mean, std)


def term_value_stats(matrix: TermFrequencyMatrix, term: str) -> TermStats:
    """Mean and population standard deviation of the term's nonzero frequencies."""
    return column_stats(matrix.column(term))


def _direct(f, z, beta):
    return f > 0


def _high(f, z, beta):
    return (f > 0) & (z > beta)


def _low(f, z, beta):
    return (f > 0) & (z < -beta)


def _medium(f, z, beta):
    return (f > 0) & (np.abs(z) <= beta)


# rule(frequencies, standardized frequencies, beta) -> cell mask
Rule = Callable[[np.ndarray, np.ndarray, float], np.ndarray]

RULES: dict[Strategy, Rule] = {
    Strategy.DIRECT: _direct,
    Strategy.HIGH: _high,
    Strategy.LOW: _low,
    Strategy.MEDIUM: _medium,
}


def _zscores(col: np.ndarray) -> np.ndarray:
    st = column_stats(col)
    if st.stddev == 0:
        return np.zeros_like(col)
    return (col - st.mean) / st.stddev


def binarize_matrix(matrix: TermFrequencyMatrix, spec: BinarizationSpec) -> FormalContext:
    n, m = matrix.shape
    if n == 0 or m == 0:
        raise DomainError("cannot binarize an empty matrix")
    counts = np.asarray(matrix.counts, dtype=float)
    rule = RULES[spec.strategy]
    out = np.zeros((n, m), dtype=bool)
    for j in range(m):
        col = counts[:, j]
        if not col.any():
            continue
        out[:, j] = rule(col, _zscores(col), spec.beta)
    return FormalContext(matrix.doc_ids, matrix.term_keys, out)


def retained_terms(context: FormalContext) -> tuple[int, FormalContext]:
    """Number of attributes with at least one cross, and the context restricted to them."""
    keep = context.incidence.any(axis=0)
    reduced = FormalContext(
        context.objects,
        [a for a, k in zip(context.attributes, keep) if k],
        context.incidence[:, keep],
    )
    return int(keep.sum()), reduced


def saturation_beta(matrix: TermFrequencyMatrix) -> float:
    """Smallest beta from which Medium keeps every nonzero cell: max over terms of max|f-mu|/sigma."""
    worst = 0.0
    for j in range(matrix.shape[1]):
        col = np.asarray(matrix.counts[:, j], dtype=float)
        if not col.any():
            continue
        z = _zscores(col)[col != 0]
        worst = max(worst, float(np.max(np.abs(z))))
    return worst

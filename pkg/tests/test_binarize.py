import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crea_topics.binarize import (
    BinarizationSpec,
    Strategy,
    binarize_matrix,
    retained_terms,
    saturation_beta,
    term_value_stats,
)
from crea_topics.errors import DomainError
from crea_topics.term_extraction import TermFrequencyMatrix


def _matrix(counts):
    counts = np.asarray(counts)
    n, m = counts.shape
    return TermFrequencyMatrix(tuple(f"d{i}" for i in range(n)), tuple(f"t{j}" for j in range(m)), counts)


matrices = arrays(np.int64, st.tuples(st.integers(2, 8), st.integers(1, 6)), elements=st.integers(0, 9))


def _cells(matrix, strategy, beta):
    return binarize_matrix(matrix, BinarizationSpec(strategy, beta)).incidence


def test_spec_validation():
    assert BinarizationSpec("high", 1).label == "High-1.00"
    assert BinarizationSpec(Strategy.LOW).strategy is Strategy.LOW
    with pytest.raises(DomainError):
        BinarizationSpec("Sideways", 0)
    for bad in (-0.1, float("nan"), float("inf")):
        with pytest.raises(DomainError):
            BinarizationSpec("High", bad)


def test_stats_over_nonzero_only():
    m = _matrix([[0], [2], [4], [0]])
    st_ = term_value_stats(m, "t0")
    assert (st_.mean, st_.stddev) == (3.0, 1.0)


def test_hand_example():
    # column [0, 1, 2, 3]: mu 2, sigma sqrt(2/3)
    m = _matrix([[0], [1], [2], [3]])
    assert _cells(m, "Direct", 0)[:, 0].tolist() == [False, True, True, True]
    assert _cells(m, "High", 0)[:, 0].tolist() == [False, False, False, True]
    assert _cells(m, "Low", 0)[:, 0].tolist() == [False, True, False, False]
    assert _cells(m, "Medium", 0)[:, 0].tolist() == [False, False, True, False]
    assert _cells(m, "Medium", 1.3)[:, 0].tolist() == [False, True, True, True]
    assert saturation_beta(m) == pytest.approx(np.sqrt(1.5))


def test_constant_column_is_medium():
    m = _matrix([[2], [2], [0]])
    assert not _cells(m, "High", 0).any()
    assert not _cells(m, "Low", 0).any()
    assert _cells(m, "Medium", 0)[:, 0].tolist() == [True, True, False]


def test_retained_terms():
    # t0 constant and t1 a single mention: no cell exceeds the mean
    m = _matrix([[1, 0, 5], [1, 0, 1], [1, 3, 1]])
    n, ctx = retained_terms(binarize_matrix(m, BinarizationSpec("High", 0)))
    assert n == 1
    assert ctx.attributes == ("t2",)
    assert ctx.incidence[:, 0].tolist() == [True, False, False]
    n, ctx = retained_terms(binarize_matrix(m, BinarizationSpec("Direct", 0)))
    assert n == 3 and ctx.shape == (3, 3)


def test_empty_matrix_rejected():
    with pytest.raises(DomainError):
        binarize_matrix(_matrix(np.zeros((0, 0), dtype=int)), BinarizationSpec("Direct"))


@given(matrices)
def test_beta_zero_partitions_direct(counts):
    m = _matrix(counts)
    h, l, md, d = (_cells(m, s, 0.0) for s in ("High", "Low", "Medium", "Direct"))
    assert np.array_equal(h | l | md, d)
    assert not (h & l).any() and not (h & md).any() and not (l & md).any()


@given(matrices, st.floats(0, 3), st.floats(0, 3))
def test_monotone_in_beta(counts, b1, b2):
    lo, hi = sorted((b1, b2))
    m = _matrix(counts)
    for strategy in ("High", "Low"):
        assert not (_cells(m, strategy, hi) & ~_cells(m, strategy, lo)).any()
    assert not (_cells(m, "Medium", lo) & ~_cells(m, "Medium", hi)).any()


@given(matrices)
def test_medium_saturates(counts):
    m = _matrix(counts)
    b = saturation_beta(m)
    direct = _cells(m, "Direct", 0)
    assert np.array_equal(_cells(m, "Medium", b), direct)
    assert np.array_equal(_cells(m, "Medium", b + 1), direct)
    if b > 0:
        assert not np.array_equal(_cells(m, "Medium", b * 0.999), direct)


@given(matrices, st.sampled_from(list(Strategy)), st.floats(0, 3))
def test_subset_of_direct(counts, strategy, beta):
    m = _matrix(counts)
    assert not (_cells(m, strategy, beta) & ~_cells(m, "Direct", 0)).any()


@given(matrices)
def test_retained_count_monotone(counts):
    m = _matrix(counts)
    prev = None
    for beta in (0.0, 0.5, 1.0, 2.0):
        n, _ = retained_terms(binarize_matrix(m, BinarizationSpec("High", beta)))
        assert prev is None or n <= prev
        prev = n

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.cluster.hierarchy import fcluster, linkage

from crea_topics.errors import DomainError, UnknownReferenceError
from crea_topics.fca import FormalConcept, FormalContext, enumerate_concepts
from crea_topics.simcluster import (
    Dendrogram,
    Merge,
    cluster_terms,
    concept_membership,
    conceptual_similarity,
    cut_maxclust,
    standardize_features,
    ward_linkage,
)

from oracles import naive_ward, partition


def _points(seed, n=None, dim=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 21))
    dim = dim or int(rng.integers(1, 5))
    return rng.normal(size=(n, dim))


def test_tiny_similarity(tiny_context):
    sim = conceptual_similarity(enumerate_concepts(tiny_context), ["a1", "a2"])
    np.testing.assert_allclose(sim.values, [[1.0, 0.5], [0.5, 1.0]])


def test_similarity_unknown_term(tiny_context):
    with pytest.raises(UnknownReferenceError):
        conceptual_similarity(enumerate_concepts(tiny_context), ["a1", "zzz"])


incidences = st.tuples(st.integers(1, 5), st.integers(2, 7)).flatmap(lambda s: arrays(bool, s))


@given(incidences)
def test_similarity_properties(inc):
    n, m = inc.shape
    ctx = FormalContext([f"o{i}" for i in range(n)], [f"a{j}" for j in range(m)], inc)
    concepts = enumerate_concepts(ctx)
    s = conceptual_similarity(concepts, ctx.attributes).values
    assert np.array_equal(s, s.T)
    assert np.all(np.diag(s) == 1)
    assert np.all((s >= 0) & (s <= 1))
    member = concept_membership(concepts, ctx.attributes).astype(bool)
    for a in range(m):
        for b in range(m):
            union = (member[a] | member[b]).sum()
            assert s[a, b] == pytest.approx((member[a] & member[b]).sum() / union)


def test_standardize():
    x = standardize_features([[1.0, 5.0], [3.0, 5.0]])
    np.testing.assert_allclose(x, [[-1.0, 0.0], [1.0, 0.0]])


@given(arrays(float, st.tuples(st.integers(2, 8), st.integers(1, 4)), elements=st.floats(-100, 100)))
def test_standardize_properties(x):
    z = standardize_features(x)
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-9)
    std = z.std(axis=0)
    assert np.all((np.abs(std - 1) < 1e-6) | (std == 0))


def test_ward_known_heights():
    d = ward_linkage([[0, 0], [1, 0], [4, 0], [5, 0]])
    assert [(m.a, m.b, m.size) for m in d.merges] == [(0, 1, 2), (2, 3, 2), (4, 5, 4)]
    np.testing.assert_allclose(d.heights, [1.0, 1.0, 4 * np.sqrt(2)])


def test_ward_tie_break_lowest_ids():
    # (2,3) and (0,1) are both at distance 1; the lower pair merges first
    d = ward_linkage([[10, 0], [11, 0], [0, 0], [1, 0]])
    assert [(m.a, m.b) for m in d.merges[:2]] == [(0, 1), (2, 3)]


def test_ward_needs_two_rows():
    with pytest.raises(DomainError):
        ward_linkage([[1.0, 2.0]])


@pytest.mark.parametrize("seed", range(30))
def test_ward_matches_naive_reference(seed):
    x = _points(seed)
    ours = ward_linkage(x)
    ref = naive_ward(x)
    for m, (a, b, h, size) in zip(ours.merges, ref):
        assert (m.a, m.b, m.size) == (a, b, size)
        assert m.height == pytest.approx(h, abs=1e-9)


@pytest.mark.parametrize("seed", range(30))
def test_ward_and_maxclust_match_scipy(seed):
    x = _points(seed)
    z = linkage(x, "ward")
    ours = ward_linkage(x)
    np.testing.assert_allclose(ours.heights, z[:, 2], atol=1e-9)
    for k in range(1, len(x) + 1):
        ref = fcluster(z, k, "maxclust")
        assert partition(cut_maxclust(ours, k).labels) == partition(ref)


@pytest.mark.parametrize("seed", range(20))
def test_maxclust_refines(seed):
    d = ward_linkage(_points(seed))
    parts = [partition(cut_maxclust(d, k).labels) for k in range(1, d.n + 1)]
    for coarse, fine in zip(parts, parts[1:]):
        assert len(fine) == len(coarse) + 1
        for block in fine:
            assert any(block <= c for c in coarse)


@given(st.integers(0, 10_000), st.randoms())
def test_permutation_invariance(seed, rnd):
    x = _points(seed)
    order = list(range(len(x)))
    rnd.shuffle(order)
    d1, d2 = ward_linkage(x), ward_linkage(x[order])
    np.testing.assert_allclose(d1.heights, d2.heights, atol=1e-9)
    for k in range(1, len(x) + 1):
        p1 = partition(cut_maxclust(d1, k).labels)
        labels2 = cut_maxclust(d2, k).labels
        back = [None] * len(x)
        for pos, orig in enumerate(order):
            back[orig] = labels2[pos]
        assert partition(back) == p1


def test_maxclust_labels_and_bounds():
    d = ward_linkage([[0], [10], [0.1], [10.1]])
    a = cut_maxclust(d, 2, ["w", "x", "y", "z"])
    assert a.labels == (1, 2, 1, 2)
    assert a.as_mapping() == {"w": 1, "x": 2, "y": 1, "z": 2}
    assert cut_maxclust(d, 4).labels == (1, 2, 3, 4)
    assert cut_maxclust(d, 1).labels == (1, 1, 1, 1)
    for bad in (0, 5):
        with pytest.raises(DomainError):
            cut_maxclust(d, bad)


def test_maxclust_with_tied_heights_may_give_fewer():
    d = Dendrogram(3, (Merge(0, 1, 1.0, 2), Merge(2, 3, 1.0, 3)))
    assert cut_maxclust(d, 2).k == 1


def test_cluster_terms_pipeline():
    ctx = FormalContext(
        ["d1", "d2", "d3", "d4"],
        ["a", "b", "c", "d"],
        [[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1], [0, 1, 1, 1]],
    )
    concepts = enumerate_concepts(ctx)
    x, dendro, assignments = cluster_terms(ctx, concepts, [1, 2, 4])
    assert x.shape == (4, 4)
    assert dendro.n == 4
    assert assignments[2].k == 2
    assert assignments[4].labels == (1, 2, 3, 4)
    _, _, by_membership = cluster_terms(ctx, concepts, [2], features="membership")
    assert by_membership[2].k == 2


def test_membership_matrix(tiny_context):
    concepts = enumerate_concepts(tiny_context)
    np.testing.assert_array_equal(concept_membership(concepts, ["a1", "a2"]), [[0, 1], [1, 1]])

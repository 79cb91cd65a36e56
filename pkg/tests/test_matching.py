import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxgraph.graph import SemanticGraph, Vertex
from boxgraph.matching import (MatchSet, assign_vertices, delta, similarity_matrix,
                               vertex_similarity)
from oracles import brute_assignment_total, sigma_v


def V(feature, label=50, centroid=(0, 0, 0)):
    return Vertex(np.asarray(centroid, float), label, np.asarray(feature, float))


@pytest.mark.parametrize("x", [0.0, 0.3, 7.0, 1e6])
def test_delta_equal_is_zero(x):
    assert delta(x, x) == 0.0


def test_delta_values():
    assert delta(0, 0) == 0.0
    assert delta(1, 2) == 0.5
    assert delta(2, 1) == 0.5
    assert delta(0, 3) == 1.0


def test_delta_negative():
    with pytest.raises(ValueError):
        delta(-1, 2)


def test_vertex_similarity_values():
    assert vertex_similarity(V([2, 3, 4]), V([2, 3, 4])) == 1.0
    assert vertex_similarity(V([2, 3, 4], 50), V([2, 3, 4], 70)) == 0.0
    assert vertex_similarity(V([2, 2, 2]), V([1, 2, 2])) == pytest.approx(0.8464817248906141, abs=1e-15)
    assert vertex_similarity(V([0, 0, 1]), V([0, 0, 1])) == 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 50), min_size=3, max_size=3), st.lists(st.floats(0, 50), min_size=3, max_size=3))
def test_vertex_similarity_symmetric_and_bounded(a, b):
    s = vertex_similarity(V(a), V(b))
    assert s == vertex_similarity(V(b), V(a))
    assert 0 < s <= 1
    assert s == pytest.approx(sigma_v(a, b), abs=1e-15)


def test_similarity_matrix_matches_scalar(rng):
    fa = rng.uniform(0, 5, size=(4, 3))
    fb = rng.uniform(0, 5, size=(6, 3))
    fa[0] = 0
    fb[0] = 0
    m = similarity_matrix(fa, fb)
    for i in range(4):
        for j in range(6):
            assert m[i, j] == pytest.approx(sigma_v(fa[i], fb[j]), abs=1e-15)


def graph(labels, feats, centroids=None):
    n = len(labels)
    c = np.zeros((n, 3)) if centroids is None else centroids
    return SemanticGraph(c, labels, feats)


def test_single_pair():
    m = assign_vertices(graph([50], [[1, 1, 1]]), graph([50], [[1, 2, 1]]))
    assert len(m) == 1
    assert m.pairs[0][:2] == (0, 0)


def test_class_disjoint_is_empty():
    m = assign_vertices(graph([50, 70], [[1, 1, 1]] * 2), graph([80, 81], [[1, 1, 1]] * 2))
    assert len(m) == 0


def test_three_by_three_matches_permutation_search(rng):
    for _ in range(20):
        fa = rng.uniform(0.1, 5, size=(3, 3))
        fb = rng.uniform(0.1, 5, size=(3, 3))
        m = assign_vertices(graph([50] * 3, fa), graph([50] * 3, fb))
        sim = similarity_matrix(fa, fb)
        assert m.total() == pytest.approx(brute_assignment_total(sim), abs=1e-9)


def random_blocks(rng, max_block=7):
    labels_s, labels_m = [], []
    for cls in rng.choice([48, 50, 51, 70, 71, 80, 81], size=rng.integers(1, 4), replace=False):
        labels_s += [cls] * rng.integers(0, max_block + 1)
        labels_m += [cls] * rng.integers(0, max_block + 1)
    fs = rng.uniform(0, 6, size=(len(labels_s), 3))
    fm = rng.uniform(0, 6, size=(len(labels_m), 3))
    return graph(labels_s, fs), graph(labels_m, fm)


def brute_total(g_s, g_m):
    total = 0.0
    for cls in set(g_s.labels.tolist()) & set(g_m.labels.tolist()):
        sim = similarity_matrix(g_s.features[g_s.labels == cls], g_m.features[g_m.labels == cls])
        total += brute_assignment_total(sim)
    return total


def test_matchset_invariants(rng):
    for _ in range(50):
        g_s, g_m = random_blocks(rng)
        m = assign_vertices(g_s, g_m)
        assert len(set(m.source.tolist())) == len(m)
        assert len(set(m.target.tolist())) == len(m)
        assert (g_s.labels[m.source] == g_m.labels[m.target]).all()
        assert (m.score > 0).all()
        assert list(m.source) == sorted(m.source)
        # min side of each class block fully matched
        for cls in set(g_s.labels.tolist()) & set(g_m.labels.tolist()):
            k = min((g_s.labels == cls).sum(), (g_m.labels == cls).sum())
            assert (g_s.labels[m.source] == cls).sum() == k


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_optimal_against_bruteforce(seed):
    g_s, g_m = random_blocks(np.random.default_rng(seed), max_block=6)
    assert assign_vertices(g_s, g_m).total() == pytest.approx(brute_total(g_s, g_m), abs=1e-9)


def test_total_invariant_to_vertex_permutation(rng):
    g_s, g_m = random_blocks(rng)
    base = assign_vertices(g_s, g_m).total()
    p = rng.permutation(len(g_s))
    q = rng.permutation(len(g_m))
    g_s2 = graph(g_s.labels[p], g_s.features[p])
    g_m2 = graph(g_m.labels[q], g_m.features[q])
    assert assign_vertices(g_s2, g_m2).total() == pytest.approx(base, abs=1e-12)


def test_translation_does_not_change_similarity(rng):
    feats = rng.uniform(0.5, 4, size=(5, 3))
    c = rng.normal(size=(5, 3))
    g1 = graph([50] * 5, feats, c)
    g2 = graph([50] * 5, feats, c + [100, -20, 3])
    m = assign_vertices(g1, g2)
    assert m.total() == 5.0


def test_matchset_subset_and_empty():
    m = MatchSet([0, 2, 5], [1, 0, 3], [0.5, 0.9, 1.0])
    sub = m.subset(np.array([0, 2]))
    assert sub.pairs == [(0, 1, 0.5), (5, 3, 1.0)]
    assert len(MatchSet.empty()) == 0
    with pytest.raises(ValueError):
        MatchSet([0], [1, 2], [0.1])

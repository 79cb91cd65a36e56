import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxgraph.clustering import NOISE, ClusteringParams, cluster_by_class, dbscan
from boxgraph.skitti_io import LabeledCloud
from oracles import as_partition, brute_dbscan


def blob(rng, centre, n=20, spread=0.2):
    return np.asarray(centre, dtype=float) + rng.normal(0, spread, size=(n, 3))


def test_two_separated_blobs(rng):
    eps = 1.0
    pts = np.concatenate([blob(rng, [0, 0, 0]), blob(rng, [10 * eps, 0, 0])])
    labels = dbscan(pts, eps, 5)
    assert labels.max() + 1 == 2
    assert as_partition(labels) == as_partition(brute_dbscan(pts, eps, 5))


def test_chain_is_one_cluster():
    eps, min_pts = 1.0, 3
    pts = np.c_[np.arange(12) * eps / 2, np.zeros(12), np.zeros(12)]
    assert set(dbscan(pts, eps, min_pts).tolist()) == {0}


def test_isolated_points_are_noise():
    min_pts = 5
    pts = np.c_[np.arange(min_pts - 1) * 10.0, np.zeros(min_pts - 1), np.zeros(min_pts - 1)]
    assert (dbscan(pts, 1.0, min_pts) == NOISE).all()


def test_empty_and_bad_params():
    assert dbscan(np.empty((0, 3)), 1.0, 5).shape == (0,)
    with pytest.raises(ValueError):
        dbscan(np.zeros((3, 3)), 0.0, 5)
    with pytest.raises(ValueError):
        dbscan(np.zeros((3, 3)), 1.0, 0)


def test_min_pts_one_makes_every_point_core():
    pts = np.array([[0, 0, 0], [5, 0, 0], [5.5, 0, 0]], dtype=float)
    labels = dbscan(pts, 1.0, 1)
    assert as_partition(labels) == {frozenset({0}), frozenset({1, 2})}


def test_border_point_joins_first_cluster_in_sorted_order():
    # two chains of cores; the border point sees one core of each and is not core itself
    left = np.c_[[0.1, -0.1, -0.3, -0.5, -0.7], np.zeros(5), np.zeros(5)]
    right = np.c_[[2.0, 2.2, 2.4, 2.6, 2.8], np.zeros(5), np.zeros(5)]
    border = np.array([[1.05, 0.0, 0.0]])
    pts = np.concatenate([right, border, left])
    labels = dbscan(pts, 1.0, 4)
    assert len(set(labels.tolist())) == 2
    assert labels[5] == labels[6]  # joins the lexicographically first cluster
    assert as_partition(labels) == as_partition(brute_dbscan(pts, 1.0, 4))


def test_matches_oracle_on_duplicates_and_cell_edges():
    pts = np.array([[0, 0, 0]] * 3 + [[1.0, 0, 0]] * 3 + [[2.0, 0, 0], [-1.0, -1.0, -1.0]])
    for eps, m in [(1.0, 3), (0.999, 3), (1.0, 4), (2.0, 2)]:
        assert as_partition(dbscan(pts, eps, m)) == as_partition(brute_dbscan(pts, eps, m))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 300), st.floats(0.2, 3.0), st.integers(1, 8))
def test_grid_equals_bruteforce(seed, n, eps, min_pts):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 10, size=(n, 3))
    pts[: n // 3] = np.round(pts[: n // 3])  # exact-distance ties on cell boundaries
    assert as_partition(dbscan(pts, eps, min_pts)) == as_partition(brute_dbscan(pts, eps, min_pts))


def test_invariant_to_input_order(rng):
    pts = rng.uniform(0, 8, size=(400, 3))
    perm = rng.permutation(len(pts))
    a = as_partition(dbscan(pts, 1.0, 4))
    b = {frozenset(perm[i] for i in g) for g in as_partition(dbscan(pts[perm], 1.0, 4))}
    assert a == b


def test_cluster_by_class(rng):
    BUILDING, POLE = 50, 80
    pts = np.concatenate([blob(rng, [0, 0, 0]), blob(rng, [30, 0, 0]), blob(rng, [0, 30, 0])])
    labels = [BUILDING] * 40 + [POLE] * 20
    clusters = cluster_by_class(LabeledCloud(pts, labels), ClusteringParams(1.0, 5, 10))
    assert [c.label for c in clusters] == [BUILDING, BUILDING, POLE]
    assert [len(c) for c in clusters] == [20, 20, 20]
    # centroid order within a class
    assert clusters[0].centroid[0] < clusters[1].centroid[0]


def test_cluster_by_class_never_merges_classes(rng):
    pts = blob(rng, [0, 0, 0], n=40)
    labels = [50] * 20 + [70] * 20
    clusters = cluster_by_class(LabeledCloud(pts, labels), ClusteringParams(1.0, 5, 10))
    assert len(clusters) == 2
    for c in clusters:
        assert len(c) == 20


def test_cluster_by_class_drops_small_and_empty(rng):
    pts = np.concatenate([blob(rng, [0, 0, 0], n=20), blob(rng, [50, 0, 0], n=6)])
    clusters = cluster_by_class(LabeledCloud(pts, [50] * 26), ClusteringParams(1.0, 3, 10))
    assert len(clusters) == 1
    assert cluster_by_class(LabeledCloud(np.empty((0, 3)), []), ClusteringParams()) == []


def test_per_class_overrides(rng):
    pts = np.concatenate([blob(rng, [0, 0, 0], spread=1.0, n=30), blob(rng, [40, 0, 0], spread=1.0, n=30)])
    labels = [50] * 30 + [80] * 30
    params = ClusteringParams(0.05, 5, 10, class_eps={80: 5.0})
    clusters = cluster_by_class(LabeledCloud(pts, labels), params)
    assert [c.label for c in clusters] == [80]
    with pytest.raises(ValueError):
        ClusteringParams(class_min_pts={80: 0})


def test_kitti_scale_runtime():
    import time

    rng = np.random.default_rng(0)
    wall = np.c_[rng.uniform(0, 20, 40000), 8 + rng.normal(0, 0.02, 40000), rng.uniform(0, 5, 40000)]
    blobs = np.concatenate([rng.normal(c, 0.8, size=(2000, 3)) for c in rng.uniform(-40, 40, (30, 3))])
    pts = np.concatenate([wall, blobs, rng.uniform(-50, 50, size=(20000, 3))])
    dbscan(pts[:50], 1.0, 5)  # compile
    t = time.perf_counter()
    dbscan(pts, 1.0, 5)
    assert time.perf_counter() - t < 1.0

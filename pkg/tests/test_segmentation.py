import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from oracles import brute_force_wcss_2, naive_dbscan, same_partition
from wastesig.features import StandardizedMatrix, _standardize_array
from wastesig.segmentation import (
    TIERS,
    DbscanParams,
    KMeansParams,
    SegmentConfig,
    dbscan,
    elbow_from_curve,
    elbow_select,
    iterative_segment,
    kdist_eps,
    kmeans,
)
from wastesig.synthetic import tier_blobs


def _matrix(points, columns=None):
    points = np.asarray(points, dtype=float)
    cols = columns or [f"f{j}" for j in range(points.shape[1])]
    # stds of 1 and means of 0 so the matrix is the given points
    return StandardizedMatrix([f"{i:06d}" for i in range(len(points))], cols, points,
                              np.zeros(points.shape[1]), np.ones(points.shape[1]))


def test_k1_closed_form(rng):
    X = rng.normal(size=(20, 3))
    res = kmeans(X, KMeansParams(1))
    assert np.allclose(res.centroids[0], X.mean(axis=0))
    assert res.wcss == pytest.approx(((X - X.mean(axis=0)) ** 2).sum(), rel=1e-12)


def test_two_pairs():
    X = [(0, 0), (0, 1), (10, 10), (10, 11)]
    res = kmeans(X, KMeansParams(2))
    assert res.assignments[0] == res.assignments[1] != res.assignments[2] == res.assignments[3]
    cents = sorted(map(tuple, res.centroids))
    assert cents == [(0.0, 0.5), (10.0, 10.5)]


def test_brute_force_partition_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(3, 11))
        X = rng.normal(size=(n, 2))
        best = brute_force_wcss_2(X.tolist())
        got = kmeans(X, KMeansParams(2)).wcss
        assert abs(got - best) <= 1e-9 * max(best, 1e-300)


def test_kmeans_errors():
    with pytest.raises(ValueError):
        kmeans([[0.0], [1.0]], KMeansParams(3))
    with pytest.raises(ValueError):
        kmeans([[0.0], [np.nan]], KMeansParams(1))
    with pytest.raises(ValueError):
        KMeansParams(0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6))
def test_kmeans_invariants(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 2))
    res = kmeans(X, KMeansParams(k, n_restarts=3, seed=seed))
    d2 = ((X[:, None, :] - res.centroids[None]) ** 2).sum(axis=2)
    assert np.array_equal(res.assignments, np.argmin(d2, axis=1))
    counts = np.bincount(res.assignments, minlength=k)
    assert np.all(counts > 0)
    for j in range(k):
        assert np.allclose(res.centroids[j], X[res.assignments == j].mean(axis=0))
    recomputed = ((X - res.centroids[res.assignments]) ** 2).sum()
    assert abs(res.wcss - recomputed) <= 1e-9 * max(recomputed, 1.0)
    hist = res.wcss_history
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))
    again = kmeans(X, KMeansParams(k, n_restarts=3, seed=seed))
    assert np.array_equal(again.centroids, res.centroids) and again.wcss == res.wcss


def test_empty_cluster_repair_with_duplicates():
    X = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]])
    res = kmeans(X, KMeansParams(3, n_restarts=2))
    assert np.all(np.bincount(res.assignments, minlength=3) > 0)


def test_elbow_from_curve_examples():
    assert elbow_from_curve([100, 20, 15, 12]) == 2
    assert elbow_from_curve([0, 0, 0, 0]) == 2
    assert elbow_from_curve([100, 90, 10, 9, 8], min_k=3) == 3


def test_elbow_three_blobs():
    rng = np.random.default_rng(3)
    centres = np.array([[0, 0], [50, 0], [0, 50]])
    X = np.vstack([c + rng.normal(0, 0.5, size=(20, 2)) for c in centres])
    k, curve = elbow_select(X, 8)
    assert k == 3 and [c[0] for c in curve] == list(range(1, 9))
    assert elbow_select(X, 8, k_override=5)[0] == 5


def test_elbow_identical_points():
    k, curve = elbow_select(np.ones((10, 2)), 5)
    assert k == 2 and all(w == 0 for _, w in curve)


def test_elbow_preconditions():
    with pytest.raises(ValueError):
        elbow_select(np.zeros((10, 2)), 2)
    with pytest.raises(ValueError):
        elbow_select(np.zeros((4, 2)), 5)


def test_wcss_curve_roughly_monotone():
    X = np.random.default_rng(4).normal(size=(60, 3))
    _, curve = elbow_select(X, 8)
    w = [c[1] for c in curve]
    assert all(b <= a * 1.01 for a, b in zip(w, w[1:]))


def test_dbscan_min_pts_one_components():
    X = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [30.0]])
    labels = dbscan(X, DbscanParams(1.0, 1))
    assert labels.tolist() == [0, 0, 0, 1, 1, 2]


def test_dbscan_isolated_point_noise(rng):
    blob = rng.normal(0, 0.1, size=(30, 2))
    X = np.vstack([blob, [[50.0, 50.0]]])
    labels = dbscan(X, DbscanParams(0.5, 4))
    assert labels[-1] == -1 and np.all(labels[:-1] == 0)


def test_dbscan_inclusive_radius():
    X = np.array([[0.0], [1.0]])
    assert dbscan(X, DbscanParams(1.0, 2)).tolist() == [0, 0]
    assert dbscan(X, DbscanParams(0.999, 2)).tolist() == [-1, -1]


def test_dbscan_naive_oracle():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(2, 31))
        X = rng.uniform(0, 10, size=(n, 2))
        eps = float(rng.uniform(0.5, 3.0))
        mp = int(rng.integers(1, 6))
        got = dbscan(X, DbscanParams(eps, mp)).tolist()
        want = naive_dbscan(X.tolist(), eps, mp)
        assert same_partition(got, want)


def test_dbscan_params_validation():
    with pytest.raises(ValueError):
        DbscanParams(0.0)
    with pytest.raises(ValueError):
        DbscanParams(1.0, 0)


def test_kdist_grid():
    s = 0.7
    g = np.array([(i * s, j * s) for i in range(8) for j in range(8)])
    eps = kdist_eps(g, 1)
    assert s - 1e-12 <= eps <= s * math.sqrt(2) + 1e-12


def test_kdist_identical_points():
    with pytest.raises(ValueError, match="degenerate distances"):
        kdist_eps(np.zeros((6, 2)), 2)
    with pytest.raises(ValueError):
        kdist_eps(np.zeros((2, 2)), 2)


def test_kdist_two_scale():
    rng = np.random.default_rng(6)
    blob = rng.normal(0, 0.05, size=(80, 2))
    angles = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    halo = np.c_[20 * np.cos(angles), 20 * np.sin(angles)]
    X = np.vstack([blob, halo])
    k = 3
    d = np.sqrt(((X[:, None] - X[None]) ** 2).sum(axis=2))
    kth = np.sort(d, axis=1)[:, k]
    eps = kdist_eps(X, k)
    assert kth[:80].max() <= eps < kth[80:].min()


def test_iterative_tier_blobs():
    X, truth = tier_blobs(0, dims=5, price_col=1)
    cols = ["avg_kg", "avg_price", "c2", "c3", "c4"]
    m = _standardize_array([f"{i:06d}" for i in range(len(X))], cols, X)
    res = iterative_segment(m)
    counts = res.counts()
    assert counts == {"Outlier": 3, "HighValueNiche": 15, "Core": 40, "SuperCore": 142}
    assert adjusted_rand_score(truth, res.tiers()) >= 0.9
    dual = [a.hs_code for a in res.assignments if a.dual_confirmed_outlier]
    assert dual == m.rows[:3]


def test_iterative_no_small_clusters():
    rng = np.random.default_rng(7)
    centres = np.array([[0, 0], [8, 0], [0, 8]])
    X = np.vstack([c + rng.normal(0, 0.3, size=(30, 2)) for c in centres])
    res = iterative_segment(_matrix(X, ["avg_kg", "avg_price"]))
    assert res.counts()["Outlier"] == 0
    assert all(a.pass_ == "core_pass2" for a in res.assignments)


def test_iterative_invariants_and_errors():
    X, _ = tier_blobs(1)
    m = _standardize_array([f"{i:06d}" for i in range(len(X))], ["avg_kg", "avg_price", "a", "b", "c"], X)
    res = iterative_segment(m)
    assert len(res.assignments) == len(X)
    for a in res.assignments:
        assert a.tier in TIERS
        assert (a.tier == "Outlier") == (a.pass_ == "isolated_pass1")
        if a.dual_confirmed_outlier:
            assert a.tier == "Outlier"
    with pytest.raises(ValueError):
        iterative_segment(_matrix(np.zeros((5, 2))))


def test_iterative_too_few_remaining_warns():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [50, 0], [51, 0], [50, 1], [0, 50], [1, 50], [0, 51]])
    cfg = SegmentConfig(k=3, k_max=4, min_outlier_size=3, eps=1.0)
    with pytest.warns(RuntimeWarning):
        res = iterative_segment(_matrix(X, ["avg_kg", "avg_price"]), cfg)
    assert set(res.tiers()) <= {"Outlier", "Core"}


def test_iterative_configured_eps():
    X, _ = tier_blobs(0)
    m = _standardize_array([f"{i:06d}" for i in range(len(X))], ["avg_kg", "avg_price", "a", "b", "c"], X)
    res = iterative_segment(m, SegmentConfig(eps=0.123))
    assert res.eps == 0.123

"""Outlier-aware market segmentation.

K-Means (k-means++ seeding, Lloyd iterations, best of several restarts),
elbow selection of K, DBSCAN, a k-distance heuristic for DBSCAN's radius and
the two-pass segmentation that peels off small outlier clusters before
re-clustering the remaining products into tiers.
"""
from __future__ import annotations

import logging
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .features import StandardizedMatrix

logger = logging.getLogger(__name__)

TIERS = ("Outlier", "HighValueNiche", "Core", "SuperCore")
NOISE = -1


@dataclass(frozen=True)
class KMeansParams:
    k: int
    n_restarts: int = 10
    max_iter: int = 300
    tol: float = 1e-6
    seed: int = 42

    def __post_init__(self):
        if self.k < 1 or self.n_restarts < 1 or self.max_iter < 1:
            raise ValueError("k, n_restarts and max_iter must be positive")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    wcss: float
    iterations: int
    wcss_history: list = field(default_factory=list)


def _check_points(points) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise ValueError("points contain non-finite values")
    return X


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers.append(X[idx])
        closest = np.minimum(closest, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _update(X: np.ndarray, labels: np.ndarray, C: np.ndarray, k: int):
    """Centroid means; an empty cluster takes the point farthest from its centroid."""
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        d = ((X - C[labels]) ** 2).sum(axis=1)
        d[counts[labels] <= 1] = -1.0
        far = int(np.argmax(d))
        counts[labels[far]] -= 1
        labels[far] = j
        counts[j] = 1
    new_C = np.zeros_like(C)
    np.add.at(new_C, labels, X)
    new_C /= counts[:, None]
    return labels, new_C


def _wcss(X, labels, C) -> float:
    return float(((X - C[labels]) ** 2).sum())


def _hartigan(X: np.ndarray, labels: np.ndarray, k: int) -> tuple[np.ndarray, bool]:
    """Single-point moves that lower WCSS, counting the centroid shift of both clusters.

    Any partition stable under these moves is also a Lloyd fixed point, and
    many Lloyd fixed points are not stable under them.
    """
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k).astype(float)
    C = np.zeros((k, X.shape[1]))
    np.add.at(C, labels, X)
    C /= counts[:, None]
    any_move = False
    moved = True
    while moved:
        moved = False
        for i in range(X.shape[0]):
            a = labels[i]
            if counts[a] <= 1:
                continue
            d = ((C - X[i]) ** 2).sum(axis=1)
            leave = counts[a] / (counts[a] - 1) * d[a]
            join = counts / (counts + 1) * d
            join[a] = np.inf
            b = int(np.argmin(join))
            if join[b] < leave * (1 - 1e-12):
                C[a] = (C[a] * counts[a] - X[i]) / (counts[a] - 1)
                C[b] = (C[b] * counts[b] + X[i]) / (counts[b] + 1)
                counts[a] -= 1
                counts[b] += 1
                labels[i] = b
                moved = any_move = True
    return labels, any_move


def _lloyd(X: np.ndarray, k: int, params: KMeansParams, rng) -> KMeansResult:
    C = _kmeanspp(X, k, rng)
    labels = np.argmin(_sq_dists(X, C), axis=1)
    labels, C = _update(X, labels, C, k)
    history = [_wcss(X, labels, C)]
    it = 1
    while it < params.max_iter:
        new_labels = np.argmin(_sq_dists(X, C), axis=1)
        settled = np.array_equal(new_labels, labels)
        if not settled:
            new_labels, new_C = _update(X, new_labels, C, k)
            shift = float(np.sqrt(((new_C - C) ** 2).sum(axis=1)).max())
            labels, C = new_labels, new_C
            history.append(_wcss(X, labels, C))
            it += 1
            settled = shift <= params.tol
        if settled:
            # Lloyd has stalled; escape with point moves if any lowers WCSS
            moved_labels, moved = _hartigan(X, labels, k)
            if not moved:
                break
            labels, C = _update(X, moved_labels, C, k)
            history.append(_wcss(X, labels, C))
            it += 1
    return KMeansResult(labels, C, history[-1], it, history)


def kmeans(points, params: KMeansParams) -> KMeansResult:
    """Best of ``n_restarts`` Lloyd runs by WCSS; restart r is seeded with ``seed + r``."""
    X = _check_points(points)
    n = X.shape[0]
    if params.k > n:
        raise ValueError(f"k={params.k} exceeds number of points {n}")
    best = None
    for r in range(params.n_restarts):
        rng = np.random.default_rng(params.seed + r)
        res = _lloyd(X, params.k, params, rng)
        if best is None or res.wcss < best.wcss:
            best = res
    return best


def elbow_from_curve(wcss: Sequence[float], min_k: int = 2) -> int:
    """K with the largest second difference of a WCSS curve indexed from k=1.

    Candidates are ``min_k .. len(wcss) - 1``; ties go to the smallest K.
    """
    w = np.asarray(wcss, dtype=float)
    k_max = len(w)
    lo = max(2, min_k)
    if k_max < 3 or lo > k_max - 1:
        return min(max(lo, 1), k_max)
    ks = np.arange(lo, k_max)
    second = w[ks - 2] - 2 * w[ks - 1] + w[ks]
    return int(ks[int(np.argmax(second))])


def elbow_select(
    points, k_max: int, params: Optional[KMeansParams] = None, k_override: Optional[int] = None,
    min_k: int = 2,
) -> tuple[int, list[tuple[int, float]]]:
    X = _check_points(points)
    if k_max < 3:
        raise ValueError("k_max must be at least 3")
    if X.shape[0] < k_max:
        raise ValueError(f"need at least k_max={k_max} points, got {X.shape[0]}")
    base = params or KMeansParams(k=1)
    curve = []
    for k in range(1, k_max + 1):
        res = kmeans(X, KMeansParams(k, base.n_restarts, base.max_iter, base.tol, base.seed))
        curve.append((k, res.wcss))
    w = [c[1] for c in curve]
    if any(b > a * (1 + 1e-12) + 1e-12 for a, b in zip(w, w[1:])):
        warnings.warn("WCSS curve is not monotone in k", RuntimeWarning, stacklevel=2)
    chosen = k_override if k_override is not None else elbow_from_curve(w, min_k)
    return int(chosen), curve


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int = 5

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


def _neighborhoods(X: np.ndarray, eps: float) -> list[np.ndarray]:
    d2 = _sq_dists(X, X)
    within = d2 <= eps * eps
    return [np.flatnonzero(row) for row in within]


def dbscan(points, params: DbscanParams) -> np.ndarray:
    """Density-based clustering; noise is -1, cluster ids follow discovery order."""
    X = _check_points(points)
    n = X.shape[0]
    nbrs = _neighborhoods(X, params.eps)
    core = np.array([len(nb) >= params.min_pts for nb in nbrs], dtype=bool)
    labels = np.full(n, NOISE, dtype=int)
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        if not core[i]:
            continue
        labels[i] = cluster
        queue = deque(nbrs[i])
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster
            if visited[j]:
                continue
            visited[j] = True
            if core[j]:
                queue.extend(nbrs[j])
        cluster += 1
    return labels


def kdist_eps(points, k: int) -> float:
    """Radius at the knee of the sorted (descending) k-th-neighbour distances."""
    X = _check_points(points)
    n = X.shape[0]
    if n <= k:
        raise ValueError(f"need more than k={k} points, got {n}")
    d = np.sqrt(_sq_dists(X, X))
    kth = np.sort(d, axis=1)[:, k]  # column 0 is the point itself
    curve = np.sort(kth)[::-1]
    if curve.size < 3:
        eps = float(curve[-1])
    else:
        second = curve[:-2] - 2 * curve[1:-1] + curve[2:]
        eps = float(curve[1 + int(np.argmax(second))])
    if not eps > 0:
        raise ValueError("degenerate distances: k-distance radius is zero")
    return eps


@dataclass
class SegmentConfig:
    k_max: int = 10
    k: Optional[int] = None
    k_core: Optional[int] = None
    eps: Optional[float] = None
    min_pts: int = 5
    seed: int = 42
    n_restarts: int = 10
    max_iter: int = 300
    tol: float = 1e-6
    outlier_fraction: float = 0.01
    min_outlier_size: int = 2
    restandardize: bool = True
    price_feature: str = "avg_price"


@dataclass(frozen=True)
class SegmentAssignment:
    hs_code: str
    kmeans_cluster: int
    dbscan_label: int
    dual_confirmed_outlier: bool
    tier: str
    pass_: str

    def to_dict(self) -> dict:
        return {
            "hs_code": self.hs_code,
            "kmeans_cluster": self.kmeans_cluster,
            "dbscan_label": self.dbscan_label,
            "dual_confirmed_outlier": self.dual_confirmed_outlier,
            "tier": self.tier,
            "pass": self.pass_,
        }


@dataclass
class SegmentationResult:
    assignments: list[SegmentAssignment]
    pass1_k: int
    pass1_curve: list
    pass2_k: Optional[int]
    pass2_curve: list
    eps: float
    outlier_threshold: int

    def tiers(self) -> list[str]:
        return [a.tier for a in self.assignments]

    def counts(self) -> dict[str, int]:
        return {t: sum(a.tier == t for a in self.assignments) for t in TIERS}


def _params(cfg: SegmentConfig, k: int) -> KMeansParams:
    return KMeansParams(k, cfg.n_restarts, cfg.max_iter, cfg.tol, cfg.seed)


def iterative_segment(matrix: StandardizedMatrix, cfg: Optional[SegmentConfig] = None) -> SegmentationResult:
    """Isolate small outlier clusters, confirm with DBSCAN, then re-cluster into tiers."""
    cfg = cfg or SegmentConfig()
    X = _check_points(matrix.values)
    n = X.shape[0]
    if n < 8:
        raise ValueError(f"iterative segmentation needs at least 8 products, got {n}")

    # pass 1: every product
    k_max1 = min(cfg.k_max, n)
    k1, curve1 = elbow_select(X, k_max1, _params(cfg, 1), k_override=cfg.k)
    first = kmeans(X, _params(cfg, k1))
    threshold = max(cfg.min_outlier_size, math.ceil(cfg.outlier_fraction * n))
    sizes = np.bincount(first.assignments, minlength=k1)
    isolated = sizes[first.assignments] <= threshold

    if cfg.eps is not None:
        eps = cfg.eps
    else:
        # density scale of the non-isolated population; isolated points would put the knee at the top
        eps = kdist_eps(X[~isolated] if (~isolated).sum() > cfg.min_pts else X, max(cfg.min_pts - 1, 1))
    db = dbscan(X, DbscanParams(eps, cfg.min_pts))
    dual = isolated & (db == NOISE)

    clusters = first.assignments.copy()
    tiers = np.array(["Outlier"] * n, dtype=object)
    remaining = ~isolated
    k2, curve2 = None, []
    n_rest = int(remaining.sum())
    if n_rest < 3:
        warnings.warn("fewer than 3 products left after isolating outliers; labelling them Core",
                      RuntimeWarning, stacklevel=2)
        tiers[remaining] = "Core"
    else:
        if cfg.restandardize:
            Xr = matrix.subset(remaining).values
        else:
            Xr = X[remaining]
        k_max2 = min(cfg.k_max, n_rest)
        if k_max2 >= 3:
            k2, curve2 = elbow_select(Xr, k_max2, _params(cfg, 1), k_override=cfg.k_core, min_k=3)
        else:
            k2 = k_max2
        k2 = max(k2, 3)
        second = kmeans(Xr, _params(cfg, k2))
        sizes2 = np.bincount(second.assignments, minlength=k2)
        if np.count_nonzero(sizes2) < 3:
            warnings.warn("second pass produced fewer than 3 clusters; labelling all Core",
                          RuntimeWarning, stacklevel=2)
            tiers[remaining] = "Core"
        else:
            tiers[remaining] = _name_tiers(Xr, second.assignments, k2,
                                          matrix.columns.index(cfg.price_feature))
        clusters[remaining] = second.assignments

    assignments = [
        SegmentAssignment(
            hs_code=code,
            kmeans_cluster=int(clusters[i]),
            dbscan_label=int(db[i]),
            dual_confirmed_outlier=bool(dual[i]),
            tier=str(tiers[i]),
            pass_="isolated_pass1" if isolated[i] else "core_pass2",
        )
        for i, code in enumerate(matrix.rows)
    ]
    return SegmentationResult(assignments, k1, curve1, k2, curve2, float(eps), threshold)


def _name_tiers(X: np.ndarray, labels: np.ndarray, k: int, price_col: int) -> np.ndarray:
    sizes = np.bincount(labels, minlength=k)
    super_core = int(np.argmax(sizes))
    names = {super_core: "SuperCore"}
    others = [j for j in range(k) if j != super_core and sizes[j] > 0]
    mean_price = {j: X[labels == j, price_col].mean() for j in others}
    niche = max(others, key=lambda j: (mean_price[j], -j))
    names[niche] = "HighValueNiche"
    for j in others:
        names.setdefault(j, "Core")
    return np.array([names[j] for j in labels], dtype=object)

"""Supervised check that segment tiers are recoverable from the features.

Bagged CART trees (Gini impurity, axis-aligned splits at midpoints between
sorted distinct values) with out-of-bag accuracy.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 25
    max_depth: int = 8
    min_leaf: int = 1
    max_features: Optional[int] = None
    seed: int = 42


@dataclass
class Node:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    counts: Optional[np.ndarray] = None

    @property
    def is_leaf(self) -> bool:
        return self.left < 0

    @property
    def leaf_class(self) -> int:
        return int(np.argmax(self.counts))


@dataclass
class TreeModel:
    nodes: list[Node]
    max_depth: int
    min_leaf: int

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.empty(X.shape[0], dtype=int)
        for i, x in enumerate(X):
            j = 0
            while not self.nodes[j].is_leaf:
                nd = self.nodes[j]
                j = nd.left if x[nd.feature] <= nd.threshold else nd.right
            out[i] = j
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.nodes[j].leaf_class for j in self.apply(X)], dtype=int)

    def depth(self) -> int:
        def walk(j):
            nd = self.nodes[j]
            return 0 if nd.is_leaf else 1 + max(walk(nd.left), walk(nd.right))
        return walk(0)


def gini(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum(axis=-1)
    safe = np.where(total > 0, total, 1.0)
    p = counts / safe[..., None]
    return 1.0 - (p**2).sum(axis=-1)


def _best_split(X: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: int, features):
    """Lowest weighted Gini over all candidate splits; ties keep the earliest feature/threshold."""
    n = y.size
    if n < 2:
        return (np.inf, -1, 0.0)
    onehot = np.eye(n_classes)[y]
    best = (np.inf, -1, 0.0)
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left_counts = np.cumsum(onehot[order], axis=0)[:-1]
        right_counts = onehot.sum(axis=0) - left_counts
        n_left = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        score = (n_left * gini(left_counts) + (n - n_left) * gini(right_counts)) / n
        score = np.where(valid, score, np.inf)
        i = int(np.argmin(score))
        if score[i] < best[0] - 1e-12:
            best = (float(score[i]), f, float((xs[i] + xs[i + 1]) / 2))
    return best


def fit_tree(X, y, n_classes: int, max_depth: int = 8, min_leaf: int = 1,
             max_features: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> TreeModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    d = X.shape[1]
    nodes: list[Node] = []

    def grow(idx: np.ndarray, depth: int) -> int:
        counts = np.bincount(y[idx], minlength=n_classes)
        me = len(nodes)
        nodes.append(Node(counts=counts))
        if depth >= max_depth or np.count_nonzero(counts) <= 1 or idx.size < 2 * min_leaf:
            return me
        if max_features is not None and max_features < d:
            feats = np.sort(rng.choice(d, size=max_features, replace=False))
        else:
            feats = range(d)
        score, f, thr = _best_split(X[idx], y[idx], n_classes, min_leaf, feats)
        if f < 0 or score >= gini(counts) - 1e-12:
            return me
        go_left = X[idx, f] <= thr
        left = grow(idx[go_left], depth + 1)
        right = grow(idx[~go_left], depth + 1)
        nodes[me].feature, nodes[me].threshold = f, thr
        nodes[me].left, nodes[me].right = left, right
        return me

    grow(np.arange(y.size), 0)
    return TreeModel(nodes, max_depth, min_leaf)


@dataclass
class Forest:
    trees: list[TreeModel]
    classes: list[str]
    params: ForestParams
    oob_accuracy: Optional[float] = None
    oob_coverage: float = 0.0
    training_accuracy: Optional[float] = None
    oob_predictions: Optional[list] = None

    def votes(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        v = np.zeros((X.shape[0], len(self.classes)), dtype=int)
        for t in self.trees:
            v[np.arange(X.shape[0]), t.predict(X)] += 1
        return v

    def predict(self, X) -> list[str]:
        # classes are sorted by name, so argmax resolves ties to the smallest name
        return [self.classes[i] for i in np.argmax(self.votes(X), axis=1)]


def fit_forest(X, tiers: Sequence[str], params: Optional[ForestParams] = None,
               keys: Optional[Sequence[str]] = None) -> Forest:
    """Bootstrap-aggregated CART trees.

    Rows are put in canonical order by ``keys`` (e.g. hs_code) before the
    seeded bootstrap, so shuffling the input rows does not change the model.
    """
    params = params or ForestParams()
    X = np.asarray(X, dtype=float)
    tiers = [str(t) for t in tiers]
    n = X.shape[0]
    if keys is not None:
        order = sorted(range(n), key=lambda i: (keys[i], i))
        X = X[order]
        tiers = [tiers[i] for i in order]
    classes = sorted(set(tiers))
    if len(classes) < 2:
        warnings.warn("single-class input: fitting a constant model", RuntimeWarning, stacklevel=2)
        leaf = TreeModel([Node(counts=np.array([n]))], params.max_depth, params.min_leaf)
        return Forest([leaf], classes, params, 1.0, 1.0, 1.0)
    y = np.array([classes.index(t) for t in tiers])
    rng = np.random.default_rng(params.seed)
    trees = []
    oob_votes = np.zeros((n, len(classes)), dtype=int)
    for _ in range(params.n_trees):
        boot = rng.integers(0, n, size=n)
        tree = fit_tree(X[boot], y[boot], len(classes), params.max_depth, params.min_leaf,
                        params.max_features, rng)
        trees.append(tree)
        oob = np.setdiff1d(np.arange(n), boot)
        if oob.size:
            oob_votes[oob, tree.predict(X[oob])] += 1
    forest = Forest(trees, classes, params)
    seen = oob_votes.sum(axis=1) > 0
    forest.oob_coverage = float(seen.mean())
    oob_pred = np.argmax(oob_votes, axis=1)
    forest.oob_predictions = [classes[j] if ok else None for j, ok in zip(oob_pred, seen)]
    if keys is not None:
        # back to caller row order
        restored = [None] * n
        for pos, i in enumerate(order):
            restored[i] = forest.oob_predictions[pos]
        forest.oob_predictions = restored
    if seen.any():
        forest.oob_accuracy = float(np.mean(oob_pred[seen] == y[seen]))
    forest.training_accuracy = float(np.mean(np.array(forest.predict(X)) == np.array(tiers)))
    return forest


def evaluate(model: Forest, X, tiers: Sequence[str], labels: Optional[Sequence[str]] = None):
    """Accuracy and confusion matrix (rows = true tier, columns = predicted)."""
    return score_predictions(model.predict(X), tiers, labels)


def score_predictions(pred: Sequence[str], tiers: Sequence[str], labels: Optional[Sequence[str]] = None):
    tiers = [str(t) for t in tiers]
    pred = [str(p) for p in pred]
    if labels is None:
        labels = sorted(set(tiers) | set(pred))
    labels = list(labels)
    confusion = np.zeros((len(labels), len(labels)), dtype=int)
    for t, p in zip(tiers, pred):
        confusion[labels.index(t), labels.index(p)] += 1
    accuracy = float(np.trace(confusion) / len(tiers)) if tiers else 0.0
    return accuracy, confusion, labels

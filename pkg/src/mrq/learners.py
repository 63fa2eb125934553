"""CART classification/regression trees and bagging ensembles.

Trees are grown greedily with an exhaustive scan over every feature and every
midpoint between consecutive distinct values. Nodes are stored in flat arrays
in pre-order, which is also the order used by the model file.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EmptyInputError, ParameterError

CLASSIFICATION = "classification"
REGRESSION = "regression"

DEFAULT_MIN_LEAF = {CLASSIFICATION: 1, REGRESSION: 5}


@njit(cache=True, nogil=True)
def _best_split(X, idx, start, end, yc, y_cls, n_classes, is_clf, min_leaf, tot_counts):
    n = end - start
    d = X.shape[1]
    best_feat = -1
    best_thr = 0.0
    best_nl = 0
    if is_clf:
        sq = 0.0
        for c in range(n_classes):
            sq += tot_counts[c] * tot_counts[c]
        # maximize sum_l^2/n_l + sum_r^2/n_r, parent value is sq/n
        best_score = sq / n
        eps = 1e-12 * best_score
    else:
        ss = 0.0
        for i in range(start, end):
            ss += yc[idx[i]] * yc[idx[i]]
        best_score = 0.0
        eps = 1e-12 * ss
    xs = np.empty(n)
    left_counts = np.zeros(n_classes)
    for f in range(d):
        for i in range(n):
            xs[i] = X[idx[start + i], f]
        order = np.argsort(xs, kind="mergesort")
        if xs[order[0]] == xs[order[n - 1]]:
            continue
        if is_clf:
            left_counts[:] = 0.0
            sq_l = 0.0
            sq_r = 0.0
            for c in range(n_classes):
                sq_r += tot_counts[c] * tot_counts[c]
        else:
            sum_l = 0.0
            sum_tot = 0.0
            for i in range(n):
                sum_tot += yc[idx[start + i]]
        for i in range(n - 1):
            row = idx[start + order[i]]
            if is_clf:
                c = y_cls[row]
                lc = left_counts[c]
                rc = tot_counts[c] - lc
                sq_l += 2.0 * lc + 1.0
                sq_r -= 2.0 * rc - 1.0
                left_counts[c] = lc + 1.0
            else:
                sum_l += yc[row]
            a = xs[order[i]]
            b = xs[order[i + 1]]
            if a == b:
                continue
            nl = i + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            if is_clf:
                score = sq_l / nl + sq_r / nr
            else:
                sum_r = sum_tot - sum_l
                score = sum_l * sum_l / nl + sum_r * sum_r / nr
            # the first valid split is taken even at zero gain, so impure nodes keep splitting
            if best_feat < 0 or score > best_score + eps:
                best_score = score
                best_feat = f
                thr = 0.5 * (a + b)
                if thr >= b:
                    thr = a
                best_thr = thr
                best_nl = nl
    return best_feat, best_thr, best_nl


@njit(cache=True, nogil=True)
def _grow(X, y_reg, y_cls, n_classes, is_clf, min_leaf):
    n = X.shape[0]
    max_nodes = 2 * n + 1
    width = n_classes if is_clf else 2
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros((max_nodes, width))
    idx = np.arange(n)
    yc = np.empty(n)

    # stack of (start, end, parent, is_left)
    st_start = np.empty(max_nodes, dtype=np.int64)
    st_end = np.empty(max_nodes, dtype=np.int64)
    st_parent = np.empty(max_nodes, dtype=np.int64)
    st_left = np.empty(max_nodes, dtype=np.bool_)
    top = 0
    st_start[0] = 0
    st_end[0] = n
    st_parent[0] = -1
    st_left[0] = True
    top = 1
    n_nodes = 0
    counts = np.zeros(n_classes)
    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        parent = st_parent[top]
        is_left = st_left[top]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node
        size = end - start
        pure = True
        if is_clf:
            counts[:] = 0.0
            for i in range(start, end):
                counts[y_cls[idx[i]]] += 1.0
            for c in range(n_classes):
                value[node, c] = counts[c]
                if counts[c] != 0.0 and counts[c] != size:
                    pure = False
        else:
            mean = 0.0
            for i in range(start, end):
                mean += y_reg[idx[i]]
            mean /= size
            first = y_reg[idx[start]]
            for i in range(start, end):
                yc[idx[i]] = y_reg[idx[i]] - mean
                if y_reg[idx[i]] != first:
                    pure = False
            value[node, 0] = mean
            value[node, 1] = size
        if pure or size < 2 * min_leaf:
            continue
        f, thr, nl = _best_split(X, idx, start, end, yc, y_cls, n_classes, is_clf, min_leaf, counts)
        if f < 0:
            continue
        feature[node] = f
        threshold[node] = thr
        # stable partition of idx[start:end] on x <= thr
        buf = idx[start:end].copy()
        lo = start
        hi = start + nl
        for i in range(size):
            r = buf[i]
            if X[r, f] <= thr:
                idx[lo] = r
                lo += 1
            else:
                idx[hi] = r
                hi += 1
        # push right first so the left subtree is numbered next (pre-order)
        st_start[top] = start + nl
        st_end[top] = end
        st_parent[top] = node
        st_left[top] = False
        top += 1
        st_start[top] = start
        st_end[top] = start + nl
        st_parent[top] = node
        st_left[top] = True
        top += 1
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def _apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat pre-order node arrays; ``feature == -1`` marks a leaf.

    ``value`` rows hold class-count histograms for classification trees and
    ``(mean, count)`` for regression trees.
    """

    kind: str
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return _apply(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X) -> np.ndarray:
        """Class codes (argmax of leaf histogram, lowest on ties) or leaf means."""
        leaves = self.apply(X)
        if self.kind == CLASSIFICATION:
            return np.argmax(self.value[leaves], axis=1)
        return self.value[leaves, 0]


def _check_xy(X, y):
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    y = np.asarray(y)
    if X.shape[0] == 0 or y.shape[0] == 0:
        raise EmptyInputError("cannot fit a tree on zero rows")
    if X.shape[0] != y.shape[0]:
        raise ParameterError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    return X, y


def fit_tree(X, y, kind=CLASSIFICATION, min_leaf=None, n_classes=None) -> Tree:
    """Grow one unpruned CART tree.

    For classification ``y`` must hold integer codes in ``[0, n_classes)``.
    Splits minimize weighted Gini impurity (classification) or weighted
    variance (regression); growth stops at pure nodes, nodes with fewer than
    ``2 * min_leaf`` rows, or nodes where every feature is constant. An impure
    node with no improving split still takes its best zero-gain split (an XOR
    pattern has none at the first level), so with ``min_leaf=1`` training data
    without conflicting duplicates is fit exactly.
    """
    X, y = _check_xy(X, y)
    if min_leaf is None:
        min_leaf = DEFAULT_MIN_LEAF[kind]
    if min_leaf < 1:
        raise ParameterError("min_leaf must be >= 1")
    if kind == CLASSIFICATION:
        y_cls = y.astype(np.int64)
        if n_classes is None:
            n_classes = int(y_cls.max()) + 1
        if y_cls.min() < 0 or y_cls.max() >= n_classes:
            raise ParameterError("class codes outside [0, n_classes)")
        arrays = _grow(X, np.zeros(1), y_cls, int(n_classes), True, int(min_leaf))
    elif kind == REGRESSION:
        y_reg = np.ascontiguousarray(y, dtype=np.float64)
        arrays = _grow(X, y_reg, np.zeros(1, dtype=np.int64), 1, False, int(min_leaf))
    else:
        raise ParameterError(f"unknown tree kind {kind!r}")
    return Tree(kind, *arrays)


@dataclass(frozen=True, eq=False)
class BaggedTrees:
    kind: str
    trees: tuple
    min_leaf: int
    seed: int
    classes: np.ndarray | None = None
    n_features: int = 0

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _check(self, X):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.n_features:
            raise ParameterError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def votes(self, X) -> np.ndarray:
        """Per-class vote histogram, shape (n, n_classes)."""
        X = self._check(X)
        out = np.zeros((X.shape[0], len(self.classes)), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            out[rows, tree.predict(X)] += 1
        return out

    def predict_codes(self, X) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)

    def predict(self, X) -> np.ndarray:
        """Majority vote (lowest class on ties) or mean of tree outputs."""
        if self.kind == CLASSIFICATION:
            return self.classes[self.predict_codes(X)]
        X = self._check(X)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / self.n_trees


def bootstrap_indices(n, seed, t):
    return np.random.default_rng([seed, t]).integers(0, n, size=n)


def fit_bagging(X, y, kind=CLASSIFICATION, n_trees=100, min_leaf=None, seed=0, classes=None, n_jobs=1) -> BaggedTrees:
    """Bagging ensemble; tree ``t`` sees an N-row bootstrap drawn from ``(seed, t)``.

    ``classes`` fixes the label set (and therefore the vote width); by default it
    is the sorted set of labels in ``y``.
    """
    X, y = _check_xy(X, y)
    if n_trees < 1:
        raise ParameterError("n_trees must be >= 1")
    if min_leaf is None:
        min_leaf = DEFAULT_MIN_LEAF[kind]
    n = X.shape[0]
    if kind == CLASSIFICATION:
        classes = np.unique(y) if classes is None else np.asarray(classes)
        codes = np.searchsorted(classes, y)
        if np.any(codes >= len(classes)) or np.any(classes[np.minimum(codes, len(classes) - 1)] != y):
            raise ParameterError("y contains labels outside classes")
        target, n_classes = codes, len(classes)
    elif kind == REGRESSION:
        target, n_classes = np.asarray(y, dtype=np.float64), None
        classes = None
    else:
        raise ParameterError(f"unknown tree kind {kind!r}")

    def build(t):
        rows = bootstrap_indices(n, seed, t)
        return fit_tree(X[rows], target[rows], kind, min_leaf, n_classes)

    if n_jobs is not None and n_jobs != 1 and n_trees > 1:
        with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
            trees = tuple(pool.map(build, range(n_trees)))
    else:
        trees = tuple(build(t) for t in range(n_trees))
    return BaggedTrees(kind, trees, int(min_leaf), int(seed), classes, X.shape[1])


def predict(model: BaggedTrees, x):
    """Prediction for a single feature vector."""
    return model.predict(np.asarray(x, dtype=float).reshape(1, -1))[0]

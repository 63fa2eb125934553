"""k-means codebooks over (subsets of) the standardized output space."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import EmptyInputError, ParameterError

logger = logging.getLogger(__name__)


@njit(cache=True)
def _nearest(points, centroids):
    """Index of and squared distance to the nearest centroid, lowest index on ties."""
    n, p = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n)
    for i in range(n):
        best = np.inf
        arg = 0
        for c in range(k):
            acc = 0.0
            for j in range(p):
                diff = points[i, j] - centroids[c, j]
                acc += diff * diff
            if acc < best:
                best = acc
                arg = c
        labels[i] = arg
        dists[i] = best
    return labels, dists


def nearest_centroids(points, centroids):
    return _nearest(
        np.ascontiguousarray(points, dtype=np.float64), np.ascontiguousarray(centroids, dtype=np.float64)
    )


@dataclass(frozen=True)
class KmeansConfig:
    k: int
    max_iters: int = 100
    restarts: int = 10
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError("k must be >= 1")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")
        if self.restarts < 1:
            raise ParameterError("restarts must be >= 1")


@dataclass(frozen=True)
class Codebook:
    """Centroids of a fitted quantizer, in standardized target units."""

    target_indices: tuple
    centroids: np.ndarray
    train_qe: float = 0.0
    iterations_run: int = 0
    qe_history: tuple = field(default=(), repr=False, compare=False)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def assign(cb: Codebook, point) -> int:
    """Index of the centroid nearest to a single point."""
    point = np.asarray(point, dtype=float).reshape(1, -1)
    if point.shape[1] != cb.dim:
        raise ParameterError(f"point has dimension {point.shape[1]}, codebook {cb.dim}")
    return int(nearest_centroids(point, cb.centroids)[0][0])


def assign_all(cb: Codebook, points) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != cb.dim:
        raise ParameterError(f"points have dimension {points.shape[1]}, codebook {cb.dim}")
    return nearest_centroids(points, cb.centroids)[0]


def quantize(cb: Codebook, points) -> np.ndarray:
    """Reproduction values q(y) of ``points``."""
    return cb.centroids[assign_all(cb, points)]


def quantization_error(cb: Codebook, points) -> float:
    """Mean over points of the squared distance to the nearest centroid."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != cb.dim:
        raise ParameterError(f"points have dimension {points.shape[1]}, codebook {cb.dim}")
    return float(nearest_centroids(points, cb.centroids)[1].mean())


def _kmeans_pp(points, k, rng):
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # squared distances underflowed; take any point unequal to every chosen one
            fresh = ~(points[:, None, :] == points[chosen][None]).all(axis=2).any(axis=1)
            cand = np.flatnonzero(fresh)
            if cand.size == 0:
                break
            idx = int(cand[rng.integers(cand.size)])
            chosen.append(idx)
            continue
        idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
        idx = min(idx, n - 1)
        while d2[idx] <= 0:  # guard against landing on a zero-weight point through rounding
            idx = (idx + 1) % n
        chosen.append(idx)
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _update(points, labels, k):
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, labels, points)
    return sums, counts


def _lloyd(points, k, cfg, rng):
    centroids = _kmeans_pp(points, k, rng)
    history = []
    labels, d2 = nearest_centroids(points, centroids)
    qe = d2.sum()
    history.append(qe)
    it = 0
    for it in range(1, cfg.max_iters + 1):
        sums, counts = _update(points, labels, k)
        empty = np.flatnonzero(counts == 0)
        new = centroids.copy()
        nonempty = counts > 0
        new[nonempty] = sums[nonempty] / counts[nonempty, None]
        if empty.size:
            # reseed each empty centroid on the point currently worst served
            for c in empty:
                far = int(np.argmax(d2))
                new[c] = points[far]
                d2[far] = 0.0
        centroids = new
        new_labels, d2 = nearest_centroids(points, centroids)
        new_qe = d2.sum()
        history.append(new_qe)
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        improvement = (qe - new_qe) / qe if qe > 0 else 0.0
        qe = new_qe
        if stable or improvement < cfg.tol:
            break
    return centroids, qe, it, history


def kmeans_fit(points, cfg: KmeansConfig, target_indices=None) -> Codebook:
    """Fit a k-means codebook with k-means++ seeding and ``cfg.restarts`` restarts.

    ``k`` is clamped to the number of distinct rows of ``points``; the best run
    by total squared error is kept.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] == 0:
        raise EmptyInputError("cannot quantize zero points")
    if points.shape[1] == 0:
        raise ParameterError("points need at least one dimension")
    points = np.ascontiguousarray(points)
    n_distinct = np.unique(points, axis=0).shape[0]
    k = min(cfg.k, n_distinct)
    if k < cfg.k:
        logger.debug("k=%d clamped to %d distinct vectors", cfg.k, k)
    if target_indices is None:
        target_indices = tuple(range(points.shape[1]))

    best = None
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        centroids, qe, iters, history = _lloyd(points, k, cfg, rng)
        if best is None or qe < best[1]:
            best = (centroids, qe, iters, history)
    centroids, qe, iters, history = best
    return Codebook(
        target_indices=tuple(int(i) for i in target_indices),
        centroids=centroids,
        train_qe=float(qe / points.shape[0]),
        iterations_run=int(iters),
        qe_history=tuple(float(h) for h in history),
    )


@dataclass(frozen=True)
class SubsetPlan:
    """Target subsets of an ensemble of subquantizers (indices ascending within a subset)."""

    subsets: tuple
    m: int
    seed: int = 0

    @property
    def participation(self) -> np.ndarray:
        counts = np.zeros(self.m, dtype=np.int64)
        for s in self.subsets:
            counts[list(s)] += 1
        return counts

    @property
    def uncovered(self) -> tuple:
        return tuple(int(j) for j in np.flatnonzero(self.participation == 0))


def _as_range(v):
    if isinstance(v, (tuple, list)):
        lo, hi = int(v[0]), int(v[1])
    else:
        lo = hi = int(v)
    if lo > hi:
        raise ParameterError(f"empty range [{lo}, {hi}]")
    return lo, hi


def sample_subsets(m, n_targets, s, seed=0) -> SubsetPlan:
    """Draw ``s`` target subsets independently, each uniformly without replacement.

    ``n_targets`` is the subset size, or an inclusive ``(lo, hi)`` range from
    which each subset's size is drawn uniformly.
    """
    lo, hi = _as_range(n_targets)
    if lo < 1 or hi > m:
        raise ParameterError(f"subset size must lie in [1, {m}], got [{lo}, {hi}]")
    if s < 1:
        raise ParameterError("s must be >= 1")
    rng = np.random.default_rng([seed, 0x5B])
    subsets = []
    for _ in range(s):
        size = int(rng.integers(lo, hi + 1)) if hi > lo else lo
        subsets.append(tuple(int(j) for j in np.sort(rng.choice(m, size=size, replace=False))))
    plan = SubsetPlan(tuple(subsets), m, seed)
    if plan.uncovered:
        logger.warning("targets %s appear in no subset", list(plan.uncovered))
    return plan

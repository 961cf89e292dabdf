"""Distances, nearest neighbors, k-means and typicality."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidKError, ShapeError, UndefinedTypicalityError

DEFAULT_NEIGHBOR_K = 20
KMEANS_MAX_ITER = 100
KMEANS_N_INIT = 10
TYPICALITY_FLOOR = 1e-12


def _as_matrix(x, name):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


def sq_distances(A, B) -> np.ndarray:
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return _kernels.sq_dists(A, B)


def pairwise_distances(A, B) -> np.ndarray:
    """Euclidean distance matrix ``out[i, j] = ||A_i - B_j||``."""
    return np.sqrt(sq_distances(A, B))


def knn(points, query_rows, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other points for each query row.

    Neighbors are ordered by distance, equal distances by index.
    """
    points = _as_matrix(points, "points")
    n = points.shape[0]
    if k < 1 or k > n - 1:
        raise InvalidKError(f"k must be in [1, {n - 1}], got {k}")
    query_rows = np.asarray(query_rows, dtype=np.int64).ravel()
    out = np.empty((query_rows.size, k), dtype=np.int64)
    others = np.arange(n)
    for start in range(0, query_rows.size, 512):
        rows = query_rows[start:start + 512]
        d2 = _kernels.sq_dists(points[rows], points)
        for r, q in enumerate(rows):
            keep = others != q
            order = np.argsort(d2[r, keep], kind="stable")[:k]
            out[start + r] = others[keep][order]
    return out


@dataclass(frozen=True)
class ClusterAssignment:
    assignment: np.ndarray
    centroids: np.ndarray
    sizes: np.ndarray
    objective_history: tuple = field(default=(), repr=False)
    n_iter: int = 0

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def objective(self) -> float:
        return self.objective_history[-1] if self.objective_history else float("nan")

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)


def _kmeanspp_init(points, k, rng):
    """Greedy k-means++ seeding: several D^2 candidates per round, keep the best."""
    n = points.shape[0]
    n_trials = 2 + int(math.log(k))
    centers = np.empty(k, dtype=np.int64)
    centers[0] = rng.integers(n)
    closest = _kernels.sq_dists(points[centers[:1]], points)[0]
    potential = closest.sum()
    for c in range(1, k):
        if potential <= 0.0:
            # every point sits on a center already; fall back to unused indices
            unused = np.setdiff1d(np.arange(n), centers[:c])
            centers[c] = unused[rng.integers(unused.size)] if unused.size else rng.integers(n)
            continue
        draws = rng.uniform(size=n_trials) * potential
        cand = np.searchsorted(np.cumsum(closest), draws)
        cand = np.minimum(cand, n - 1)
        cand_d2 = _kernels.sq_dists(points[cand], points)
        cand_closest = np.minimum(closest, cand_d2)
        cand_pot = cand_closest.sum(axis=1)
        best = int(np.argmin(cand_pot))
        centers[c] = cand[best]
        closest = cand_closest[best]
        potential = cand_pot[best]
    return points[centers].copy()


def kmeans(points, k: int, seed: int, max_iter: int = KMEANS_MAX_ITER,
           n_init: int = KMEANS_N_INIT) -> ClusterAssignment:
    """Lloyd's algorithm with greedy k-means++ seeding.

    Runs ``n_init`` seedings drawn from one generator and keeps the lowest
    final objective (earliest on ties). Each run stops when assignments
    repeat or after ``max_iter`` updates. A cluster that empties is
    re-seeded with the point farthest from its current centroid.
    """
    points = _as_matrix(points, "points")
    n = points.shape[0]
    if k < 1 or k > n:
        raise InvalidKError(f"k must be in [1, {n}], got {k}")
    if n_init < 1:
        raise ValueError(f"n_init must be positive, got {n_init}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        run = _lloyd(points, k, rng, max_iter)
        if best is None or run.objective < best.objective:
            best = run
    return best


def _lloyd(points, k, rng, max_iter):
    centroids = _kmeanspp_init(points, k, rng)
    labels = None
    history = []
    n_iter = 0
    for _ in range(max_iter):
        new_labels, d2 = _kernels.assign(points, centroids)
        counts = np.bincount(new_labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            far = int(np.argmax(d2))
            if d2[far] <= 0.0:
                break
            counts[new_labels[far]] -= 1
            new_labels[far] = empty
            counts[empty] = 1
            centroids[empty] = points[far]
            d2[far] = 0.0
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centroids, counts = _kernels.update_centroids(points, labels, centroids)
        n_iter += 1
        history.append(_objective(points, labels, centroids))
    sizes = np.bincount(labels, minlength=k).astype(np.int64)
    return ClusterAssignment(labels, centroids, sizes, tuple(history), n_iter)


def _objective(points, labels, centroids):
    diff = points - centroids[labels]
    return float(np.einsum("ij,ij->", diff, diff))


@dataclass(frozen=True)
class TypicalityScores:
    scores: np.ndarray
    neighbor_count_used: int


def typicality(points, members, neighbor_k: int = DEFAULT_NEIGHBOR_K) -> TypicalityScores:
    """Inverse mean distance of each member to its nearest fellow members.

    Uses ``min(neighbor_k, len(members) - 1)`` neighbors; mean distances
    below 1e-12 are clamped so co-located points score as most typical.
    """
    points = _as_matrix(points, "points")
    members = np.asarray(members, dtype=np.int64).ravel()
    if members.size < 2:
        raise UndefinedTypicalityError("typicality needs at least two members")
    if neighbor_k < 1:
        raise InvalidKError(f"neighbor_k must be positive, got {neighbor_k}")
    used = min(neighbor_k, members.size - 1)
    sub = np.ascontiguousarray(points[members])
    mean_dist = _kernels.knn_mean_dist(sub, used)
    return TypicalityScores(1.0 / np.maximum(mean_dist, TYPICALITY_FLOOR), used)

"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Both paths accumulate in the same order (sequentially over the feature
dimension, then sequentially over points), so they return bit-identical
float64 results. The numba path is used unless ``TCM_AL_NUMBA=0`` is set
in the environment or numba cannot be imported.
"""

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is installed in CI
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda func: func


def _env_wants_numba():
    return os.environ.get("TCM_AL_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = HAS_NUMBA and _env_wants_numba()
BACKEND = "numba" if USE_NUMBA else "numpy"

_CHUNK = 512


# ---------------------------------------------------------------------------
# squared euclidean distances
# ---------------------------------------------------------------------------

@njit(cache=True)
def sq_dists_numba(A, B):
    n, d = A.shape
    m = B.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(d):
                diff = A[i, t] - B[j, t]
                acc += diff * diff
            out[i, j] = acc
    return out


def sq_dists_numpy(A, B):
    n, d = A.shape
    m = B.shape[0]
    out = np.empty((n, m))
    for start in range(0, n, _CHUNK):
        a = A[start:start + _CHUNK]
        acc = np.zeros((a.shape[0], m))
        for t in range(d):
            diff = a[:, t, None] - B[None, :, t]
            acc += diff * diff
        out[start:start + _CHUNK] = acc
    return out


# ---------------------------------------------------------------------------
# k-means: assignment and centroid update
# ---------------------------------------------------------------------------

@njit(cache=True)
def assign_numba(points, centroids):
    n, d = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best_d2 = np.empty(n)
    for i in range(n):
        best = 0
        bd = np.inf
        for j in range(k):
            acc = 0.0
            for t in range(d):
                diff = points[i, t] - centroids[j, t]
                acc += diff * diff
            if acc < bd:
                bd = acc
                best = j
        labels[i] = best
        best_d2[i] = bd
    return labels, best_d2


def assign_numpy(points, centroids):
    d2 = sq_dists_numpy(points, centroids)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    return labels, d2[np.arange(points.shape[0]), labels]


@njit(cache=True)
def update_centroids_numba(points, labels, old_centroids):
    k, d = old_centroids.shape
    sums = np.zeros((k, d))
    counts = np.zeros(k, dtype=np.int64)
    for i in range(points.shape[0]):
        c = labels[i]
        counts[c] += 1
        for t in range(d):
            sums[c, t] += points[i, t]
    out = old_centroids.copy()
    for c in range(k):
        if counts[c] > 0:
            for t in range(d):
                out[c, t] = sums[c, t] / counts[c]
    return out, counts


def update_centroids_numpy(points, labels, old_centroids):
    k, d = old_centroids.shape
    sums = np.zeros((k, d))
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    out = old_centroids.copy()
    alive = counts > 0
    out[alive] = sums[alive] / counts[alive, None]
    return out, counts


# ---------------------------------------------------------------------------
# k-center greedy: refresh min squared distance after adding one center
# ---------------------------------------------------------------------------

@njit(cache=True)
def min_sq_update_numba(points, center, min_sq):
    n, d = points.shape
    for i in range(n):
        acc = 0.0
        for t in range(d):
            diff = points[i, t] - center[t]
            acc += diff * diff
        if acc < min_sq[i]:
            min_sq[i] = acc
    return min_sq


def min_sq_update_numpy(points, center, min_sq):
    acc = np.zeros(points.shape[0])
    for t in range(points.shape[1]):
        diff = points[:, t] - center[t]
        acc += diff * diff
    np.minimum(min_sq, acc, out=min_sq)
    return min_sq


# ---------------------------------------------------------------------------
# typicality: mean of the K smallest off-diagonal distances per member
# ---------------------------------------------------------------------------

@njit(cache=True)
def knn_mean_dist_numba(points, neighbor_k):
    m, d = points.shape
    out = np.empty(m)
    row = np.empty(m)
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for t in range(d):
                diff = points[i, t] - points[j, t]
                acc += diff * diff
            row[j] = np.sqrt(acc)
        row[i] = np.inf
        srt = np.sort(row)
        s = 0.0
        for j in range(neighbor_k):
            s += srt[j]
        out[i] = s / neighbor_k
    return out


def knn_mean_dist_numpy(points, neighbor_k):
    m = points.shape[0]
    out = np.empty(m)
    for start in range(0, m, _CHUNK):
        stop = min(start + _CHUNK, m)
        dist = np.sqrt(sq_dists_numpy(points[start:stop], points))
        dist[np.arange(stop - start), np.arange(start, stop)] = np.inf
        nearest = np.sort(np.partition(dist, neighbor_k - 1, axis=1)[:, :neighbor_k], axis=1)
        out[start:stop] = np.cumsum(nearest, axis=1)[:, -1] / neighbor_k
    return out


# ---------------------------------------------------------------------------
# ProbCover greedy over a symmetric CSR ball graph
# ---------------------------------------------------------------------------

@njit(cache=True)
def probcover_greedy_numba(indptr, indices, covered, eligible, batch):
    n = indptr.shape[0] - 1
    covered = covered.copy()
    eligible = eligible.copy()
    degree = np.zeros(n, dtype=np.int64)
    for u in range(n):
        for p in range(indptr[u], indptr[u + 1]):
            if not covered[indices[p]]:
                degree[u] += 1
    picks = np.empty(batch, dtype=np.int64)
    for b in range(batch):
        best = -1
        best_deg = -1
        for u in range(n):
            if eligible[u] and degree[u] > best_deg:
                best = u
                best_deg = degree[u]
        picks[b] = best
        eligible[best] = False
        for p in range(indptr[best], indptr[best + 1]):
            v = indices[p]
            if not covered[v]:
                covered[v] = True
                for q in range(indptr[v], indptr[v + 1]):
                    degree[indices[q]] -= 1
    return picks


def probcover_greedy_numpy(indptr, indices, covered, eligible, batch):
    n = indptr.shape[0] - 1
    covered = covered.copy()
    eligible = eligible.copy()
    rows = np.repeat(np.arange(n), np.diff(indptr))
    degree = np.bincount(rows, weights=~covered[indices], minlength=n).astype(np.int64)
    picks = np.empty(batch, dtype=np.int64)
    for b in range(batch):
        masked = np.where(eligible, degree, -1)
        best = int(np.argmax(masked))
        picks[b] = best
        eligible[best] = False
        ball = indices[indptr[best]:indptr[best + 1]]
        fresh = ball[~covered[ball]]
        covered[fresh] = True
        for v in fresh:
            np.subtract.at(degree, indices[indptr[v]:indptr[v + 1]], 1)
    return picks


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    sq_dists = sq_dists_numba
    assign = assign_numba
    update_centroids = update_centroids_numba
    min_sq_update = min_sq_update_numba
    knn_mean_dist = knn_mean_dist_numba
    probcover_greedy = probcover_greedy_numba
else:
    sq_dists = sq_dists_numpy
    assign = assign_numpy
    update_centroids = update_centroids_numpy
    min_sq_update = min_sq_update_numpy
    knn_mean_dist = knn_mean_dist_numpy
    probcover_greedy = probcover_greedy_numpy

BACKENDS = {
    "numba": dict(
        sq_dists=sq_dists_numba,
        assign=assign_numba,
        update_centroids=update_centroids_numba,
        min_sq_update=min_sq_update_numba,
        knn_mean_dist=knn_mean_dist_numba,
        probcover_greedy=probcover_greedy_numba,
    ),
    "numpy": dict(
        sq_dists=sq_dists_numpy,
        assign=assign_numpy,
        update_centroids=update_centroids_numpy,
        min_sq_update=min_sq_update_numpy,
        knn_mean_dist=knn_mean_dist_numpy,
        probcover_greedy=probcover_greedy_numpy,
    ),
}

"""Query strategies: uncertainty, diversity and the TypiClust -> Margin hybrid.

Every sampler returns a 1-D int64 array of pool indices in selection
order. Ties are always broken toward the lower pool index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    BudgetExhaustedError,
    InvalidProbabilitiesError,
    InvalidRadiusError,
    MissingClassifierError,
)
from .geometry import DEFAULT_NEIGHBOR_K, kmeans, pairwise_distances, typicality
from .pool import PoolState, RegimeSpec

MIN_CLUSTER_SIZE = 5
PROB_TOL = 1e-6


class SamplerKind(str, enum.Enum):
    RANDOM = "random"
    MARGIN = "margin"
    ENTROPY = "entropy"
    LEAST_CONFIDENCE = "least_confidence"
    CORESET = "coreset"
    PROBCOVER = "probcover"
    TYPICLUST = "typiclust"
    TCM = "tcm"

    @classmethod
    def parse(cls, name: str) -> "SamplerKind":
        key = name.strip().lower().replace("-", "_")
        key = {"leastconfidence": "least_confidence", "lc": "least_confidence"}.get(key, key)
        return cls(key)

    @property
    def needs_probabilities(self) -> bool:
        return self in (SamplerKind.MARGIN, SamplerKind.ENTROPY, SamplerKind.LEAST_CONFIDENCE)


class Phase(str, enum.Enum):
    TYPICLUST = "typiclust"
    MARGIN = "margin"


@dataclass(frozen=True)
class ProbabilityMatrix:
    """Class posteriors for a set of pool indices, one row per index."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != idx.size:
            raise InvalidProbabilitiesError(
                f"expected {idx.size} probability rows, got shape {vals.shape}"
            )
        if vals.shape[1] < 2:
            raise InvalidProbabilitiesError("need at least two classes")
        if vals.size and (vals.min() < 0.0 or vals.max() > 1.0 or not np.all(np.isfinite(vals))):
            raise InvalidProbabilitiesError("probabilities must lie in [0, 1]")
        if vals.size and np.max(np.abs(vals.sum(axis=1) - 1.0)) > PROB_TOL:
            raise InvalidProbabilitiesError("probability rows must sum to 1")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.indices.size


def _check_batch(batch, available):
    if batch < 0:
        raise ValueError(f"batch must be non-negative, got {batch}")
    if batch > available:
        raise BudgetExhaustedError(f"requested {batch} samples but only {available} are available")


def _take_lowest(scores, indices, batch):
    # lexsort: last key is primary
    order = np.lexsort((indices, scores))
    return indices[order[:batch]]


def sample_random(pool: PoolState, batch: int, seed: int) -> np.ndarray:
    unlabeled = pool.unlabeled
    _check_batch(batch, unlabeled.size)
    rng = np.random.default_rng(seed)
    return np.sort(unlabeled)[rng.permutation(unlabeled.size)[:batch]].astype(np.int64)


# --- uncertainty ---------------------------------------------------------

def margin_scores(values: np.ndarray) -> np.ndarray:
    top2 = -np.sort(-values, axis=1)[:, :2]
    return top2[:, 0] - top2[:, 1]


def entropy_scores(values: np.ndarray) -> np.ndarray:
    acc = np.zeros(values.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        for c in range(values.shape[1]):
            p = values[:, c]
            acc += np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return acc


def least_confidence_scores(values: np.ndarray) -> np.ndarray:
    return values.max(axis=1)


def sample_margin(probs: ProbabilityMatrix, batch: int) -> np.ndarray:
    _check_batch(batch, len(probs))
    return _take_lowest(margin_scores(probs.values), probs.indices, batch)


def sample_entropy(probs: ProbabilityMatrix, batch: int) -> np.ndarray:
    _check_batch(batch, len(probs))
    return _take_lowest(-entropy_scores(probs.values), probs.indices, batch)


def sample_least_confidence(probs: ProbabilityMatrix, batch: int) -> np.ndarray:
    _check_batch(batch, len(probs))
    return _take_lowest(least_confidence_scores(probs.values), probs.indices, batch)


# --- coreset ---------------------------------------------------------------

def kcenter_greedy(features, labeled_mask, batch):
    """Farthest-first traversal; returns picks and each pick's squared radius."""
    points = np.ascontiguousarray(features, dtype=np.float64)
    labeled_mask = np.asarray(labeled_mask, dtype=bool)
    n = points.shape[0]
    min_sq = np.full(n, np.inf)
    labeled = np.flatnonzero(labeled_mask)
    for start in range(0, labeled.size, 256):
        block = _kernels.sq_dists(points[labeled[start:start + 256]], points)
        np.minimum(min_sq, block.min(axis=0), out=min_sq)
    taken = labeled_mask.copy()
    picks = np.empty(batch, dtype=np.int64)
    radii = np.empty(batch)
    for b in range(batch):
        if b == 0 and labeled.size == 0:
            # cold start: farthest point from the dataset mean
            center = points.mean(axis=0)
            score = _kernels.sq_dists(points, center[None, :])[:, 0]
        else:
            score = min_sq
        masked = np.where(taken, -np.inf, score)
        pick = int(np.argmax(masked))
        picks[b] = pick
        radii[b] = masked[pick]
        taken[pick] = True
        _kernels.min_sq_update(points, points[pick], min_sq)
    return picks, radii


def sample_coreset(features, pool: PoolState, batch: int) -> np.ndarray:
    _check_batch(batch, pool.n_unlabeled)
    if batch == 0:
        return np.empty(0, dtype=np.int64)
    picks, _ = kcenter_greedy(features, pool.labeled_mask, batch)
    return picks


# --- probcover ---------------------------------------------------------------

def ball_graph(features, delta: float):
    """Symmetric CSR adjacency with an edge u-v iff ||x_u - x_v|| <= delta (self loops included)."""
    points = np.ascontiguousarray(features, dtype=np.float64)
    n = points.shape[0]
    indptr = np.zeros(n + 1, dtype=np.int64)
    chunks = []
    for start in range(0, n, 512):
        dist = np.sqrt(_kernels.sq_dists(points[start:start + 512], points))
        rows, cols = np.nonzero(dist <= delta)
        np.add.at(indptr, rows + start + 1, 1)
        chunks.append(cols.astype(np.int64))
    indptr = np.cumsum(indptr)
    indices = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    return indptr, indices


def sample_probcover(features, pool: PoolState, batch: int, delta: float) -> np.ndarray:
    if not (delta > 0) or not np.isfinite(delta):
        raise InvalidRadiusError(f"delta must be a positive finite radius, got {delta}")
    _check_batch(batch, pool.n_unlabeled)
    if batch == 0:
        return np.empty(0, dtype=np.int64)
    indptr, indices = ball_graph(features, delta)
    covered = np.zeros(pool.n_samples, dtype=bool)
    for u in pool.labeled:
        covered[indices[indptr[u]:indptr[u + 1]]] = True
    eligible = ~pool.labeled_mask
    return _kernels.probcover_greedy(indptr, indices, covered, eligible, batch)


def estimate_probcover_delta(features, class_count: int, seed: int = 0,
                             purity_target: float = 0.95, grid_size: int = 30,
                             max_points: int = 2000) -> float:
    """Largest radius on a log grid whose balls are at least 95% pure.

    Purity is the fraction of points whose delta-ball contains only points
    of the same k-means pseudo-label (k = number of classes).
    """
    points = np.asarray(features, dtype=np.float64)
    pseudo = kmeans(points, class_count, seed).assignment
    if points.shape[0] > max_points:
        keep = np.sort(np.random.default_rng(seed).choice(points.shape[0], max_points, replace=False))
        points, pseudo = points[keep], pseudo[keep]
    dist = pairwise_distances(points, points)
    other = pseudo[:, None] != pseudo[None, :]
    nearest_foreign = np.where(other, dist, np.inf).min(axis=1)
    positive = dist[dist > 0]
    if positive.size == 0:
        return 1.0
    lo, hi = np.quantile(positive, 0.01), np.quantile(positive, 0.5)
    grid = np.geomspace(lo, hi, grid_size) if hi > lo else np.array([lo])
    purity = np.array([(nearest_foreign > d).mean() for d in grid])
    ok = np.flatnonzero(purity >= purity_target)
    return float(grid[ok[-1]] if ok.size else grid[0])


# --- typiclust ---------------------------------------------------------------

def select_typical(features, labeled_mask, assignment, batch: int,
                   neighbor_k: int = DEFAULT_NEIGHBOR_K) -> np.ndarray:
    """Pick the most typical unlabeled point from the largest uncovered clusters.

    Clusters with fewer than five members rank after all larger ones.
    When uncovered clusters run out, further picks cycle through all
    clusters by size taking the next most typical unlabeled member.
    """
    labeled_mask = np.asarray(labeled_mask, dtype=bool)
    assignment = np.asarray(assignment, dtype=np.int64)
    k = int(assignment.max()) + 1 if assignment.size else 0
    sizes = np.bincount(assignment, minlength=k)
    covered = np.zeros(k, dtype=bool)
    covered[assignment[labeled_mask]] = True

    # rank key: small clusters last, then larger first, then lower id
    ids = np.arange(k)
    rank = np.lexsort((ids, -sizes, sizes < MIN_CLUSTER_SIZE))
    rank = rank[sizes[rank] > 0]

    candidates = {}

    def ordered_candidates(c):
        if c not in candidates:
            members = np.flatnonzero(assignment == c)
            if members.size >= 2:
                scores = typicality(features, members, neighbor_k).scores
            else:
                scores = np.zeros(members.size)
            free = ~labeled_mask[members]
            members, scores = members[free], scores[free]
            candidates[c] = list(members[np.lexsort((members, -scores))])
        return candidates[c]

    picks = []
    for c in rank:
        if len(picks) == batch:
            break
        if covered[c]:
            continue
        cand = ordered_candidates(c)
        if cand:
            picks.append(int(cand.pop(0)))
    while len(picks) < batch:
        progressed = False
        for c in rank:
            if len(picks) == batch:
                break
            cand = ordered_candidates(c)
            if cand:
                picks.append(int(cand.pop(0)))
                progressed = True
        if not progressed:
            raise BudgetExhaustedError("no unlabeled points left to fill the batch")
    return np.asarray(picks, dtype=np.int64)


def sample_typiclust(features, pool: PoolState, batch: int,
                     neighbor_k: int = DEFAULT_NEIGHBOR_K, seed: int = 0) -> np.ndarray:
    _check_batch(batch, pool.n_unlabeled)
    if batch == 0:
        return np.empty(0, dtype=np.int64)
    clusters = kmeans(features, pool.n_labeled + batch, seed)
    return select_typical(features, pool.labeled_mask, clusters.assignment, batch, neighbor_k)


# --- hybrid --------------------------------------------------------------------

def tcm_phase(step_index: int, regime: RegimeSpec) -> Phase:
    if step_index < 0:
        raise ValueError(f"step_index must be non-negative, got {step_index}")
    return Phase.TYPICLUST if step_index < regime.typiclust_steps else Phase.MARGIN


def sample_tcm(features, pool: PoolState, batch: int, regime: RegimeSpec, step_index: int,
               probs: ProbabilityMatrix | None = None, seed: int = 0,
               neighbor_k: int = DEFAULT_NEIGHBOR_K) -> np.ndarray:
    if tcm_phase(step_index, regime) is Phase.TYPICLUST:
        return sample_typiclust(features, pool, batch, neighbor_k=neighbor_k, seed=seed)
    if probs is None:
        raise MissingClassifierError(
            f"step {step_index} is in the Margin phase but no class probabilities were given"
        )
    return sample_margin(probs, batch)

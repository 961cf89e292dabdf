"""Embedding dataset, labeled/unlabeled partition and budget bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDatasetError, InvalidQueryError, InvalidSpecError

REGIME_NAMES = ("tiny", "small", "medium", "large")
REGIME_ALIASES = {"low": "small", "mid": "medium", "high": "large"}

# initial budget as a multiple of the class count
REGIME_BUDGET_FACTOR = {"tiny": 1, "small": 5, "medium": 25, "large": 100}
# TypiClust steps before switching to Margin (initial selection included)
REGIME_TYPICLUST_STEPS = {"tiny": 3, "small": 3, "medium": 2, "large": 1}
DEFAULT_NUM_STEPS = 10


def _readonly(arr):
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class EmbeddingDataset:
    """Frozen feature matrix plus integer class labels.

    Features are stored as float32, the precision of the on-disk format,
    so that save/load round trips are exact.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        feats = np.asarray(self.features)
        labels = np.asarray(self.labels)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise InvalidDatasetError(f"features must be a non-empty N x D matrix, got shape {feats.shape}")
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise InvalidDatasetError(
                f"expected {feats.shape[0]} labels, got shape {labels.shape}"
            )
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise InvalidDatasetError("labels must be integers")
        if int(self.class_count) < 2:
            raise InvalidDatasetError(f"class_count must be >= 2, got {self.class_count}")
        labels = labels.astype(np.int64)
        if labels.min() < 0 or labels.max() >= self.class_count:
            bad = int(np.flatnonzero((labels < 0) | (labels >= self.class_count))[0])
            raise InvalidDatasetError(
                f"label {labels[bad]} at index {bad} outside [0, {self.class_count})"
            )
        feats = feats.astype(np.float32)
        if not np.all(np.isfinite(feats)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(feats), axis=1))[0])
            raise InvalidDatasetError(f"non-finite feature value in row {bad}")
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "class_count", int(self.class_count))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "EmbeddingDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return EmbeddingDataset(self.features[idx], self.labels[idx], self.class_count)

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


@dataclass(frozen=True)
class PoolState:
    """Immutable labeled/unlabeled partition of ``{0..N-1}``.

    ``labeled`` keeps insertion order; ``history`` holds one
    ``(step_index, batch)`` tuple per applied query.
    """

    n_samples: int
    labeled: tuple = ()
    history: tuple = ()
    _mask: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._mask is None:
            mask = np.zeros(self.n_samples, dtype=bool)
            mask[list(self.labeled)] = True
            object.__setattr__(self, "_mask", _readonly(mask))

    @property
    def labeled_mask(self) -> np.ndarray:
        return self._mask

    @property
    def labeled_array(self) -> np.ndarray:
        return np.asarray(self.labeled, dtype=np.int64)

    @property
    def unlabeled(self) -> np.ndarray:
        return np.flatnonzero(~self._mask)

    @property
    def n_labeled(self) -> int:
        return len(self.labeled)

    @property
    def n_unlabeled(self) -> int:
        return self.n_samples - len(self.labeled)


def init_pool(dataset: EmbeddingDataset) -> PoolState:
    if not isinstance(dataset, EmbeddingDataset):
        raise InvalidDatasetError("init_pool expects an EmbeddingDataset")
    return PoolState(n_samples=dataset.n_samples)


def apply_query(pool: PoolState, batch, step_index: int) -> PoolState:
    """Move ``batch`` into the labeled set and log it under ``step_index``."""
    batch = [int(i) for i in np.asarray(batch, dtype=np.int64).ravel()]
    if len(set(batch)) != len(batch):
        raise InvalidQueryError(f"batch contains repeated indices: {batch}")
    for i in batch:
        if i < 0 or i >= pool.n_samples:
            raise InvalidQueryError(f"index {i} out of range [0, {pool.n_samples})")
        if pool.labeled_mask[i]:
            raise InvalidQueryError(f"index {i} is already labeled")
    mask = pool.labeled_mask.copy()
    mask[batch] = True
    return PoolState(
        n_samples=pool.n_samples,
        labeled=pool.labeled + tuple(batch),
        history=pool.history + ((int(step_index), tuple(batch)),),
        _mask=_readonly(mask),
    )


@dataclass(frozen=True)
class BudgetSchedule:
    initial_budget: int
    step_size: int
    num_steps: int

    def __post_init__(self):
        if self.initial_budget < 1 or self.step_size < 1 or self.num_steps < 0:
            raise InvalidSpecError(
                f"invalid schedule: initial={self.initial_budget}, step={self.step_size}, steps={self.num_steps}"
            )

    def cumulative(self, step: int) -> int:
        return self.initial_budget + step * self.step_size

    def batch_size(self, step: int) -> int:
        return self.initial_budget if step == 0 else self.step_size

    @property
    def total_budget(self) -> int:
        return self.cumulative(self.num_steps)

    def check_fits(self, n_samples: int):
        if self.total_budget > n_samples:
            raise InvalidSpecError(
                f"schedule needs {self.total_budget} labels "
                f"({self.initial_budget} + {self.num_steps}*{self.step_size}) but the pool has {n_samples}"
            )


@dataclass(frozen=True)
class RegimeSpec:
    name: str
    schedule: BudgetSchedule
    typiclust_steps: int

    def __post_init__(self):
        if self.typiclust_steps < 0:
            raise InvalidSpecError("typiclust_steps must be non-negative")

    def check_class_count(self, class_count: int):
        if self.name == "tiny" and self.schedule.initial_budget != class_count:
            raise InvalidSpecError(
                f"tiny regime needs initial_budget == class count ({class_count}), "
                f"got {self.schedule.initial_budget}"
            )


def canonical_regime_name(name: str) -> str:
    key = name.strip().lower()
    key = REGIME_ALIASES.get(key, key)
    if key not in REGIME_NAMES:
        raise InvalidSpecError(f"unknown regime {name!r}; expected one of {', '.join(REGIME_NAMES)}")
    return key


def rule_of_thumb_typiclust_steps(class_count: int, step_size: int) -> int:
    """Steps of TypiClust needed to label about 20 samples per class."""
    return math.ceil(20 * class_count / step_size)


def default_regime(
    name: str,
    class_count: int,
    num_steps: int = DEFAULT_NUM_STEPS,
    initial_budget: int | None = None,
    step_size: int | None = None,
    typiclust_steps: int | None = None,
    rule: str = "table",
) -> RegimeSpec:
    """Build a regime from the default table, with optional overrides.

    ``rule="20x"`` replaces the per-regime TypiClust step count by
    ``ceil(20*C/step_size)``. Counts past the last step simply keep
    TCM in its TypiClust phase for the whole run.
    """
    name = canonical_regime_name(name)
    if initial_budget is None:
        initial_budget = REGIME_BUDGET_FACTOR[name] * class_count
    if step_size is None:
        step_size = initial_budget
    schedule = BudgetSchedule(initial_budget, step_size, num_steps)
    if typiclust_steps is None:
        if rule == "table":
            typiclust_steps = REGIME_TYPICLUST_STEPS[name]
        elif rule == "20x":
            typiclust_steps = rule_of_thumb_typiclust_steps(class_count, step_size)
        else:
            raise InvalidSpecError(f"unknown typiclust rule {rule!r}; expected 'table' or '20x'")
    return RegimeSpec(name, schedule, typiclust_steps)

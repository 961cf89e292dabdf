"""Active-learning runs, ablations and improvement-over-random aggregation."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifier import TrainConfig, accuracy, balanced_accuracy, fit, predict, predict_proba
from .datagen import LongTailSpec, MixtureSpec, gaussian_mixture, load_embeddings, longtail_subsample
from .errors import AggregationMismatchError, BudgetExhaustedError, InvalidSpecError
from .geometry import DEFAULT_NEIGHBOR_K
from .pool import EmbeddingDataset, PoolState, RegimeSpec, apply_query, init_pool
from .samplers import (
    Phase,
    SamplerKind,
    estimate_probcover_delta,
    sample_coreset,
    sample_entropy,
    sample_least_confidence,
    sample_margin,
    sample_probcover,
    sample_random,
    sample_tcm,
    sample_typiclust,
    tcm_phase,
)

logger = logging.getLogger(__name__)

METRICS = ("accuracy", "balanced_accuracy")
RESULT_FIELDS = ("strategy", "regime", "seed", "step", "cumulative_budget", "metric", "value")
AGGREGATE_FIELDS = ("strategy", "cumulative_budget", "improvement_mean", "improvement_std")

# stream tags keep split, query and training randomness independent
_SPLIT, _QUERY, _TRAIN, _DELTA = 1, 2, 3, 4


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


@dataclass(frozen=True)
class StrategySpec:
    kind: SamplerKind
    typiclust_steps: int | None = None
    delta: float | str = "auto"
    neighbor_k: int = DEFAULT_NEIGHBOR_K
    label: str | None = None

    @property
    def name(self) -> str:
        return self.label or self.kind.value


@dataclass(frozen=True)
class DatasetSource:
    features_path: str | None = None
    labels_path: str | None = None
    mixture: MixtureSpec | None = None
    longtail: LongTailSpec | None = None

    def load(self) -> EmbeddingDataset:
        if self.mixture is not None:
            data = gaussian_mixture(self.mixture)
        elif self.features_path and self.labels_path:
            data = load_embeddings(self.features_path, self.labels_path)
        else:
            raise InvalidSpecError("dataset source needs either a mixture spec or feature and label paths")
        if self.longtail is not None:
            data = longtail_subsample(data, self.longtail)
        return data


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSource
    strategies: tuple
    regime: RegimeSpec
    seeds: tuple = (0, 1, 2)
    train_config: TrainConfig = field(default_factory=TrainConfig)
    test_fraction: float = 0.2
    test_indices: tuple | None = None
    metric: str = "accuracy"
    transition_steps: tuple = ()
    step_sizes: tuple = ()

    def __post_init__(self):
        if not self.seeds:
            raise InvalidSpecError("at least one seed is required")
        if not self.strategies:
            raise InvalidSpecError("at least one strategy is required")
        if self.metric not in METRICS:
            raise InvalidSpecError(f"unknown metric {self.metric!r}")

    @property
    def strategy(self) -> StrategySpec:
        return self.strategies[0]


@dataclass(frozen=True)
class RunRecord:
    strategy: str
    regime: str
    seed: int
    step_index: int
    cumulative_budget: int
    metric: str
    metric_value: float
    wall_time: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class AggregateRecord:
    strategy: str
    cumulative_budget: int | str
    improvement_mean: float
    improvement_std: float
    regime: str = ""


# --- single run ---------------------------------------------------------------------

def stratified_split(labels, seed: int, test_fraction: float):
    """Per-class split; returns sorted ``(train, test)`` index arrays."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(derive_seed(seed, _SPLIT))
    test = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        n_test = int(np.floor(test_fraction * members.size + 0.5))
        test.append(rng.permutation(members)[:n_test])
    test = np.sort(np.concatenate(test)) if test else np.empty(0, dtype=np.int64)
    train = np.setdiff1d(np.arange(labels.size), test)
    return train, test


def split_dataset(dataset: EmbeddingDataset, config: ExperimentConfig, seed: int):
    if config.test_indices is not None:
        test = np.unique(np.asarray(config.test_indices, dtype=np.int64))
        if test.size and (test[0] < 0 or test[-1] >= dataset.n_samples):
            raise InvalidSpecError("test index out of range")
        train = np.setdiff1d(np.arange(dataset.n_samples), test)
    else:
        train, test = stratified_split(dataset.labels, seed, config.test_fraction)
    if test.size == 0:
        raise InvalidSpecError("test split is empty")
    return dataset.subset(train), dataset.subset(test)


def train_head(train: EmbeddingDataset, pool: PoolState, config: TrainConfig, seed: int, step: int):
    idx = pool.labeled_array
    cfg = replace(config, seed=derive_seed(config.seed, seed, step, _TRAIN))
    return fit(train.features[idx], train.labels[idx], train.class_count, cfg)


def evaluate(head, test: EmbeddingDataset, metric: str) -> float:
    pred = predict(head, test.features)
    if metric == "balanced_accuracy":
        return balanced_accuracy(pred, test.labels, test.class_count)
    return accuracy(pred, test.labels)


def select_batch(strategy: StrategySpec, regime: RegimeSpec, features, pool: PoolState,
                 batch: int, step: int, head, seed: int, delta: float | None = None):
    """Query ``batch`` pool indices for ``step`` using ``strategy``."""
    kind = strategy.kind
    qseed = derive_seed(seed, step, _QUERY)

    def probs():
        unl = pool.unlabeled
        return predict_proba(head, features[unl], unl)

    if kind is SamplerKind.RANDOM:
        return sample_random(pool, batch, qseed)
    if kind.needs_probabilities:
        if head is None:
            # no classifier before the first batch: cold start is random
            return sample_random(pool, batch, qseed)
        return {
            SamplerKind.MARGIN: sample_margin,
            SamplerKind.ENTROPY: sample_entropy,
            SamplerKind.LEAST_CONFIDENCE: sample_least_confidence,
        }[kind](probs(), batch)
    if kind is SamplerKind.CORESET:
        return sample_coreset(features, pool, batch)
    if kind is SamplerKind.PROBCOVER:
        return sample_probcover(features, pool, batch, delta)
    if kind is SamplerKind.TYPICLUST:
        return sample_typiclust(features, pool, batch, strategy.neighbor_k, qseed)
    if kind is SamplerKind.TCM:
        if tcm_phase(step, regime) is Phase.MARGIN and head is None:
            return sample_random(pool, batch, qseed)
        p = probs() if tcm_phase(step, regime) is Phase.MARGIN else None
        return sample_tcm(features, pool, batch, regime, step, p, qseed, strategy.neighbor_k)
    raise InvalidSpecError(f"unsupported strategy {kind}")


def strategy_regime(strategy: StrategySpec, regime: RegimeSpec) -> RegimeSpec:
    if strategy.typiclust_steps is None:
        return regime
    return replace(regime, typiclust_steps=strategy.typiclust_steps)


def run_seed(dataset: EmbeddingDataset, config: ExperimentConfig, strategy: StrategySpec,
             seed: int, batch_sizes=None, regime: RegimeSpec | None = None):
    """One active-learning run; returns ``(records, final_pool)``.

    ``batch_sizes`` overrides the schedule (step ablation); by default it is
    the initial budget followed by ``num_steps`` steps of ``step_size``.
    """
    regime = strategy_regime(strategy, regime or config.regime)
    sched = regime.schedule
    if batch_sizes is None:
        batch_sizes = [sched.batch_size(s) for s in range(sched.num_steps + 1)]
    train, test = split_dataset(dataset, config, seed)
    if sum(batch_sizes) > train.n_samples:
        raise BudgetExhaustedError(
            f"schedule needs {sum(batch_sizes)} labels but the training pool has {train.n_samples}"
        )
    features = np.ascontiguousarray(train.features, dtype=np.float64)
    delta = None
    if strategy.kind is SamplerKind.PROBCOVER:
        delta = strategy.delta
        if delta == "auto":
            delta = estimate_probcover_delta(features, train.class_count, derive_seed(seed, _DELTA))
    pool = init_pool(train)
    head = None
    records = []
    for step, batch in enumerate(batch_sizes):
        t0 = time.perf_counter()
        query = select_batch(strategy, regime, features, pool, batch, step, head, seed, delta)
        pool = apply_query(pool, query, step)
        head = train_head(train, pool, config.train_config, seed, step)
        value = evaluate(head, test, config.metric)
        records.append(RunRecord(
            strategy.name, regime.name, int(seed), step, pool.n_labeled,
            config.metric, value, time.perf_counter() - t0,
        ))
    logger.debug("%s seed=%d final=%.4f", strategy.name, seed, records[-1].metric_value)
    return records, pool


def _run_task(args):
    dataset, config, strategy, seed, batch_sizes, regime = args
    return run_seed(dataset, config, strategy, seed, batch_sizes, regime)[0]


def _run_tasks(tasks, workers: int):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    return [r for chunk in results for r in chunk]


def _check_schedule(dataset, config, total):
    train, _ = split_dataset(dataset, config, config.seeds[0])
    if total > train.n_samples:
        raise BudgetExhaustedError(
            f"schedule needs {total} labels but the training pool has {train.n_samples}"
        )


def run_experiment(config: ExperimentConfig, workers: int = 1, dataset: EmbeddingDataset | None = None):
    """Every listed strategy over every seed; one record per (strategy, seed, step)."""
    dataset = dataset if dataset is not None else config.dataset.load()
    _check_schedule(dataset, config, config.regime.schedule.total_budget)
    tasks = [(dataset, config, s, seed, None, None) for s in config.strategies for seed in config.seeds]
    return _run_tasks(tasks, workers)


def run_transition_ablation(config: ExperimentConfig, n_values, workers: int = 1,
                            dataset: EmbeddingDataset | None = None):
    """TCM switching to Margin after ``N`` TypiClust steps, for each ``N``."""
    dataset = dataset if dataset is not None else config.dataset.load()
    _check_schedule(dataset, config, config.regime.schedule.total_budget)
    base = next((s for s in config.strategies if s.kind is SamplerKind.TCM), StrategySpec(SamplerKind.TCM))
    limit = config.regime.schedule.num_steps + 1
    out = {}
    for n in n_values:
        if not 0 <= n <= limit:
            raise InvalidSpecError(f"transition step {n} outside [0, {limit}]")
        strat = replace(base, typiclust_steps=int(n), label=f"tcm_n{n}")
        tasks = [(dataset, config, strat, seed, None, None) for seed in config.seeds]
        out[int(n)] = _run_tasks(tasks, workers)
    return out


def step_ablation_batches(regime: RegimeSpec, margin_step: int) -> list[int]:
    """TypiClust batches from ``regime``, then Margin batches of ``margin_step``.

    The total budget matches the regime's; the last batch is truncated.
    """
    sched = regime.schedule
    total = sched.total_budget
    phase = max(regime.typiclust_steps, 1)
    batches = [sched.batch_size(s) for s in range(phase)]
    spent = sum(batches)
    if spent > total:
        raise InvalidSpecError("TypiClust phase alone exceeds the total budget")
    while spent < total:
        b = min(margin_step, total - spent)
        batches.append(b)
        spent += b
    return batches


def run_step_ablation(config: ExperimentConfig, step_sizes, workers: int = 1,
                      dataset: EmbeddingDataset | None = None):
    dataset = dataset if dataset is not None else config.dataset.load()
    _check_schedule(dataset, config, config.regime.schedule.total_budget)
    base = next((s for s in config.strategies if s.kind is SamplerKind.TCM), StrategySpec(SamplerKind.TCM))
    regime = strategy_regime(base, config.regime)
    out = {}
    for size in step_sizes:
        if size < 1:
            raise InvalidSpecError(f"step size must be positive, got {size}")
        strat = replace(base, label=f"tcm_s{size}")
        batches = step_ablation_batches(regime, int(size))
        tasks = [(dataset, config, strat, seed, batches, regime) for seed in config.seeds]
        out[int(size)] = _run_tasks(tasks, workers)
    return out


# --- aggregation ------------------------------------------------------------------------

def aggregate_improvement(records, baseline_records, group: str = "budget"):
    """Metric minus the baseline's at the same (regime, seed, budget).

    ``group="budget"`` gives mean/std over seeds per budget; ``"pooled"``
    averages each seed over all budgets and reports mean/std over seeds.
    """
    if group not in ("budget", "pooled"):
        raise ValueError(f"unknown grouping {group!r}")
    base = {}
    for r in baseline_records:
        base[(r.regime, r.seed, r.cumulative_budget)] = r.metric_value
    diffs = {}
    for r in records:
        key = (r.regime, r.seed, r.cumulative_budget)
        if key not in base:
            raise AggregationMismatchError(
                f"no baseline record for regime={r.regime} seed={r.seed} budget={r.cumulative_budget}"
            )
        diffs.setdefault((r.strategy, r.regime), {}).setdefault(r.seed, {})[r.cumulative_budget] = (
            r.metric_value - base[key]
        )
    out = []
    for (strategy, regime), by_seed in diffs.items():
        if group == "pooled":
            per_seed = [float(np.mean(list(v.values()))) for _, v in sorted(by_seed.items())]
            out.append(AggregateRecord(strategy, "pooled", float(np.mean(per_seed)), _std(per_seed), regime))
            continue
        budgets = sorted({b for v in by_seed.values() for b in v})
        for b in budgets:
            vals = [v[b] for _, v in sorted(by_seed.items()) if b in v]
            out.append(AggregateRecord(strategy, b, float(np.mean(vals)), _std(vals), regime))
    return out


def _std(values) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


# --- result files -----------------------------------------------------------------------

def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_FIELDS)
    for r in records:
        writer.writerow([r.strategy, r.regime, r.seed, r.step_index, r.cumulative_budget,
                         r.metric, repr(float(r.metric_value))])
    return buf.getvalue()


def records_to_json(records) -> str:
    rows = []
    for r in records:
        row = dataclasses.asdict(r)
        # timing varies between runs and would break byte-identical output
        row.pop("wall_time")
        rows.append(row)
    return json.dumps(rows, indent=1) + "\n"


def write_records(records, out_dir, stem: str = "results"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    csv_path.write_text(records_to_csv(records), encoding="utf-8")
    json_path.write_text(records_to_json(records), encoding="utf-8")
    return [csv_path, json_path]


def read_records_csv(path):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(RunRecord(
                row["strategy"], row["regime"], int(row["seed"]), int(row["step"]),
                int(row["cumulative_budget"]), row["metric"], float(row["value"]),
            ))
    return records


def aggregates_to_csv(aggregates) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(AGGREGATE_FIELDS)
    for a in aggregates:
        writer.writerow([a.strategy, a.cumulative_budget, repr(a.improvement_mean), repr(a.improvement_std)])
    return buf.getvalue()

from dataclasses import replace

import numpy as np
import pytest

from tcm_al import TrainConfig, apply_query, default_regime
from tcm_al.datagen import MixtureSpec
from tcm_al.errors import AggregationMismatchError, BudgetExhaustedError
from tcm_al.harness import (
    DatasetSource,
    ExperimentConfig,
    RunRecord,
    StrategySpec,
    aggregate_improvement,
    aggregates_to_csv,
    read_records_csv,
    records_to_csv,
    records_to_json,
    run_experiment,
    run_seed,
    run_step_ablation,
    run_transition_ablation,
    split_dataset,
    step_ablation_batches,
    stratified_split,
    train_head,
    write_records,
)
from tcm_al.classifier import predict_proba
from tcm_al.pool import PoolState
from tcm_al.samplers import SamplerKind, sample_margin

SOURCE = DatasetSource(mixture=MixtureSpec(4, 30, 6, 4.0, 1.0, seed=3))
FAST = TrainConfig(epochs=30)


def make_config(*kinds, regime="tiny", num_steps=5, seeds=(0, 1), **kw):
    strategies = tuple(StrategySpec(SamplerKind(k)) for k in kinds)
    return ExperimentConfig(SOURCE, strategies, default_regime(regime, 4, num_steps=num_steps),
                            seeds=seeds, train_config=FAST, **kw)


def queries(pool: PoolState):
    return [batch for _, batch in pool.history]


def test_zero_steps_one_record_per_seed():
    recs = run_experiment(make_config("random", num_steps=0, seeds=(0, 1, 2)))
    assert len(recs) == 3
    assert {r.step_index for r in recs} == {0}


def test_record_counts_and_budgets():
    cfg = make_config("random", "margin", "tcm")
    recs = run_experiment(cfg)
    assert len(recs) == 3 * 2 * 6
    for strategy in ("random", "margin", "tcm"):
        for seed in (0, 1):
            run = [r for r in recs if r.strategy == strategy and r.seed == seed]
            assert [r.cumulative_budget for r in run] == [4 + 4 * k for k in range(6)]
            assert all(0.0 <= r.metric_value <= 1.0 for r in run)


@pytest.mark.parametrize("kind", [k.value for k in SamplerKind])
def test_every_strategy_runs_without_repeats(kind):
    cfg = make_config(kind, num_steps=3, seeds=(5,))
    data = SOURCE.load()
    recs, pool = run_seed(data, cfg, cfg.strategy, 5)
    labeled = list(pool.labeled)
    assert len(labeled) == len(set(labeled)) == 16
    assert len(recs) == 4


def test_random_runs_are_identical():
    cfg = make_config("random")
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert records_to_csv(a) == records_to_csv(b)
    assert records_to_json(a) == records_to_json(b)


def test_tcm_replays_typiclust_then_margin():
    cfg = make_config("tcm", num_steps=6, seeds=(2,))
    data = SOURCE.load()
    tcm_recs, tcm_pool = run_seed(data, cfg, StrategySpec(SamplerKind.TCM), 2)
    _, typ_pool = run_seed(data, cfg, StrategySpec(SamplerKind.TYPICLUST), 2)
    assert queries(tcm_pool)[:3] == queries(typ_pool)[:3]
    assert queries(tcm_pool)[3] != queries(typ_pool)[3]

    # from step 3 on, each TCM batch equals Margin applied to the TCM pool so far
    train, _ = split_dataset(data, cfg, 2)
    feats = train.features.astype(float)
    for step in range(3, 7):
        prefix = PoolState(train.n_samples)
        for s, batch in tcm_pool.history[:step]:
            prefix = apply_query(prefix, batch, s)
        head = train_head(train, prefix, cfg.train_config, 2, step - 1)
        unl = prefix.unlabeled
        expected = sample_margin(predict_proba(head, feats[unl], unl), 4)
        assert tuple(expected.tolist()) == tcm_pool.history[step][1]


def test_transition_ablation():
    cfg = make_config("tcm", num_steps=4, seeds=(0, 1))
    out = run_transition_ablation(cfg, [1, 2, 5])
    assert set(out) == {1, 2, 5}
    step0 = {n: [(r.seed, r.metric_value) for r in recs if r.step_index == 0] for n, recs in out.items()}
    assert step0[1] == step0[2] == step0[5]
    pure = run_experiment(make_config("typiclust", num_steps=4, seeds=(0, 1)))
    assert [r.metric_value for r in out[5]] == [r.metric_value for r in pure]
    assert {r.strategy for r in out[2]} == {"tcm_n2"}


def test_transition_ablation_n1_switches_immediately():
    cfg = make_config("tcm", num_steps=3, seeds=(0,))
    data = SOURCE.load()
    n1 = StrategySpec(SamplerKind.TCM, typiclust_steps=1)
    _, pool = run_seed(data, cfg, n1, 0)
    _, typ_pool = run_seed(data, cfg, StrategySpec(SamplerKind.TYPICLUST), 0)
    assert queries(pool)[0] == queries(typ_pool)[0]
    assert queries(pool)[1] != queries(typ_pool)[1]


def test_step_ablation_batches():
    regime = default_regime("tiny", 4, num_steps=10)  # total 44, 3 TypiClust steps of 4
    assert step_ablation_batches(regime, 4) == [4, 4, 4] + [4] * 8
    assert step_ablation_batches(regime, 10) == [4, 4, 4, 10, 10, 10, 2]
    assert step_ablation_batches(regime, 40) == [4, 4, 4, 32]


def test_step_ablation_equal_totals():
    cfg = make_config("tcm", num_steps=5, seeds=(0,))
    out = run_step_ablation(cfg, [2, 4, 7])
    finals = {s: recs[-1].cumulative_budget for s, recs in out.items()}
    assert set(finals.values()) == {24}
    assert [r.cumulative_budget for r in out[7]] == [4, 8, 12, 19, 24]


def test_schedule_too_large_fails_before_training():
    cfg = make_config("random", num_steps=40)
    with pytest.raises(BudgetExhaustedError):
        run_experiment(cfg)


def test_stratified_split_is_stratified():
    labels = np.repeat(np.arange(3), [10, 20, 50])
    train, test = stratified_split(labels, 0, 0.2)
    assert np.bincount(labels[test]).tolist() == [2, 4, 10]
    assert not set(train) & set(test)
    assert len(train) + len(test) == 80


def test_explicit_test_indices():
    cfg = make_config("random", num_steps=1, seeds=(0,), test_indices=tuple(range(0, 120, 5)))
    train, test = split_dataset(SOURCE.load(), cfg, 0)
    assert test.n_samples == 24 and train.n_samples == 96


def test_balanced_metric_runs():
    cfg = make_config("random", num_steps=1, seeds=(0,), metric="balanced_accuracy")
    recs = run_experiment(cfg)
    assert all(r.metric == "balanced_accuracy" for r in recs)


def _rec(strategy, seed, budget, value, regime="tiny"):
    return RunRecord(strategy, regime, seed, 0, budget, "accuracy", value)


def test_aggregate_examples():
    strat = [_rec("tcm", 0, 10, 0.6), _rec("tcm", 1, 10, 0.7)]
    base = [_rec("random", 0, 10, 0.5), _rec("random", 1, 10, 0.6)]
    (agg,) = aggregate_improvement(strat, base)
    assert agg.improvement_mean == pytest.approx(0.1)
    assert agg.improvement_std == pytest.approx(0.0, abs=1e-12)
    same = aggregate_improvement(base, base)
    assert all(a.improvement_mean == 0 and a.improvement_std == 0 for a in same)


def test_aggregate_missing_seed():
    with pytest.raises(AggregationMismatchError):
        aggregate_improvement([_rec("tcm", 2, 10, 0.6)], [_rec("random", 0, 10, 0.5)])


def test_aggregate_pooled():
    strat = [_rec("tcm", 0, 10, 0.6), _rec("tcm", 0, 20, 0.8), _rec("tcm", 1, 10, 0.5), _rec("tcm", 1, 20, 0.5)]
    base = [_rec("random", s, b, 0.5) for s in (0, 1) for b in (10, 20)]
    (agg,) = aggregate_improvement(strat, base, group="pooled")
    # per-seed means 0.2 and 0.0
    assert agg.cumulative_budget == "pooled"
    assert agg.improvement_mean == pytest.approx(0.1)
    assert agg.improvement_std == pytest.approx(np.std([0.2, 0.0], ddof=1))
    assert aggregates_to_csv([agg]).splitlines()[0] == "strategy,cumulative_budget,improvement_mean,improvement_std"


def test_result_files(tmp_path):
    recs = run_experiment(make_config("random", "tcm", num_steps=2, seeds=(0,)))
    paths = write_records(recs, tmp_path)
    assert [p.name for p in paths] == ["results.csv", "results.json"]
    lines = paths[0].read_text().splitlines()
    assert lines[0] == "strategy,regime,seed,step,cumulative_budget,metric,value"
    back = read_records_csv(paths[0])
    assert [replace(r, wall_time=0.0) for r in recs] == back
    assert "wall_time" not in paths[1].read_text()


def test_parallel_matches_serial():
    cfg = make_config("random", "typiclust", num_steps=2)
    assert records_to_csv(run_experiment(cfg, workers=2)) == records_to_csv(run_experiment(cfg, workers=1))

"""Hybrid TypiClust -> Margin active learning over frozen embeddings."""

from ._kernels import BACKEND
from .classifier import LinearHead, TrainConfig, accuracy, balanced_accuracy, fit, predict_proba
from .datagen import (
    LongTailSpec,
    MixtureSpec,
    gaussian_mixture,
    load_embeddings,
    longtail_subsample,
    save_embeddings,
)
from .geometry import ClusterAssignment, TypicalityScores, kmeans, knn, pairwise_distances, typicality
from .harness import (
    AggregateRecord,
    DatasetSource,
    ExperimentConfig,
    RunRecord,
    StrategySpec,
    aggregate_improvement,
    run_experiment,
    run_step_ablation,
    run_transition_ablation,
)
from .pool import BudgetSchedule, EmbeddingDataset, PoolState, RegimeSpec, apply_query, default_regime, init_pool
from .samplers import (
    Phase,
    ProbabilityMatrix,
    SamplerKind,
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

__version__ = "0.1.0"

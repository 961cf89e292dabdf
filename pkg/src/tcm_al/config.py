"""Experiment config files.

Grammar: INI-style sections with ``key = value`` lines; ``#`` and ``;``
start comments; lists are comma separated. Relative paths resolve
against the config file's directory. Recognised sections and keys::

    [experiment]  seeds, metric, test_fraction, test_indices
    [dataset]     source (mixture|files), features, labels,
                  class_count, samples_per_class, dimension,
                  center_separation, noise_sigma, seed,
                  longtail_ratio, longtail_seed
    [strategy]    name, typiclust_steps, typiclust_rule (table|20x),
                  delta (auto|float), neighbor_k
    [regime]      name, initial_budget, step_size, num_steps
    [train]       learning_rate, epochs, l2_penalty, batch_size,
                  momentum, seed
    [ablation]    transition_steps, step_sizes

Only [dataset], [strategy] and [regime] are required.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .classifier import TrainConfig
from .datagen import LongTailSpec, MixtureSpec
from .errors import ConfigValidationError, TCMError
from .harness import METRICS, DatasetSource, ExperimentConfig, StrategySpec, split_dataset
from .pool import DEFAULT_NUM_STEPS, default_regime
from .samplers import SamplerKind

KNOWN_KEYS = {
    "experiment": {"seeds", "metric", "test_fraction", "test_indices"},
    "dataset": {"source", "features", "labels", "class_count", "samples_per_class", "dimension",
                "center_separation", "noise_sigma", "seed", "longtail_ratio", "longtail_seed"},
    "strategy": {"name", "typiclust_steps", "typiclust_rule", "delta", "neighbor_k"},
    "regime": {"name", "initial_budget", "step_size", "num_steps"},
    "train": {"learning_rate", "epochs", "l2_penalty", "batch_size", "momentum", "seed"},
    "ablation": {"transition_steps", "step_sizes"},
}
REQUIRED_SECTIONS = ("dataset", "strategy", "regime")


class _Reader:
    """Typed getters that record errors instead of raising."""

    def __init__(self, parser, errors):
        self.parser = parser
        self.errors = errors

    def get(self, section, key, cast=str, default=None):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return cast(raw)
        except (TypeError, ValueError):
            self.errors.append(f"[{section}] {key}: cannot parse {raw!r} as {cast.__name__}")
            return default

    def get_list(self, section, key, cast=int, default=None):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key)
        items = [s.strip() for s in raw.split(",") if s.strip()]
        try:
            return tuple(cast(s) for s in items)
        except ValueError:
            self.errors.append(f"[{section}] {key}: cannot parse {raw.strip()!r} as a list of {cast.__name__}")
            return default


def _delta(raw):
    return "auto" if raw.lower() == "auto" else float(raw)


def parse_config(path, seeds_override=None) -> ExperimentConfig:
    """Read and validate a config file; raise ConfigValidationError listing every problem."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigValidationError([f"cannot read config {path}: {exc}"]) from exc

    errors = []
    r = _Reader(parser, errors)
    base = path.parent

    for section in parser.sections():
        if section not in KNOWN_KEYS:
            errors.append(f"unknown section [{section}]")
            continue
        for key in parser.options(section):
            if key not in KNOWN_KEYS[section]:
                errors.append(f"[{section}] unknown key {key!r}")
    for section in REQUIRED_SECTIONS:
        if not parser.has_section(section):
            errors.append(f"missing required section [{section}]")

    # experiment
    seeds = seeds_override or r.get_list("experiment", "seeds", int, (0, 1, 2))
    if not seeds:
        errors.append("[experiment] seeds must not be empty")
    metric = r.get("experiment", "metric", str, "accuracy")
    if metric not in METRICS:
        errors.append(f"[experiment] metric: unknown metric {metric!r}; expected one of {', '.join(METRICS)}")
    test_fraction = r.get("experiment", "test_fraction", float, 0.2)
    if test_fraction is not None and not 0 < test_fraction < 1:
        errors.append(f"[experiment] test_fraction must lie in (0, 1), got {test_fraction}")
    test_indices = None
    test_file = r.get("experiment", "test_indices", str)
    if test_file:
        try:
            test_indices = tuple(int(v) for v in (base / test_file).read_text().split())
        except (OSError, ValueError) as exc:
            errors.append(f"[experiment] test_indices: {exc}")

    # dataset
    source = None
    if parser.has_section("dataset"):
        kind = r.get("dataset", "source", str)
        if kind is None:
            kind = "files" if parser.has_option("dataset", "features") else "mixture"
        longtail = None
        ratio = r.get("dataset", "longtail_ratio", float)
        if ratio is not None:
            longtail = LongTailSpec(ratio, r.get("dataset", "longtail_seed", int, 0))
        if kind == "files":
            feats = r.get("dataset", "features", str)
            labels = r.get("dataset", "labels", str)
            if not feats or not labels:
                errors.append("[dataset] files source needs both 'features' and 'labels'")
            else:
                source = DatasetSource(str(base / feats), str(base / labels), longtail=longtail)
        elif kind == "mixture":
            values = {}
            for key, cast in (("class_count", int), ("samples_per_class", int), ("dimension", int),
                              ("center_separation", float)):
                values[key] = r.get("dataset", key, cast)
                if values[key] is None and not parser.has_option("dataset", key):
                    errors.append(f"[dataset] mixture source needs {key!r}")
            if all(v is not None for v in values.values()):
                source = DatasetSource(
                    mixture=MixtureSpec(
                        noise_sigma=r.get("dataset", "noise_sigma", float, 1.0),
                        seed=r.get("dataset", "seed", int, 0),
                        **values,
                    ),
                    longtail=longtail,
                )
        else:
            errors.append(f"[dataset] source: unknown source {kind!r}; expected 'mixture' or 'files'")

    # strategy
    strategies = ()
    names = r.get_list("strategy", "name", str, ())
    if parser.has_section("strategy") and not names:
        errors.append("[strategy] name is required")
    delta = r.get("strategy", "delta", _delta, "auto")
    if delta != "auto" and delta is not None and not delta > 0:
        errors.append(f"[strategy] delta must be positive, got {delta}")
    neighbor_k = r.get("strategy", "neighbor_k", int, 20)
    if neighbor_k is not None and neighbor_k < 1:
        errors.append("[strategy] neighbor_k must be positive")
    kinds = []
    for name in names:
        try:
            kinds.append(SamplerKind.parse(name))
        except ValueError:
            valid = ", ".join(k.value for k in SamplerKind)
            errors.append(f"[strategy] name: unknown strategy {name!r}; expected one of {valid}")
    strategies = tuple(StrategySpec(k, delta=delta, neighbor_k=neighbor_k) for k in kinds)

    # train
    train = TrainConfig()
    overrides = {}
    for key, cast in (("learning_rate", float), ("epochs", int), ("l2_penalty", float),
                      ("batch_size", int), ("momentum", float), ("seed", int)):
        value = r.get("train", key, cast)
        if value is not None:
            overrides[key] = value
    try:
        train = TrainConfig(**overrides)
    except TCMError as exc:
        errors.append(f"[train] {exc}")

    transition = r.get_list("ablation", "transition_steps", int, ())
    step_sizes = r.get_list("ablation", "step_sizes", int, ())

    # dataset-dependent checks: regime resolution and schedule size
    dataset = None
    if source is not None:
        try:
            dataset = source.load()
        except (TCMError, OSError) as exc:
            errors.append(f"[dataset] {exc}")

    regime = None
    if parser.has_section("regime") and dataset is not None:
        name = r.get("regime", "name", str)
        rule = r.get("strategy", "typiclust_rule", str, "table")
        try:
            regime = default_regime(
                name or "",
                dataset.class_count,
                num_steps=r.get("regime", "num_steps", int, DEFAULT_NUM_STEPS),
                initial_budget=r.get("regime", "initial_budget", int),
                step_size=r.get("regime", "step_size", int),
                typiclust_steps=r.get("strategy", "typiclust_steps", int),
                rule=rule,
            )
            regime.check_class_count(dataset.class_count)
        except TCMError as exc:
            errors.append(f"[regime] {exc}")
            regime = None

    if errors:
        raise ConfigValidationError(errors)

    config = ExperimentConfig(
        dataset=source,
        strategies=strategies,
        regime=regime,
        seeds=tuple(seeds),
        train_config=train,
        test_fraction=test_fraction,
        test_indices=test_indices,
        metric=metric,
        transition_steps=transition,
        step_sizes=step_sizes,
    )
    try:
        train_ds, _ = split_dataset(dataset, config, config.seeds[0])
    except TCMError as exc:
        raise ConfigValidationError([f"[experiment] {exc}"]) from exc
    total = regime.schedule.total_budget
    if total > train_ds.n_samples:
        raise ConfigValidationError([
            f"[regime] schedule needs {total} labels ({regime.schedule.initial_budget} + "
            f"{regime.schedule.num_steps}*{regime.schedule.step_size}) but the training pool has "
            f"{train_ds.n_samples} samples"
        ])
    return config

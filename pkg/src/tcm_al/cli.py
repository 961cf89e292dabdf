"""Command-line entry point.

Exit codes: 0 success, 1 validation error (config or data file), 2 any
other runtime error. Every written file path is printed on stdout.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import parse_config
from .datagen import load_embeddings, save_embeddings
from .errors import AggregationMismatchError, ConfigValidationError, FormatError, TCMError
from .harness import (
    aggregate_improvement,
    aggregates_to_csv,
    read_records_csv,
    run_experiment,
    run_step_ablation,
    run_transition_ablation,
    write_records,
)

logger = logging.getLogger("tcm_al")


def _workers() -> int:
    raw = os.environ.get("TCM_AL_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning("ignoring non-integer TCM_AL_THREADS=%r", raw)
    return os.cpu_count() or 1


def _seed_list(text):
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("seed list is empty")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcm-al", description="TypiClust-then-Margin active learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", type=Path, required=config_required, help="experiment config file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seeds", type=_seed_list, default=None, help="comma-separated seeds (overrides config)")
        p.add_argument("--quiet", action="store_true", help="only print emitted file paths")
        return p

    common(sub.add_parser("run", help="run every configured strategy over every seed"))
    p = common(sub.add_parser("ablate-transition", help="vary the TypiClust -> Margin switch step"))
    p.add_argument("--n-values", type=_seed_list, default=None, help="override [ablation] transition_steps")
    p = common(sub.add_parser("ablate-steps", help="vary the Margin-phase step size"))
    p.add_argument("--step-sizes", type=_seed_list, default=None, help="override [ablation] step_sizes")
    p = common(sub.add_parser("aggregate", help="improvement over the random baseline"), config_required=False)
    p.add_argument("--results", type=Path, default=None, help="directory searched for result CSVs (default: --out)")
    p.add_argument("--baseline", default="random", help="baseline strategy name")
    p.add_argument("--group", choices=("budget", "pooled"), default="budget")
    common(sub.add_parser("gen-data", help="write the configured dataset as EMB/LAB files"))
    p = common(sub.add_parser("validate-data", help="check embedding and label files"), config_required=False)
    p.add_argument("--features", type=Path, default=None)
    p.add_argument("--labels", type=Path, default=None)
    return parser


def _emit(paths):
    for path in paths:
        print(path)


def _cmd_run(args):
    config = parse_config(args.config, args.seeds)
    records = run_experiment(config, workers=_workers())
    _emit(write_records(records, args.out))


def _cmd_ablate_transition(args):
    config = parse_config(args.config, args.seeds)
    n_values = args.n_values or config.transition_steps or tuple(range(1, config.regime.schedule.num_steps + 2))
    results = run_transition_ablation(config, n_values, workers=_workers())
    records = [r for n in sorted(results) for r in results[n]]
    _emit(write_records(records, args.out, stem="transition_ablation"))


def _cmd_ablate_steps(args):
    config = parse_config(args.config, args.seeds)
    step = config.regime.schedule.step_size
    sizes = args.step_sizes or config.step_sizes or (max(1, step // 2), step, 2 * step)
    results = run_step_ablation(config, sizes, workers=_workers())
    records = [r for s in sorted(results) for r in results[s]]
    _emit(write_records(records, args.out, stem="step_ablation"))


def _cmd_aggregate(args):
    root = args.results or args.out
    files = sorted(p for p in Path(root).rglob("*.csv") if not p.name.startswith("aggregate"))
    records = []
    for path in files:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
        if header == "strategy,regime,seed,step,cumulative_budget,metric,value":
            records.extend(read_records_csv(path))
    baseline = [r for r in records if r.strategy == args.baseline]
    others = [r for r in records if r.strategy != args.baseline]
    if not baseline:
        raise AggregationMismatchError(f"no records for baseline strategy {args.baseline!r} under {root}")
    aggregates = aggregate_improvement(others + baseline, baseline, group=args.group)
    args.out.mkdir(parents=True, exist_ok=True)
    out = args.out / "aggregate.csv"
    out.write_text(aggregates_to_csv(aggregates), encoding="utf-8")
    _emit([out])


def _cmd_gen_data(args):
    config = parse_config(args.config, args.seeds)
    dataset = config.dataset.load()
    args.out.mkdir(parents=True, exist_ok=True)
    feats, labels = args.out / "features.emb", args.out / "labels.lab"
    save_embeddings(dataset, feats, labels)
    _emit([feats, labels])


def _cmd_validate_data(args):
    if args.features and args.labels:
        feats, labels = args.features, args.labels
    elif args.config:
        config = parse_config(args.config, args.seeds)
        if config.dataset.features_path is None:
            raise ConfigValidationError(["validate-data needs a files dataset or --features/--labels"])
        feats, labels = config.dataset.features_path, config.dataset.labels_path
    else:
        raise ConfigValidationError(["validate-data needs --features and --labels, or --config"])
    data = load_embeddings(feats, labels)
    logger.info("ok: N=%d D=%d C=%d", data.n_samples, data.dimension, data.class_count)


COMMANDS = {
    "run": _cmd_run,
    "ablate-transition": _cmd_ablate_transition,
    "ablate-steps": _cmd_ablate_steps,
    "aggregate": _cmd_aggregate,
    "gen-data": _cmd_gen_data,
    "validate-data": _cmd_validate_data,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        COMMANDS[args.command](args)
    except (ConfigValidationError, FormatError) as exc:
        errors = getattr(exc, "errors", None) or [str(exc)]
        for err in errors:
            print(f"error: {err}", file=sys.stderr)
        return 1
    except (TCMError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

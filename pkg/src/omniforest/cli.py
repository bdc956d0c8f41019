"""Command-line entry point.

Subcommands: generate (synthetic CSV), run (canned experiment from a TOML
config), scaling (complexity benchmark), save/load (model persistence over
CSV task streams), ingest (CSV validation). Exit codes: 0 success, 2 config
error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import (
    EXPERIMENT_KINDS,
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    default_params,
    load_config,
)
from .data import DataError, load_csv, save_csv
from .environments import SpiralSpec, XorSpec, generate_spirals, generate_xor
from .experiments import run_experiment
from .learner import OmniLearner
from .seeding import SeedStream
from .serialize import load_model, save_model

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omniforest", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic task dataset as CSV")
    g.add_argument("--kind", required=True, choices=["xor", "xnor", "rxor", "spirals"])
    g.add_argument("--n", type=int, default=750)
    g.add_argument("--angle", type=float, default=0.0, help="rotation in degrees (rxor)")
    g.add_argument("--variance", type=float, default=0.25**2)
    g.add_argument("--classes", type=int, default=3, help="spiral class count")
    g.add_argument("--turns", type=float, default=2.5, help="spiral turns")
    g.add_argument("--angle-variance", type=float, default=3.0, help="spiral angle noise")
    g.add_argument("--task-id", type=int, default=0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="run a canned experiment from a TOML config")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None)
    r.add_argument("--reps", type=int, default=None)
    r.add_argument("--threads", type=int, default=None)

    s = sub.add_parser("scaling", help="run the complexity benchmark")
    s.add_argument("--config", default=None, help="optional TOML config (kind must be scaling)")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--threads", type=int, default=None)

    sv = sub.add_parser("save", help="train a lifelong learner on a CSV stream and save it")
    sv.add_argument("--data", required=True)
    sv.add_argument("--out", required=True)
    sv.add_argument("--config", default=None, help="optional TOML with [forest] overrides")
    sv.add_argument("--seed", type=int, default=0)

    ld = sub.add_parser("load", help="load a model; optionally predict on a CSV")
    ld.add_argument("--model", required=True)
    ld.add_argument("--data", default=None)
    ld.add_argument("--out", default=None, help="predictions CSV path (with --data)")

    ing = sub.add_parser("ingest", help="validate a task CSV and print a summary")
    ing.add_argument("--data", required=True)
    return parser


def _cmd_generate(args) -> int:
    seed = SeedStream(args.seed)
    if args.kind == "spirals":
        data = generate_spirals(
            SpiralSpec(
                n=args.n,
                class_count=args.classes,
                turns=args.turns,
                angle_variance=args.angle_variance,
                seed=seed,
                task_id=args.task_id,
            )
        )
    else:
        data = generate_xor(
            XorSpec(
                n=args.n,
                variance=args.variance,
                angle_degrees=args.angle if args.kind == "rxor" else 0.0,
                label_flip=args.kind == "xnor",
                seed=seed,
                task_id=args.task_id,
            )
        )
    save_csv(args.out, [data])
    print(f"wrote {data.n_samples} rows ({args.kind}) to {args.out}")
    return 0


def _run_from_config(cfg: ExperimentConfig, args) -> int:
    cfg = cfg.with_overrides(seed=args.seed, out=args.out, reps=args.reps, threads=args.threads)
    result = run_experiment(cfg)
    for line in result.summary_lines():
        print(line)
    if cfg.out:
        print(f"rows written to {cfg.out}")
    return 0


def _cmd_run(args) -> int:
    return _run_from_config(load_config(args.config), args)


def _cmd_scaling(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        if cfg.kind != "scaling":
            raise ConfigError(f"scaling subcommand needs kind='scaling', got {cfg.kind!r}")
    else:
        cfg = config_from_dict({"kind": "scaling"})
    return _run_from_config(cfg, args)


def _forest_from_optional_config(path: str | None):
    if path is None:
        return None, 1.0
    cfg = load_config(path)
    return cfg.forest, cfg.smoothing


def _cmd_save(args) -> int:
    forest, smoothing = _forest_from_optional_config(args.config)
    sequence = load_csv(args.data)
    learner = OmniLearner(forest_config=forest, smoothing=smoothing, seed=args.seed)
    for task in sequence.train:
        learner.add_task(task)
    save_model(learner, args.out)
    print(f"trained on {len(sequence)} tasks; model saved to {args.out}")
    return 0


def _cmd_load(args) -> int:
    learner = load_model(args.model)
    print(
        f"model: {learner.n_tasks} tasks, {len(learner.representers)} representers, "
        f"{learner.n_trees_total} trees, {learner.n_features} features"
    )
    if args.data:
        if not args.out:
            raise ConfigError("--out is required when predicting with --data")
        sequence = load_csv(args.data)
        import csv as _csv

        with open(args.out, "w", newline="") as fh:
            writer = _csv.writer(fh, lineterminator="\n")
            writer.writerow(["task", "row", "predicted"])
            for task in sequence.train:
                preds = learner.predict_batch(task.task_id, task.features)
                for i, pred in enumerate(preds):
                    writer.writerow([task.task_id, i, int(pred)])
        print(f"predictions written to {args.out}")
    return 0


def _cmd_ingest(args) -> int:
    sequence = load_csv(args.data)
    print(f"{args.data}: {len(sequence)} tasks, {sequence.train[0].n_features} features")
    for task in sequence.train:
        print(
            f"  task {task.task_id}: {task.n_samples} rows, {task.class_count} classes"
        )
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "run": _cmd_run,
    "scaling": _cmd_scaling,
    "save": _cmd_save,
    "load": _cmd_load,
    "ingest": _cmd_ingest,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: gen-data, train, eval, sweep-distractors, export-projection.
Metrics are JSON lines (one record per evaluation); sweeps also emit a CSV
degradation curve.  Exit status: 0 on success, 1 on any tacnet error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import KERNEL_BACKEND
from .config import read_config
from .datagen import SyntheticSpec, generate
from .episodes import (
    EpisodeSpec,
    STRUCTURED,
    UNEVEN,
    load_dataset,
    make_label_split,
    sample_episode,
    save_dataset,
)
from .errors import TacnetError
from .evaluate import (
    distractor_sweep,
    evaluate,
    export_projection,
    select_eval_iterations,
    write_sweep_csv,
)
from .seeding import derive_seed
from .tac import TacConfig, VARIANTS
from .train import TrainConfig, load_model, train


def _add_gen_data(sub):
    p = sub.add_parser("gen-data", help="generate a synthetic Gaussian-mixture dataset")
    p.add_argument("--out", required=True, help="output dataset file")
    p.add_argument("--classes", type=int, default=40)
    p.add_argument("--samples-per-class", type=int, default=100)
    p.add_argument("--input-dim", type=int, default=16)
    p.add_argument("--center-scale", type=float, default=2.0)
    p.add_argument("--within-std", type=float, default=1.0)
    p.add_argument("--split-fractions", default="0.6,0.2,0.2",
                   help="train,validation,test class fractions")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_data)


def _cmd_gen_data(args):
    fractions = tuple(float(v) for v in args.split_fractions.split(","))
    spec = SyntheticSpec(
        class_count=args.classes,
        samples_per_class=args.samples_per_class,
        input_dim=args.input_dim,
        class_center_scale=args.center_scale,
        within_class_std=args.within_std,
        seed=args.seed,
        split_fractions=fractions,
    )
    ds = generate(spec)
    save_dataset(args.out, ds)
    print(f"wrote {ds.x.shape[0]} samples, {len(ds.class_split)} classes -> {args.out}")


_TRAIN_OVERRIDES = {
    # flag dest -> TrainConfig key
    "variant": "variant",
    "seed": "seed",
    "episodes": "total_episodes",
    "learning_rate": "learning_rate",
    "way_count": "way_count",
    "shots": "shots",
    "queries_per_class": "queries_per_class",
    "train_iterations": "train_iterations",
    "eval_iterations": "eval_iterations",
    "distance": "distance",
    "labeled_fraction": "labeled_fraction",
    "output_dim": "output_dim",
    "activation": "activation",
    "train_mode": "train_mode",
    "train_u": "train_unlabeled_per_class",
    "train_distractor_classes": "train_distractor_classes",
    "train_distractor_per_class": "train_distractor_per_class",
    "train_unlabeled_total": "train_unlabeled_total",
    "train_distractor_fraction": "train_distractor_fraction",
    "val_u": "val_unlabeled_per_class",
    "validation_period": "validation_period",
    "validation_episodes": "validation_episodes",
    "checkpoint": "checkpoint_path",
}


def _add_train(sub):
    p = sub.add_parser("train", help="meta-train an embedder and reference vectors")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="key=value config file (flags override it)")
    p.add_argument("--checkpoint", help="checkpoint output path")
    p.add_argument("--log-out", help="training log JSONL path")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--seed", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--way-count", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--queries-per-class", type=int)
    p.add_argument("--train-iterations", type=int)
    p.add_argument("--eval-iterations", type=int)
    p.add_argument("--distance", choices=("squared_euclidean", "euclidean"))
    p.add_argument("--labeled-fraction", type=float)
    p.add_argument("--hidden-dims", help="comma-separated, e.g. 64,64")
    p.add_argument("--output-dim", type=int)
    p.add_argument("--activation", choices=("relu", "tanh"))
    p.add_argument("--train-mode", choices=(STRUCTURED, UNEVEN))
    p.add_argument("--train-u", type=int)
    p.add_argument("--train-distractor-classes", type=int)
    p.add_argument("--train-distractor-per-class", type=int)
    p.add_argument("--train-unlabeled-total", type=int)
    p.add_argument("--train-distractor-fraction", type=float)
    p.add_argument("--val-u", type=int)
    p.add_argument("--validation-period", type=int)
    p.add_argument("--validation-episodes", type=int)
    p.add_argument("--cluster-in-embedding-space", action="store_true", default=None)
    p.set_defaults(func=_cmd_train)


def _cmd_train(args):
    mapping = {}
    if args.config:
        mapping.update(read_config(args.config))
    for dest, key in _TRAIN_OVERRIDES.items():
        value = getattr(args, dest)
        if value is not None:
            mapping[key] = value
    if args.hidden_dims is not None:
        mapping["hidden_dims"] = [int(v) for v in args.hidden_dims.split(",")]
    if args.cluster_in_embedding_space:
        mapping["cluster_in_embedding_space"] = True
    cfg = TrainConfig.from_mapping(mapping)
    ds = load_dataset(args.dataset)
    result = train(ds, cfg)
    if args.log_out:
        with open(args.log_out, "w") as fh:
            for rec in result.log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    best = result.best_validation_accuracy
    summary = f"best validation accuracy {best:.4f}" if best is not None else "no validation run"
    print(f"trained {cfg.total_episodes} episodes ({cfg.variant}); {summary}")
    if cfg.checkpoint_path:
        print(f"checkpoint: {cfg.checkpoint_path}")


def _episode_spec_from_args(args, cfg: TrainConfig) -> EpisodeSpec:
    common = dict(
        way_count=args.way_count or cfg.way_count,
        shots=args.shots or cfg.shots,
        queries_per_class=args.queries_per_class or cfg.queries_per_class,
    )
    if args.mode == UNEVEN:
        return EpisodeSpec.uneven_from_total(
            args.unlabeled_total, args.distractor_fraction, **common
        )
    return EpisodeSpec(
        mode=STRUCTURED,
        unlabeled_per_class=args.u,
        distractor_classes=args.distractor_classes,
        distractor_per_class=args.distractor_per_class,
        **common,
    )


def _add_eval_common(p):
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", choices=("train", "validation", "test"), default="test")
    p.add_argument("--labeled-fraction", type=float, default=None,
                   help="defaults to the training value")
    p.add_argument("--split-seed", type=int, default=None,
                   help="label-split seed (defaults to a value derived from --seed)")
    p.add_argument("--way-count", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--queries-per-class", type=int)
    p.add_argument("--workers", type=int, default=1)


def _load_for_eval(args):
    embedder, refs, _, cfg, _ = load_model(args.checkpoint)
    if cfg is None:
        raise TacnetError(f"checkpoint {args.checkpoint} lacks a train config")
    ds = load_dataset(args.dataset)
    fraction = args.labeled_fraction if args.labeled_fraction is not None else cfg.labeled_fraction
    split_seed = args.split_seed if args.split_seed is not None else derive_seed(args.seed, 9001)
    split = make_label_split(ds, fraction, split_seed)
    return embedder, refs, ds, split, cfg


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint over seeded episodes")
    _add_eval_common(p)
    p.add_argument("--episodes", type=int, default=3000)
    p.add_argument("--iterations", default=None,
                   help="clustering iterations; integer or 'auto' for a validation sweep")
    p.add_argument("--variant", choices=VARIANTS, default=None,
                   help="defaults to the training variant")
    p.add_argument("--mode", choices=(STRUCTURED, UNEVEN), default=STRUCTURED)
    p.add_argument("--u", type=int, default=20, help="structured unlabeled per class")
    p.add_argument("--distractor-classes", type=int, default=0)
    p.add_argument("--distractor-per-class", type=int, default=0)
    p.add_argument("--unlabeled-total", type=int, default=200, help="uneven total")
    p.add_argument("--distractor-fraction", type=float, default=0.0)
    p.add_argument("--out", help="append one JSON record here")
    p.set_defaults(func=_cmd_eval)


def _cmd_eval(args):
    embedder, refs, ds, split, cfg = _load_for_eval(args)
    variant = args.variant or cfg.variant
    if variant == "tacdap" and not refs.includes_distractor:
        raise TacnetError("checkpoint has no distractor reference; cannot eval tacdap")
    tac_cfg = TacConfig(variant=variant, eval_iterations=cfg.eval_iterations,
                        distance=cfg.distance,
                        cluster_in_embedding_space=cfg.cluster_in_embedding_space)
    spec = _episode_spec_from_args(args, cfg)
    iterations = args.iterations
    if iterations == "auto":
        iterations = select_eval_iterations(
            embedder, refs, ds, split, spec, tac_cfg,
            episode_count=max(cfg.validation_episodes, 100),
            seed=derive_seed(args.seed, 555), dataset_split="validation",
        )
        print(f"validation-selected iterations: {iterations}")
    elif iterations is not None:
        iterations = int(iterations)
    report = evaluate(
        embedder, refs, ds, split, spec, tac_cfg,
        episode_count=args.episodes, seed=args.seed, iterations=iterations,
        dataset_split=args.split, workers=args.workers,
    )
    record = report.to_record()
    if args.out:
        with open(args.out, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    print(f"{report.variant}: accuracy {report.mean_accuracy:.4f} "
          f"+/- {report.ci95:.4f} over {report.episode_count} episodes "
          f"({report.iterations} iterations, kernels: {KERNEL_BACKEND})")


def _add_sweep(sub):
    p = sub.add_parser("sweep-distractors",
                       help="uneven-mode accuracy across distractor fractions")
    _add_eval_common(p)
    p.add_argument("--fractions", default="0,0.2,0.4,0.6,0.8")
    p.add_argument("--episodes", type=int, default=600)
    p.add_argument("--unlabeled-total", type=int, default=200)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--out", help="append JSON records here")
    p.add_argument("--csv-out", help="write the degradation curve as CSV")
    p.set_defaults(func=_cmd_sweep)


def _cmd_sweep(args):
    embedder, refs, ds, split, cfg = _load_for_eval(args)
    variant = args.variant or cfg.variant
    tac_cfg = TacConfig(variant=variant, eval_iterations=cfg.eval_iterations,
                        distance=cfg.distance,
                        cluster_in_embedding_space=cfg.cluster_in_embedding_space)
    fractions = [float(v) for v in args.fractions.split(",") if v.strip() != ""]
    reports = distractor_sweep(
        embedder, refs, ds, split, tac_cfg, fractions,
        total_unlabeled=args.unlabeled_total, episode_count=args.episodes,
        seed=args.seed, way_count=args.way_count or cfg.way_count,
        shots=args.shots or cfg.shots,
        queries_per_class=args.queries_per_class or cfg.queries_per_class,
        iterations=args.iterations, dataset_split=args.split, workers=args.workers,
    )
    if args.out:
        with open(args.out, "a") as fh:
            for r in reports:
                fh.write(json.dumps(r.to_record(), sort_keys=True) + "\n")
    if args.csv_out:
        write_sweep_csv(args.csv_out, reports)
    for r in reports:
        print(f"fraction {r.extras['distractor_fraction']:.2f}: "
              f"accuracy {r.mean_accuracy:.4f} +/- {r.ci95:.4f}")


def _add_export(sub):
    p = sub.add_parser("export-projection",
                       help="dump projected coordinates per iteration for plotting")
    _add_eval_common(p)
    p.add_argument("--iterations", type=int, default=4)
    p.add_argument("--mode", choices=(STRUCTURED, UNEVEN), default=STRUCTURED)
    p.add_argument("--u", type=int, default=20)
    p.add_argument("--distractor-classes", type=int, default=0)
    p.add_argument("--distractor-per-class", type=int, default=0)
    p.add_argument("--unlabeled-total", type=int, default=200)
    p.add_argument("--distractor-fraction", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export)


def _cmd_export(args):
    embedder, refs, ds, split, cfg = _load_for_eval(args)
    tac_cfg = TacConfig(variant=cfg.variant, eval_iterations=cfg.eval_iterations,
                        distance=cfg.distance)
    spec = _episode_spec_from_args(args, cfg).with_seed(derive_seed(args.seed, 0))
    episode = sample_episode(ds, split, spec, args.split)
    export_projection(embedder, refs, episode, tac_cfg, args.iterations, args.out)
    print(f"wrote projected coordinates -> {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tacnet",
        description="Task-adaptive clustering for semi-supervised few-shot classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen_data(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_sweep(sub)
    _add_export(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (TacnetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

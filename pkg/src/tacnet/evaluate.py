"""Evaluation over episode streams: accuracy with confidence intervals,
per-iteration diagnostics, distractor sweeps, and projected-feature export."""

from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .embedder import Embedder
from .episodes import Dataset, Episode, EpisodeSpec, LabelSplit, sample_episode
from .projection import ReferenceSet, classify_queries, project
from .seeding import derive_seed
from .tac import TacConfig, run_tac, unlabeled_cross_entropy


@dataclass
class EvalReport:
    """Aggregate metrics of one evaluation run (JSON-safe via to_record)."""

    variant: str
    episode_count: int
    iterations: int
    distance: str
    mean_accuracy: float
    ci95: float
    per_episode_accuracy: list
    mean_accuracy_per_iteration: list  # index t = accuracy after t iterations
    mean_lu_per_iteration: list  # index t-1 = soft-label cross-entropy at pass t
    seed: int
    dataset_split: str
    mode: str
    extras: dict = field(default_factory=dict)
    # Full per-episode traces for paired statistics; not serialized.
    accuracy_matrix: np.ndarray | None = None
    lu_matrix: np.ndarray | None = None

    def to_record(self) -> dict:
        rec = dataclasses.asdict(self)
        rec.pop("accuracy_matrix")
        rec.pop("lu_matrix")
        rec["per_episode_accuracy"] = [float(a) for a in self.per_episode_accuracy]
        rec["mean_accuracy_per_iteration"] = [float(a) for a in self.mean_accuracy_per_iteration]
        rec["mean_lu_per_iteration"] = [
            None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)
            for v in self.mean_lu_per_iteration
        ]
        return rec


def _episode_metrics(embedder, refs, ds, split, spec, cfg, iterations, dataset_split):
    """Accuracy after every iteration plus per-pass soft-label cross-entropy."""
    episode = sample_episode(ds, split, spec, dataset_split)
    state = run_tac(embedder, refs, episode, cfg, iterations, record_trace=True)
    z_q = embedder.embed(episode.query_x)
    acc = np.empty(len(state.trace))
    lu = np.full(max(len(state.trace) - 1, 0), np.nan)
    for snap in state.trace:
        _, labels = classify_queries(snap.projection, refs, z_q, cfg.distance)
        acc[snap.iteration] = float(np.mean(labels == episode.query_y))
        if snap.iteration > 0 and snap.soft_labels is not None:
            lu[snap.iteration - 1] = unlabeled_cross_entropy(
                snap.soft_labels, episode.unlabeled_truth,
                includes_distractor=cfg.uses_distractor,
            )
    return acc, lu


def _metrics_chunk(args):
    (embedder, refs, ds, split, spec, cfg, iterations, dataset_split, seed, idxs) = args
    out = []
    for i in idxs:
        acc, lu = _episode_metrics(
            embedder, refs, ds, split, spec.with_seed(derive_seed(seed, i)),
            cfg, iterations, dataset_split,
        )
        out.append((i, acc, lu))
    return out


def evaluate(
    embedder: Embedder,
    refs: ReferenceSet,
    ds: Dataset,
    split: LabelSplit,
    spec: EpisodeSpec,
    cfg: TacConfig,
    episode_count: int,
    seed: int,
    iterations: int | None = None,
    dataset_split: str = "test",
    workers: int = 1,
    record_trace: bool = True,
    extras: dict | None = None,
) -> EvalReport:
    """Run ``episode_count`` seeded episodes and aggregate.

    Per-episode seeds derive from (seed, index) alone, so any worker count
    produces the identical report.  ``record_trace`` off skips the
    per-iteration bookkeeping and scores the final iteration only.
    """
    if iterations is None:
        iterations = cfg.eval_iterations
    if cfg.variant == "tapnet_baseline":
        iterations = 0
    if not record_trace:
        # Cheap path used by training-time validation.
        accs = np.empty(episode_count)
        for i in range(episode_count):
            episode = sample_episode(ds, split, spec.with_seed(derive_seed(seed, i)),
                                     dataset_split)
            state = run_tac(embedder, refs, episode, cfg, iterations)
            _, labels = classify_queries(state.projection, refs,
                                         embedder.embed(episode.query_x), cfg.distance)
            accs[i] = float(np.mean(labels == episode.query_y))
        acc_matrix = accs[:, None]
        lu_matrix = np.empty((episode_count, 0))
        iter_columns = 1
    else:
        iter_columns = iterations + 1
        acc_matrix = np.empty((episode_count, iter_columns))
        lu_matrix = np.full((episode_count, iterations), np.nan)
        if workers > 1:
            chunks = np.array_split(np.arange(episode_count), workers)
            payloads = [
                (embedder, refs, ds, split, spec, cfg, iterations, dataset_split, seed,
                 [int(i) for i in chunk])
                for chunk in chunks if chunk.size
            ]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for result in pool.map(_metrics_chunk, payloads):
                    for i, acc, lu in result:
                        acc_matrix[i], lu_matrix[i] = acc, lu
        else:
            for i in range(episode_count):
                acc, lu = _episode_metrics(
                    embedder, refs, ds, split, spec.with_seed(derive_seed(seed, i)),
                    cfg, iterations, dataset_split,
                )
                acc_matrix[i], lu_matrix[i] = acc, lu

    final = acc_matrix[:, -1]
    mean = float(final.mean())
    ci = float(1.96 * final.std(ddof=1) / np.sqrt(episode_count)) if episode_count > 1 else 0.0
    with np.errstate(invalid="ignore"):
        lu_means = [
            (None if np.all(np.isnan(lu_matrix[:, t])) else float(np.nanmean(lu_matrix[:, t])))
            for t in range(lu_matrix.shape[1])
        ]
    return EvalReport(
        variant=cfg.variant,
        episode_count=episode_count,
        iterations=iterations,
        distance=cfg.distance,
        mean_accuracy=mean,
        ci95=ci,
        per_episode_accuracy=[float(a) for a in final],
        mean_accuracy_per_iteration=[float(a) for a in acc_matrix.mean(axis=0)] if record_trace
        else [mean],
        mean_lu_per_iteration=lu_means,
        seed=seed,
        dataset_split=dataset_split,
        mode=spec.mode,
        extras=dict(extras or {}),
        accuracy_matrix=acc_matrix if record_trace else None,
        lu_matrix=lu_matrix if record_trace else None,
    )


def select_eval_iterations(
    embedder, refs, ds, split, spec, cfg, episode_count, seed,
    max_iterations: int = 6, dataset_split: str = "validation",
) -> int:
    """Pick the iteration count with the best validation accuracy (1-based;
    ties go to fewer iterations)."""
    report = evaluate(embedder, refs, ds, split, spec, cfg, episode_count, seed,
                      iterations=max_iterations, dataset_split=dataset_split)
    accs = report.mean_accuracy_per_iteration[1:]
    if not accs:
        return 0
    return int(np.argmax(accs)) + 1


def distractor_sweep(
    embedder, refs, ds, split, cfg: TacConfig, fractions, total_unlabeled: int,
    episode_count: int, seed: int, way_count: int = 5, shots: int = 1,
    queries_per_class: int = 15, iterations: int | None = None,
    dataset_split: str = "test", workers: int = 1,
) -> list:
    """One uneven-mode evaluation per distractor fraction."""
    reports = []
    for idx, fraction in enumerate(fractions):
        spec = EpisodeSpec.uneven_from_total(
            total_unlabeled, fraction,
            way_count=way_count, shots=shots, queries_per_class=queries_per_class,
        )
        reports.append(
            evaluate(
                embedder, refs, ds, split, spec, cfg, episode_count,
                seed=derive_seed(seed, idx), iterations=iterations,
                dataset_split=dataset_split, workers=workers,
                extras={"distractor_fraction": float(fraction)},
            )
        )
    return reports


def write_sweep_csv(path, reports: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["distractor_fraction", "mean_accuracy", "ci95", "episodes"])
        for r in reports:
            writer.writerow([
                repr(float(r.extras.get("distractor_fraction", 0.0))),
                repr(r.mean_accuracy), repr(r.ci95), r.episode_count,
            ])


def export_projection(embedder: Embedder, refs: ReferenceSet, episode: Episode,
                      cfg: TacConfig, iterations: int, path) -> None:
    """Write projected support/query/unlabeled coordinates per iteration.

    CSV columns: iteration, role, tag, dims, c0..; floats use repr so the
    file round-trips exactly.  Tags are ground truth (-1 = distractor).
    """
    state = run_tac(embedder, refs, episode, cfg, iterations, record_trace=True)
    groups = [
        ("support", embedder.embed(episode.support_x), episode.support_y),
        ("query", embedder.embed(episode.query_x), episode.query_y),
        ("unlabeled", embedder.embed(episode.unlabeled_x)
         if episode.unlabeled_x.shape[0] else None, episode.unlabeled_truth),
    ]
    max_dims = max(snap.projection.out_dim for snap in state.trace)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "role", "tag", "dims"]
                        + [f"c{i}" for i in range(max_dims)])
        for snap in state.trace:
            for role, z, tags in groups:
                if z is None:
                    continue
                coords = project(snap.projection, z)
                for row, tag in zip(coords, tags):
                    writer.writerow([snap.iteration, role, int(tag), row.shape[0]]
                                    + [repr(float(v)) for v in row])


def read_projection_export(path) -> list:
    """Parse rows written by :func:`export_projection` back into tuples."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            dims = int(row[3])
            out.append((int(row[0]), row[1], int(row[2]),
                        np.asarray([float(v) for v in row[4 : 4 + dims]])))
    return out

"""The semi-supervised clustering engine.

One run: embed support and unlabeled samples, average per-class centroids,
build the projection, then iterate -- soft-label the unlabeled samples by
distances in the current projection, refine the centroids in the embedding
space with those soft assignments, rebuild the projection from the refined
centroids.  Four variants:

* ``tapnet_baseline``    supervised only; unlabeled samples are ignored.
* ``semi_sup_inference`` identical to ``tac`` here; the trainer keeps
                         meta-training supervised.
* ``tac``                the full iterative clustering loop.
* ``tacdap``             adds a distractor centroid/reference pair whose
                         error row shapes the clustering projection; the
                         classification projection drops it again.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, linalg
from .errors import InvalidDimensionError, InvalidEpisodeError
from .projection import (
    Centroids,
    ProjectionSpace,
    ReferenceSet,
    SQUARED_EUCLIDEAN,
    DISTANCES,
    build_projection,
    project,
    softmax_over_distances,
)

TAPNET_BASELINE = "tapnet_baseline"
SEMI_SUP_INFERENCE = "semi_sup_inference"
TAC = "tac"
TACDAP = "tacdap"
VARIANTS = (TAPNET_BASELINE, SEMI_SUP_INFERENCE, TAC, TACDAP)

PROB_FLOOR = 1e-12


@dataclass
class SoftLabels:
    """Row-stochastic membership probabilities of unlabeled samples."""

    probs: np.ndarray  # U x (N or N+1)


@dataclass(frozen=True)
class TacConfig:
    variant: str = TAC
    train_iterations: int = 1
    eval_iterations: int = 4
    distance: str = SQUARED_EUCLIDEAN
    cluster_in_embedding_space: bool = False
    rank_tol: float = linalg.DEFAULT_RANK_TOL

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.distance not in DISTANCES:
            raise ValueError(f"distance must be one of {DISTANCES}")
        if self.train_iterations < 0 or self.eval_iterations < 0:
            raise ValueError("iteration counts must be >= 0")
        if self.variant == TAPNET_BASELINE:
            # The baseline never clusters.
            object.__setattr__(self, "train_iterations", 0)
            object.__setattr__(self, "eval_iterations", 0)

    @property
    def uses_distractor(self) -> bool:
        return self.variant == TACDAP


@dataclass
class TacIterationSnapshot:
    """Per-iteration state kept when tracing: classification-ready projection,
    the centroids behind it, and the soft labels produced in that pass."""

    iteration: int
    centroids: Centroids
    projection: ProjectionSpace
    soft_labels: SoftLabels | None
    distractor_kept: bool = False


@dataclass
class TacState:
    """Final state of one clustering run."""

    centroids: Centroids
    projection: ProjectionSpace  # classification projection (N pairs only)
    soft_labels: SoftLabels | None
    iteration: int
    clustering_projection: ProjectionSpace | None = None
    trace: list = field(default_factory=list)


def initial_centroids(
    embedded_support: np.ndarray,
    support_labels: np.ndarray,
    class_count: int,
    embedded_unlabeled: np.ndarray | None,
    variant: str,
) -> Centroids:
    """Per-class support averages; tacdap appends the all-unlabeled mean."""
    z = linalg.as_matrix(embedded_support, "embedded support")
    labels = np.asarray(support_labels)
    if labels.shape != (z.shape[0],):
        raise InvalidDimensionError("one support label per embedded support row")
    rows = class_count + (1 if variant == TACDAP else 0)
    means = np.empty((rows, z.shape[1]))
    counts = np.zeros(rows)
    for n in range(class_count):
        members = z[labels == n]
        if members.shape[0] == 0:
            raise InvalidEpisodeError(f"class {n} has no support samples")
        means[n] = members.mean(axis=0)
        counts[n] = members.shape[0]
    if variant == TACDAP:
        if embedded_unlabeled is None or embedded_unlabeled.shape[0] == 0:
            raise InvalidEpisodeError("tacdap needs a non-empty unlabeled set")
        means[class_count] = embedded_unlabeled.mean(axis=0)
    return Centroids(means=means, shot_counts=counts)


def soft_label(
    space: ProjectionSpace,
    centroids: Centroids,
    embedded_unlabeled: np.ndarray,
    include_distractor: bool,
    distance: str = SQUARED_EUCLIDEAN,
    in_embedding_space: bool = False,
) -> SoftLabels:
    """Membership probabilities of unlabeled samples against every centroid.

    Distances are taken between projections unless ``in_embedding_space``
    (the soft-clustering ablation) is set, in which case raw embeddings are
    compared while classification elsewhere still uses the projection.
    """
    z = linalg.as_matrix(embedded_unlabeled, "embedded unlabeled")
    if z.shape[0] == 0:
        return SoftLabels(probs=np.zeros((0, centroids.means.shape[0])))
    if in_embedding_space:
        probs = softmax_over_distances(z, centroids.means, distance)
    else:
        probs = softmax_over_distances(
            project(space, z), project(space, centroids.means), distance
        )
    return SoftLabels(probs=probs)


def refine_centroids(
    centroids: Centroids,
    soft_labels: SoftLabels,
    embedded_unlabeled: np.ndarray,
    has_distractor: bool = False,
) -> tuple:
    """Soft-assignment update of every centroid.

    Class rows blend the old centroid (weighted by its shot count) with the
    soft-weighted unlabeled mean; the distractor row is a pure soft-weighted
    mean and is kept unchanged when its total mass vanishes (second return
    value reports that).
    """
    probs = soft_labels.probs
    rows = centroids.means.shape[0]
    if probs.shape[0] and probs.shape[1] != rows:
        raise InvalidDimensionError(
            f"soft labels have {probs.shape[1]} columns for {rows} centroids"
        )
    z = linalg.as_matrix(embedded_unlabeled, "embedded unlabeled")
    if probs.shape[0] != z.shape[0]:
        raise InvalidDimensionError("one soft-label row per unlabeled sample")
    if probs.shape[0] == 0:
        return centroids.copy(), has_distractor
    means, kept = _kernels.refine_centroids_kernel(
        np.ascontiguousarray(centroids.means),
        centroids.shot_counts,
        np.ascontiguousarray(probs),
        z,
        has_distractor,
    )
    return Centroids(means=means, shot_counts=centroids.shot_counts.copy()), kept


def classification_projection(
    refs: ReferenceSet, centroids: Centroids, cfg: TacConfig
) -> ProjectionSpace:
    """Projection used to score queries: always the N original pairs."""
    return build_projection(refs, centroids, include_distractor_row=False, rank_tol=cfg.rank_tol)


def run_tac_embedded(
    embedded_support: np.ndarray,
    support_labels: np.ndarray,
    embedded_unlabeled: np.ndarray,
    refs: ReferenceSet,
    cfg: TacConfig,
    iterations: int,
    record_trace: bool = False,
) -> TacState:
    """The clustering loop on pre-embedded samples (the trainer's entry point)."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    n = refs.n_classes
    with_distractor = cfg.uses_distractor
    if cfg.variant == TAPNET_BASELINE:
        iterations = 0
        embedded_unlabeled = np.zeros((0, refs.dim))
    z_u = linalg.as_matrix(embedded_unlabeled, "embedded unlabeled")

    cent = initial_centroids(embedded_support, support_labels, n, z_u, cfg.variant)
    loop_proj = build_projection(refs, cent, with_distractor, cfg.rank_tol)
    cls_proj = (
        classification_projection(refs, cent, cfg) if with_distractor else loop_proj
    )
    soft = None
    kept = False
    trace = []
    if record_trace:
        trace.append(TacIterationSnapshot(0, cent.copy(), cls_proj, None))

    for t in range(1, iterations + 1):
        soft = soft_label(
            loop_proj, cent, z_u, with_distractor, cfg.distance,
            in_embedding_space=cfg.cluster_in_embedding_space,
        )
        cent, kept = refine_centroids(cent, soft, z_u, with_distractor)
        loop_proj = build_projection(refs, cent, with_distractor, cfg.rank_tol)
        cls_proj = (
            classification_projection(refs, cent, cfg) if with_distractor else loop_proj
        )
        if record_trace:
            trace.append(TacIterationSnapshot(t, cent.copy(), cls_proj, soft, kept))

    return TacState(
        centroids=cent,
        projection=cls_proj,
        soft_labels=soft,
        iteration=iterations,
        clustering_projection=loop_proj,
        trace=trace,
    )


def run_tac(embedder, refs: ReferenceSet, episode, cfg: TacConfig,
            iterations: int | None = None, record_trace: bool = False) -> TacState:
    """Embed an episode's support/unlabeled samples and run the loop.

    ``iterations`` defaults to the config's evaluation count.  The episode's
    ground-truth unlabeled tags are never read here.
    """
    if iterations is None:
        iterations = cfg.eval_iterations
    z_s = embedder.embed(episode.support_x)
    if cfg.variant == TAPNET_BASELINE or episode.unlabeled_x.shape[0] == 0:
        z_u = np.zeros((0, refs.dim))
    else:
        z_u = embedder.embed(episode.unlabeled_x)
    return run_tac_embedded(
        z_s, episode.support_y, z_u, refs, cfg, iterations, record_trace
    )


def unlabeled_cross_entropy(
    soft_labels: SoftLabels, true_tags: np.ndarray, includes_distractor: bool = False
) -> float:
    """Mean -log p of each unlabeled sample's true column (diagnostics only).

    Tags >= 0 are candidate-class indices; tag -1 marks a distractor, which
    maps to the final column when one is present and is excluded otherwise.
    Probabilities are clamped at 1e-12.  Returns NaN when nothing qualifies.
    """
    probs = soft_labels.probs
    tags = np.asarray(true_tags)
    if probs.shape[0] != tags.shape[0]:
        raise InvalidDimensionError("one tag per soft-label row")
    n_class_cols = probs.shape[1] - (1 if includes_distractor else 0)
    if tags.size and tags.max() >= n_class_cols:
        raise InvalidDimensionError("tag exceeds candidate column count")
    total = 0.0
    count = 0
    for j in range(probs.shape[0]):
        tag = int(tags[j])
        if tag < 0:
            if not includes_distractor:
                continue
            tag = probs.shape[1] - 1
        total += -np.log(max(probs[j, tag], PROB_FLOOR))
        count += 1
    return total / count if count else float("nan")

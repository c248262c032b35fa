"""Task-adaptive projection: aligning class centroids with reference vectors.

For each episode, a modified reference subtracts the average of the other
references, error vectors measure the gap between unit-normalized modified
references and unit-normalized centroids, and the projection space is the
null space of the stacked error rows -- so projecting zero-forces every error.
Classification happens in that space, by softmax over distances from
projected queries to projected references.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, linalg
from .errors import InvalidDimensionError, InvalidEpisodeError

SQUARED_EUCLIDEAN = "squared_euclidean"
EUCLIDEAN = "euclidean"
DISTANCES = (SQUARED_EUCLIDEAN, EUCLIDEAN)


@dataclass
class ReferenceSet:
    """Meta-learned per-class reference vectors, one row per class.

    When ``includes_distractor`` is set the final row is the extra reference
    that absorbs distractor samples; it never takes part in classification.
    """

    refs: np.ndarray  # (N or N+1) x D
    includes_distractor: bool = False

    def __post_init__(self):
        self.refs = linalg.as_matrix(self.refs, "references")
        if self.n_classes < 1:
            raise InvalidDimensionError("reference set needs at least one class row")

    @property
    def n_classes(self) -> int:
        return self.refs.shape[0] - (1 if self.includes_distractor else 0)

    @property
    def dim(self) -> int:
        return self.refs.shape[1]

    def class_rows(self) -> np.ndarray:
        return self.refs[: self.n_classes]


@dataclass
class Centroids:
    """Per-class embedding averages plus the labeled count behind each row."""

    means: np.ndarray  # (N or N+1) x D
    shot_counts: np.ndarray  # per-row labeled-sample counts (distractor row: 0)

    def __post_init__(self):
        self.means = linalg.as_matrix(self.means, "centroids")
        self.shot_counts = np.ascontiguousarray(self.shot_counts, dtype=np.float64)
        if self.shot_counts.shape != (self.means.shape[0],):
            raise InvalidDimensionError("shot_counts must have one entry per centroid row")

    def copy(self) -> "Centroids":
        return Centroids(means=self.means.copy(), shot_counts=self.shot_counts.copy())


@dataclass
class ProjectionSpace:
    """Orthonormal basis (D x m columns) of the task-adaptive subspace."""

    basis: np.ndarray
    built_from_rows: int

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def out_dim(self) -> int:
        return self.basis.shape[1]


def modified_references(refs: np.ndarray) -> np.ndarray:
    """Each reference minus the average of all the others (N x D in and out)."""
    refs = linalg.as_matrix(refs, "references")
    n = refs.shape[0]
    if n < 2:
        raise InvalidEpisodeError("modified references need at least 2 classes")
    total = refs.sum(axis=0, keepdims=True)
    # phi_n - (sum_{l != n} phi_l) / (N - 1)
    return refs - (total - refs) / (n - 1)


def error_vectors(mod_refs: np.ndarray, means: np.ndarray) -> np.ndarray:
    """Rows of unit(mod_ref) - unit(centroid); degenerate rows raise."""
    mod_refs = linalg.as_matrix(mod_refs, "modified references")
    means = linalg.as_matrix(means, "centroids")
    if mod_refs.shape != means.shape:
        raise InvalidDimensionError(
            f"modified references {mod_refs.shape} vs centroids {means.shape}"
        )
    return linalg.normalize_rows(mod_refs, "modified references") - linalg.normalize_rows(
        means, "centroids"
    )


def build_projection(
    refs: ReferenceSet,
    centroids: Centroids,
    include_distractor_row: bool = False,
    rank_tol: float = linalg.DEFAULT_RANK_TOL,
) -> ProjectionSpace:
    """Null space of the error rows between references and current centroids.

    The distractor pair (when requested) contributes its own error row built
    from the raw distractor reference; it never enters the modified-reference
    averaging of the candidate classes.
    """
    n = refs.n_classes
    if include_distractor_row and not refs.includes_distractor:
        raise InvalidEpisodeError("no distractor reference to include")
    rows = n + (1 if include_distractor_row else 0)
    if centroids.means.shape[0] < rows:
        raise InvalidDimensionError(
            f"need {rows} centroid rows, got {centroids.means.shape[0]}"
        )
    errors = error_vectors(modified_references(refs.class_rows()), centroids.means[:n])
    if include_distractor_row:
        extra = error_vectors(refs.refs[n : n + 1], centroids.means[n : n + 1])
        errors = np.vstack([errors, extra])
    basis = linalg.null_space(errors, rank_tol)
    return ProjectionSpace(basis=basis, built_from_rows=rows)


def project(space: ProjectionSpace, x: np.ndarray) -> np.ndarray:
    """Coordinates of the rows of ``x`` in the projection space (batch x m)."""
    x = linalg.as_matrix(x, "projection input")
    if x.shape[1] != space.dim:
        raise InvalidDimensionError(
            f"projection input has {x.shape[1]} columns, space is {space.dim}-dimensional"
        )
    return x @ space.basis


def softmax_over_distances(x: np.ndarray, anchors: np.ndarray, distance: str) -> np.ndarray:
    """Row-stochastic softmax of negated distances from x rows to anchor rows."""
    if distance not in DISTANCES:
        raise ValueError(f"distance must be one of {DISTANCES}")
    if x.shape[1] != anchors.shape[1]:
        raise InvalidDimensionError(
            f"points have dim {x.shape[1]}, anchors have dim {anchors.shape[1]}"
        )
    return _kernels.softmax_neg_dists(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(anchors, dtype=np.float64),
        distance == SQUARED_EUCLIDEAN,
    )


def classify_queries(
    space: ProjectionSpace,
    refs: ReferenceSet,
    queries: np.ndarray,
    distance: str = SQUARED_EUCLIDEAN,
) -> tuple:
    """Class probabilities and argmax labels for embedded queries.

    Probabilities run over the N candidate classes only; the distractor
    reference, when present, is excluded.  Ties break to the lowest index.
    """
    q_proj = project(space, queries)
    r_proj = project(space, refs.class_rows())
    probs = softmax_over_distances(q_proj, r_proj, distance)
    labels = np.argmax(probs, axis=1)
    return probs, labels

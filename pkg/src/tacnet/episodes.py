"""Datasets, labeled/unlabeled splits, and episode sampling.

Episodes come in two compositions: the structured one (a fixed number of
unlabeled samples per candidate class plus per-class distractor quotas) and
the realistic uneven one (only the total candidate/distractor counts are
fixed; per-class counts are random and non-uniform, and distractors are
pooled across every non-candidate class).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDatasetError, InvalidDimensionError, InvalidSpecError
from .serialize import DATASET_MAGIC, read_container, write_container

SPLITS = ("train", "validation", "test")
STRUCTURED = "structured"
UNEVEN = "uneven"


@dataclass
class Dataset:
    """Feature matrix plus labels and a class-disjoint train/val/test split."""

    x: np.ndarray  # samples x input_dim
    y: np.ndarray  # per-sample class id
    class_split: dict  # class id -> one of SPLITS
    class_names: list | None = None
    _by_class: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2:
            raise InvalidDimensionError("dataset samples must be 2-D")
        if self.y.shape != (self.x.shape[0],):
            raise InvalidDatasetError("one label per sample required")
        for cid in np.unique(self.y):
            if int(cid) not in self.class_split:
                raise InvalidDatasetError(f"class {int(cid)} has no split assignment")
        for cid, split in self.class_split.items():
            if split not in SPLITS:
                raise InvalidDatasetError(f"unknown split {split!r} for class {cid}")
        self._by_class = {
            int(cid): np.flatnonzero(self.y == cid) for cid in np.unique(self.y)
        }

    @property
    def input_dim(self) -> int:
        return self.x.shape[1]

    def classes_in(self, split: str) -> list:
        if split not in SPLITS:
            raise InvalidDatasetError(f"unknown split {split!r}")
        return sorted(c for c, s in self.class_split.items() if s == split and c in self._by_class)

    def class_indices(self, class_id: int) -> np.ndarray:
        return self._by_class[int(class_id)]


def save_dataset(path, ds: Dataset) -> None:
    """Write the documented dataset file: JSON header + float64 LE payload."""
    header = {
        "format": "tacnet-dataset-v1",
        "sample_count": int(ds.x.shape[0]),
        "input_dim": int(ds.input_dim),
        "labels": [int(v) for v in ds.y],
        "class_split": {str(cid): split for cid, split in sorted(ds.class_split.items())},
        "class_names": ds.class_names,
    }
    write_container(path, DATASET_MAGIC, header, {"samples": ds.x})


def load_dataset(path) -> Dataset:
    header, arrays = read_container(path, DATASET_MAGIC)
    return Dataset(
        x=arrays["samples"],
        y=np.asarray(header["labels"], dtype=np.int64),
        class_split={int(cid): split for cid, split in header["class_split"].items()},
        class_names=header.get("class_names"),
    )


@dataclass
class LabelSplit:
    """Per-class partition of sample indices into labeled/unlabeled pools."""

    labeled: dict  # class id -> index array
    unlabeled: dict
    labeled_fraction: float
    seed: int


def make_label_split(ds: Dataset, labeled_fraction: float, seed: int) -> LabelSplit:
    """Split every class's samples into disjoint labeled/unlabeled pools.

    The labeled count is round(fraction * class size), clamped so both pools
    stay non-empty; classes need at least 2 samples.
    """
    if not 0.0 < labeled_fraction < 1.0:
        raise InvalidSpecError("labeled_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    labeled, unlabeled = {}, {}
    for cid in sorted(ds._by_class):
        idx = ds.class_indices(cid)
        if idx.size < 2:
            raise InvalidDatasetError(f"class {cid} has fewer than 2 samples")
        perm = rng.permutation(idx)
        n_lab = int(np.clip(round(labeled_fraction * idx.size), 1, idx.size - 1))
        labeled[cid] = perm[:n_lab]
        unlabeled[cid] = perm[n_lab:]
    return LabelSplit(labeled=labeled, unlabeled=unlabeled,
                      labeled_fraction=labeled_fraction, seed=seed)


@dataclass(frozen=True)
class EpisodeSpec:
    """How to compose one episode; ``seed`` pins all sampling."""

    way_count: int = 5
    shots: int = 1
    queries_per_class: int = 15
    mode: str = STRUCTURED
    unlabeled_per_class: int = 5
    distractor_classes: int = 0
    distractor_per_class: int = 0
    total_candidate_unlabeled: int = 0
    total_distractor: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (STRUCTURED, UNEVEN):
            raise InvalidSpecError(f"mode must be {STRUCTURED!r} or {UNEVEN!r}")
        counts = (
            self.way_count, self.shots, self.queries_per_class,
            self.unlabeled_per_class, self.distractor_classes,
            self.distractor_per_class, self.total_candidate_unlabeled,
            self.total_distractor,
        )
        if any(c < 0 for c in counts) or self.way_count < 1 or self.shots < 1:
            raise InvalidSpecError("episode counts out of range")

    @classmethod
    def uneven_from_total(cls, total_unlabeled: int, distractor_fraction: float,
                          **kwargs) -> "EpisodeSpec":
        """Split a single unlabeled budget by the distractor fraction."""
        if not 0.0 <= distractor_fraction < 1.0:
            raise InvalidSpecError("distractor_fraction must lie in [0, 1)")
        n_distr = int(round(total_unlabeled * distractor_fraction))
        return cls(
            mode=UNEVEN,
            total_candidate_unlabeled=total_unlabeled - n_distr,
            total_distractor=n_distr,
            **kwargs,
        )

    def with_seed(self, seed: int) -> "EpisodeSpec":
        return dataclasses.replace(self, seed=seed)


@dataclass
class Episode:
    """One few-shot task.  ``unlabeled_truth`` (local class index, or -1 for
    a distractor) exists for diagnostics only; the clustering engine reads
    features exclusively."""

    support_x: np.ndarray
    support_y: np.ndarray  # episode-local labels 0..N-1
    query_x: np.ndarray
    query_y: np.ndarray
    unlabeled_x: np.ndarray
    way_count: int
    candidate_classes: np.ndarray  # original class ids, index = local label
    unlabeled_truth: np.ndarray
    distractor_classes: np.ndarray

    def algorithm_view(self) -> tuple:
        """The label-free view the algorithm is allowed to see."""
        return self.support_x, self.support_y, self.query_x, self.unlabeled_x


def _draw(rng, pool: np.ndarray, k: int, what: str) -> np.ndarray:
    if pool.size < k:
        raise InvalidSpecError(f"need {k} {what}, pool has {pool.size}")
    return rng.choice(pool, size=k, replace=False)


def _finish_episode(rng, ds, spec, candidates, support_idx, query_idx,
                    unlabeled_idx, tags, distractors) -> Episode:
    unlabeled_idx = np.asarray(unlabeled_idx, dtype=np.int64)
    tags = np.asarray(tags, dtype=np.int64)
    if unlabeled_idx.size:
        perm = rng.permutation(unlabeled_idx.size)
        unlabeled_idx, tags = unlabeled_idx[perm], tags[perm]
        unlabeled_x = ds.x[unlabeled_idx]
    else:
        unlabeled_x = np.empty((0, ds.input_dim))
    n, k, q = spec.way_count, spec.shots, spec.queries_per_class
    return Episode(
        support_x=ds.x[support_idx],
        support_y=np.repeat(np.arange(n), k),
        query_x=ds.x[query_idx],
        query_y=np.repeat(np.arange(n), q),
        unlabeled_x=unlabeled_x,
        way_count=n,
        candidate_classes=np.asarray(candidates, dtype=np.int64),
        unlabeled_truth=tags,
        distractor_classes=np.asarray(distractors, dtype=np.int64),
    )


def _support_query(rng, split: LabelSplit, candidates, spec):
    support_idx, query_idx = [], []
    for cid in candidates:
        drawn = _draw(rng, split.labeled[cid], spec.shots + spec.queries_per_class,
                      f"labeled samples of class {cid}")
        support_idx.extend(drawn[: spec.shots])
        query_idx.extend(drawn[spec.shots :])
    return np.asarray(support_idx, dtype=np.int64), np.asarray(query_idx, dtype=np.int64)


def sample_structured_episode(ds: Dataset, split: LabelSplit, spec: EpisodeSpec,
                              dataset_split: str = "train") -> Episode:
    """Fixed per-class composition: u unlabeled per candidate class and d per
    each of the distractor classes, candidate and distractor classes disjoint."""
    if spec.mode != STRUCTURED:
        raise InvalidSpecError("spec mode is not structured")
    rng = np.random.default_rng(spec.seed)
    classes = np.asarray(ds.classes_in(dataset_split))
    candidates = _draw(rng, classes, spec.way_count, "candidate classes")
    support_idx, query_idx = _support_query(rng, split, candidates, spec)

    unlabeled_idx, tags = [], []
    for local, cid in enumerate(candidates):
        drawn = _draw(rng, split.unlabeled[cid], spec.unlabeled_per_class,
                      f"unlabeled samples of class {cid}")
        unlabeled_idx.extend(drawn)
        tags.extend([local] * drawn.size)
    rest = np.asarray(sorted(set(classes.tolist()) - set(candidates.tolist())))
    distractors = _draw(rng, rest, spec.distractor_classes, "distractor classes")
    for cid in distractors:
        drawn = _draw(rng, split.unlabeled[cid], spec.distractor_per_class,
                      f"unlabeled samples of distractor class {cid}")
        unlabeled_idx.extend(drawn)
        tags.extend([-1] * drawn.size)
    return _finish_episode(rng, ds, spec, candidates, support_idx, query_idx,
                           unlabeled_idx, tags, distractors)


def _largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(quotas).astype(np.int64)
    deficit = total - int(base.sum())
    order = np.argsort(-(quotas - base), kind="stable")
    base[order[:deficit]] += 1
    return base


def _fit_to_capacity(counts: np.ndarray, capacity: np.ndarray, total: int) -> np.ndarray:
    """Clamp per-class counts at pool capacity, re-spreading the overflow to
    classes with spare room (largest spare first; ties to the lowest index)."""
    counts = np.minimum(counts, capacity).astype(np.int64)
    for _ in range(total - int(counts.sum())):
        spare = capacity - counts
        idx = int(np.argmax(spare))
        if spare[idx] <= 0:
            raise InvalidSpecError("candidate unlabeled pools exhausted")
        counts[idx] += 1
    return counts


def sample_uneven_episode(ds: Dataset, split: LabelSplit, spec: EpisodeSpec,
                          dataset_split: str = "train") -> Episode:
    """Realistic composition: only totals are fixed.  Candidate-class counts
    follow a symmetric Dirichlet draw rounded to the total; distractors come
    uniformly from the pooled non-candidate unlabeled samples, no quotas."""
    if spec.mode != UNEVEN:
        raise InvalidSpecError("spec mode is not uneven")
    rng = np.random.default_rng(spec.seed)
    classes = np.asarray(ds.classes_in(dataset_split))
    candidates = _draw(rng, classes, spec.way_count, "candidate classes")
    support_idx, query_idx = _support_query(rng, split, candidates, spec)

    unlabeled_idx, tags = [], []
    capacity = np.asarray([split.unlabeled[cid].size for cid in candidates])
    if spec.total_candidate_unlabeled > 0:
        if int(capacity.sum()) < spec.total_candidate_unlabeled:
            raise InvalidSpecError("not enough candidate-class unlabeled samples")
        proportions = rng.dirichlet(np.ones(spec.way_count))
        counts = _largest_remainder(
            proportions * spec.total_candidate_unlabeled, spec.total_candidate_unlabeled
        )
        counts = _fit_to_capacity(counts, capacity, spec.total_candidate_unlabeled)
        for local, (cid, cnt) in enumerate(zip(candidates, counts)):
            drawn = _draw(rng, split.unlabeled[cid], int(cnt),
                          f"unlabeled samples of class {cid}")
            unlabeled_idx.extend(drawn)
            tags.extend([local] * drawn.size)

    if spec.total_distractor > 0:
        rest = sorted(set(classes.tolist()) - set(candidates.tolist()))
        pool = (
            np.concatenate([split.unlabeled[cid] for cid in rest])
            if rest
            else np.empty(0, dtype=np.int64)
        )
        drawn = _draw(rng, pool, spec.total_distractor, "distractor samples")
        unlabeled_idx.extend(drawn)
        tags.extend([-1] * drawn.size)
    return _finish_episode(rng, ds, spec, candidates, support_idx, query_idx,
                           unlabeled_idx, tags, np.empty(0, dtype=np.int64))


def sample_episode(ds: Dataset, split: LabelSplit, spec: EpisodeSpec,
                   dataset_split: str = "train") -> Episode:
    sampler = sample_structured_episode if spec.mode == STRUCTURED else sample_uneven_episode
    return sampler(ds, split, spec, dataset_split)

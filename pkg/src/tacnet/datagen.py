"""Synthetic Gaussian-mixture datasets with a controllable difficulty knob.

Each class is an isotropic Gaussian around a seeded random center; the ratio
class_center_scale / within_class_std sets how separable tasks are.  Classes
are split disjointly into train/validation/test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .episodes import SPLITS, Dataset
from .errors import InvalidSpecError


@dataclass(frozen=True)
class SyntheticSpec:
    class_count: int = 40
    samples_per_class: int = 100
    input_dim: int = 16
    class_center_scale: float = 2.0
    within_class_std: float = 1.0
    seed: int = 0
    split_fractions: tuple = (0.6, 0.2, 0.2)

    def __post_init__(self):
        if min(self.class_count, self.samples_per_class, self.input_dim) < 1:
            raise InvalidSpecError("counts must be positive")
        if self.class_center_scale <= 0 or self.within_class_std < 0:
            raise InvalidSpecError("scales must be positive (std may be 0)")
        if len(self.split_fractions) != 3 or abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise InvalidSpecError("split_fractions must be 3 values summing to 1")

    @property
    def separation_ratio(self) -> float:
        return self.class_center_scale / self.within_class_std if self.within_class_std else float("inf")


def generate(spec: SyntheticSpec) -> Dataset:
    """Deterministic dataset for a spec; same seed, same bytes."""
    rng = np.random.default_rng(spec.seed)
    centers = rng.normal(0.0, spec.class_center_scale, size=(spec.class_count, spec.input_dim))
    x = np.empty((spec.class_count * spec.samples_per_class, spec.input_dim))
    y = np.repeat(np.arange(spec.class_count), spec.samples_per_class)
    for cid in range(spec.class_count):
        block = slice(cid * spec.samples_per_class, (cid + 1) * spec.samples_per_class)
        noise = rng.normal(0.0, 1.0, size=(spec.samples_per_class, spec.input_dim))
        x[block] = centers[cid] + spec.within_class_std * noise

    # Largest-remainder allocation of classes to splits, in shuffled order.
    quotas = np.asarray(spec.split_fractions) * spec.class_count
    counts = np.floor(quotas).astype(int)
    order = np.argsort(-(quotas - counts), kind="stable")
    counts[order[: spec.class_count - counts.sum()]] += 1
    shuffled = rng.permutation(spec.class_count)
    class_split = {}
    start = 0
    for split_name, cnt in zip(SPLITS, counts):
        for cid in shuffled[start : start + cnt]:
            class_split[int(cid)] = split_name
        start += cnt
    return Dataset(x=x, y=y, class_split=class_split)

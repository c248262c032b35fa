"""Deterministic seed derivation for episode streams.

Per-episode seeds depend only on (base, index), so serial and parallel
evaluation see identical episodes and aggregate identically.
"""

from __future__ import annotations

import numpy as np


def derive_seed(*parts: int) -> int:
    """Hash integer parts into one 64-bit seed, stable across runs."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])

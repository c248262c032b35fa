"""Pure-numpy reference implementations of the hot per-episode kernels.

This module is the fallback backend used when the compiled extension
(`tacnet._kernels._core`) is unavailable, and the ground truth the compiled
kernels are tested against.  All functions take C-contiguous float64 arrays
and return freshly allocated float64 arrays.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalFailureError

BACKEND_NAME = "python"

# Entries below this magnitude are treated as zero when picking the pivot
# entry for the deterministic sign convention (basis columns are unit norm,
# so a real "first nonzero" entry is far above this).
_SIGN_EPS = 1e-9


def _fix_column_signs(basis: np.ndarray) -> np.ndarray:
    """Flip columns so the first entry with magnitude > _SIGN_EPS is positive."""
    for j in range(basis.shape[1]):
        col = basis[:, j]
        nz = np.flatnonzero(np.abs(col) > _SIGN_EPS)
        if nz.size and col[nz[0]] < 0.0:
            basis[:, j] = -col
    return basis


def nullspace_basis(e: np.ndarray, rank_tol: float) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of the rows of ``e``.

    ``e`` is a k x D matrix with k < D.  The numerical rank r counts singular
    values above ``rank_tol`` times the largest one; the returned basis has
    D - r columns.
    """
    _, s, vt = np.linalg.svd(e, full_matrices=True)
    if not np.all(np.isfinite(s)):
        raise NumericalFailureError("SVD produced non-finite singular values")
    s_max = s[0] if s.size else 0.0
    rank = int(np.sum(s > rank_tol * s_max)) if s_max > 0.0 else 0
    basis = np.ascontiguousarray(vt[rank:].T)
    return _fix_column_signs(basis)


def softmax_neg_dists(x: np.ndarray, c: np.ndarray, squared: bool) -> np.ndarray:
    """Row-stochastic softmax over negated (squared) Euclidean distances.

    Returns P with P[i, j] = exp(-d(x_i, c_j)) / sum_l exp(-d(x_i, c_l)).
    """
    diff = x[:, None, :] - c[None, :, :]
    d = np.einsum("ijk,ijk->ij", diff, diff)
    if not squared:
        d = np.sqrt(d)
    if d.shape[0] == 0:
        return np.zeros_like(d)
    # Stabilized: best logit is the smallest distance.
    d_min = d.min(axis=1, keepdims=True)
    p = np.exp(d_min - d)
    p /= p.sum(axis=1, keepdims=True)
    return p


def refine_centroids_kernel(
    cent: np.ndarray,
    counts: np.ndarray,
    probs: np.ndarray,
    z: np.ndarray,
    has_distractor: bool,
) -> tuple[np.ndarray, bool]:
    """Soft-assignment centroid update.

    Regular rows n: (counts[n] * cent[n] + sum_j probs[j, n] * z[j])
                    / (counts[n] + sum_j probs[j, n]).
    When ``has_distractor``, the last row is a pure weighted mean of ``z``;
    if its soft mass is below 1e-12 the previous row is kept and the second
    return value is True.
    """
    mass = probs.sum(axis=0) if probs.shape[0] else np.zeros(cent.shape[0])
    weighted = probs.T @ z if probs.shape[0] else np.zeros_like(cent)
    new = np.empty_like(cent)
    n_regular = cent.shape[0] - 1 if has_distractor else cent.shape[0]
    for n in range(n_regular):
        new[n] = (counts[n] * cent[n] + weighted[n]) / (counts[n] + mass[n])
    kept_previous = False
    if has_distractor:
        d = cent.shape[0] - 1
        if mass[d] < 1e-12:
            new[d] = cent[d]
            kept_previous = True
        else:
            new[d] = weighted[d] / mass[d]
    return new, kept_previous

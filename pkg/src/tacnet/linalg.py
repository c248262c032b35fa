"""Dense linear-algebra primitives: SVD, null spaces, normalization.

Matrices are plain 2-D float64 numpy arrays in row-major order.  Every public
function validates finiteness on the way in and guarantees finite output.
The null-space extraction routes through the selected kernel backend
(compiled or pure-numpy); the general-purpose :func:`svd` is LAPACK-backed
with a deterministic sign canonicalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateVectorError, InvalidDimensionError, NumericalFailureError

DEFAULT_RANK_TOL = 1e-7
NORM_EPS = 1e-12

# Magnitude above which an entry counts as "nonzero" for the sign convention.
_SIGN_EPS = 1e-9


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a C-contiguous float64 2-D array, rejecting non-finite entries."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise InvalidDimensionError(f"{name} must be 2-D, got ndim={out.ndim}")
    if not np.all(np.isfinite(out)):
        raise NumericalFailureError(f"{name} contains non-finite entries")
    return out


def as_vector(v, name: str = "vector") -> np.ndarray:
    out = np.ascontiguousarray(v, dtype=np.float64)
    if out.ndim != 1:
        raise InvalidDimensionError(f"{name} must be 1-D, got ndim={out.ndim}")
    if not np.all(np.isfinite(out)):
        raise NumericalFailureError(f"{name} contains non-finite entries")
    return out


@dataclass(frozen=True)
class SvdResult:
    """Full SVD, a = u @ diag(s) @ vt, with s non-increasing and >= 0."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


def _canonicalize_signs(u: np.ndarray, s: np.ndarray, vt: np.ndarray) -> None:
    """Make each right singular vector's first nonzero entry non-negative.

    Rows of vt beyond len(s) (and u columns beyond len(s)) have no partner
    and flip alone; paired flips preserve the reconstruction.
    """
    k = s.shape[0]
    for i in range(vt.shape[0]):
        row = vt[i]
        nz = np.flatnonzero(np.abs(row) > _SIGN_EPS)
        if nz.size and row[nz[0]] < 0.0:
            vt[i] = -row
            if i < k:
                u[:, i] = -u[:, i]
    for j in range(k, u.shape[1]):
        col = u[:, j]
        nz = np.flatnonzero(np.abs(col) > _SIGN_EPS)
        if nz.size and col[nz[0]] < 0.0:
            u[:, j] = -col


def svd(a) -> SvdResult:
    """Full singular value decomposition with a deterministic sign convention."""
    mat = as_matrix(a, "svd input")
    if mat.size == 0:
        raise InvalidDimensionError("svd input must be non-empty")
    try:
        u, s, vt = np.linalg.svd(mat, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"SVD did not converge: {exc}") from exc
    u = np.ascontiguousarray(u)
    vt = np.ascontiguousarray(vt)
    _canonicalize_signs(u, s, vt)
    return SvdResult(u=u, s=s, vt=vt)


def null_space(e, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis (D x m columns) of the null space of the rows of ``e``.

    ``e`` is k x D with D > k; m = D - r where r is the number of singular
    values above ``rank_tol`` times the largest.  Every row of ``e`` is
    orthogonal to every returned column.
    """
    mat = as_matrix(e, "null_space input")
    k, dim = mat.shape
    if dim <= k:
        raise InvalidDimensionError(
            f"null space requires more columns than rows, got {k}x{dim}"
        )
    basis = _kernels.nullspace_basis(mat, float(rank_tol))
    if not np.all(np.isfinite(basis)):
        raise NumericalFailureError("null-space basis contains non-finite entries")
    return basis


def l2_normalize(v) -> np.ndarray:
    """Scale ``v`` to unit L2 norm; near-zero input is a degenerate vector."""
    vec = as_vector(v)
    norm = float(np.linalg.norm(vec))
    if norm <= NORM_EPS:
        raise DegenerateVectorError(f"cannot normalize vector with norm {norm:.3e}")
    return vec / norm


def normalize_rows(a, name: str = "matrix") -> np.ndarray:
    """Row-wise L2 normalization; any near-zero row is degenerate."""
    mat = as_matrix(a, name)
    norms = np.linalg.norm(mat, axis=1)
    bad = np.flatnonzero(norms <= NORM_EPS)
    if bad.size:
        raise DegenerateVectorError(f"{name} row {int(bad[0])} has norm {norms[bad[0]]:.3e}")
    return mat / norms[:, None]

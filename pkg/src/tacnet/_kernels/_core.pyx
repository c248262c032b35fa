# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the per-episode hot path.

Mirrors the signatures and contracts of ``tacnet._kernels.pyref``.  The
null-space routine uses a one-sided Jacobi sweep (the error matrices are
k x D with tiny k) followed by a Householder completion of the row-space
basis to its orthogonal complement.
"""

import numpy as np

from libc.math cimport exp, fabs, sqrt

from ..errors import NumericalFailureError

BACKEND_NAME = "compiled"

cdef double _SIGN_EPS = 1e-9
cdef double _JACOBI_TOL = 1e-15
cdef int _MAX_SWEEPS = 100


cdef void _fix_column_signs(double[:, ::1] basis) noexcept:
    cdef Py_ssize_t rows = basis.shape[0], cols = basis.shape[1]
    cdef Py_ssize_t i, j, t
    for j in range(cols):
        for i in range(rows):
            if fabs(basis[i, j]) > _SIGN_EPS:
                if basis[i, j] < 0.0:
                    for t in range(rows):
                        basis[t, j] = -basis[t, j]
                break


def nullspace_basis(double[:, ::1] e, double rank_tol):
    """Orthonormal null-space basis of the rows of ``e`` (k x D, k < D)."""
    cdef Py_ssize_t k = e.shape[0], dim = e.shape[1]
    cdef Py_ssize_t i, j, r, t, sweep, best
    cdef double a, b, c, tau, tt, cs, sn, bi, bj, smax, best_s, w

    # Work on B = e^T so the Jacobi rotations orthogonalize D-vectors.
    b_arr = np.empty((dim, k), dtype=np.float64)
    cdef double[:, ::1] B = b_arr
    for i in range(k):
        for j in range(dim):
            B[j, i] = e[i, j]

    cdef bint rotated
    for sweep in range(_MAX_SWEEPS + 1):
        if sweep == _MAX_SWEEPS:
            raise NumericalFailureError("Jacobi sweep did not converge")
        rotated = False
        for i in range(k - 1):
            for j in range(i + 1, k):
                a = 0.0
                b = 0.0
                c = 0.0
                for t in range(dim):
                    bi = B[t, i]
                    bj = B[t, j]
                    a += bi * bi
                    b += bj * bj
                    c += bi * bj
                if fabs(c) <= _JACOBI_TOL * sqrt(a * b):
                    continue
                tau = (b - a) / (2.0 * c)
                if tau >= 0.0:
                    tt = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    tt = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                cs = 1.0 / sqrt(1.0 + tt * tt)
                sn = cs * tt
                for t in range(dim):
                    bi = B[t, i]
                    bj = B[t, j]
                    B[t, i] = cs * bi - sn * bj
                    B[t, j] = sn * bi + cs * bj
                rotated = True
        if not rotated:
            break

    # Column norms are the singular values; order them non-increasing.
    s_arr = np.empty(k, dtype=np.float64)
    order_arr = np.empty(k, dtype=np.intp)
    cdef double[::1] s = s_arr
    cdef Py_ssize_t[::1] order = order_arr
    for i in range(k):
        a = 0.0
        for t in range(dim):
            a += B[t, i] * B[t, i]
        s[i] = sqrt(a)
        order[i] = i
    for i in range(k):
        best = i
        best_s = s[order[i]]
        for j in range(i + 1, k):
            if s[order[j]] > best_s:
                best = j
                best_s = s[order[j]]
        if best != i:
            t = order[i]
            order[i] = order[best]
            order[best] = t

    smax = s[order[0]] if k > 0 else 0.0
    r = 0
    if smax > 0.0:
        for i in range(k):
            if s[order[i]] > rank_tol * smax:
                r += 1

    out_arr = np.empty((dim, dim - r), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] U
    cdef double[:, ::1] V
    if r == 0:
        for i in range(dim):
            for j in range(dim):
                out[i, j] = 1.0 if i == j else 0.0
        return out_arr

    # Householder QR of the normalized row-space basis; the trailing columns
    # of the accumulated Q span the orthogonal complement.
    u_arr = np.empty((dim, r), dtype=np.float64)
    U = u_arr
    for j in range(r):
        a = s[order[j]]
        for t in range(dim):
            U[t, j] = B[t, order[j]] / a
    v_arr = np.zeros((r, dim), dtype=np.float64)
    V = v_arr  # reflector j lives in V[j, j:]
    for j in range(r):
        a = 0.0
        for t in range(j, dim):
            a += U[t, j] * U[t, j]
        a = sqrt(a)
        if U[j, j] > 0.0:
            a = -a
        # v = x - alpha * e1, normalized
        b = 0.0
        for t in range(j, dim):
            c = U[t, j] - (a if t == j else 0.0)
            V[j, t] = c
            b += c * c
        b = sqrt(b)
        if b > 0.0:
            for t in range(j, dim):
                V[j, t] /= b
        # Reflect the remaining columns of U.
        for i in range(j + 1, r):
            w = 0.0
            for t in range(j, dim):
                w += V[j, t] * U[t, i]
            w *= 2.0
            for t in range(j, dim):
                U[t, i] -= w * V[j, t]

    # Column t of Q is H_0 (H_1 (... H_{r-1} e_t)); keep t >= r.
    for t in range(r, dim):
        for i in range(dim):
            out[i, t - r] = 1.0 if i == t else 0.0
        for j in range(r - 1, -1, -1):
            w = 0.0
            for i in range(j, dim):
                w += V[j, i] * out[i, t - r]
            w *= 2.0
            for i in range(j, dim):
                out[i, t - r] -= w * V[j, i]

    _fix_column_signs(out)
    return out_arr


def softmax_neg_dists(double[:, ::1] x, double[:, ::1] c, bint squared):
    """Row-stochastic softmax over negated (squared) Euclidean distances."""
    cdef Py_ssize_t n = x.shape[0], k = c.shape[0], m = x.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double diff, d, dmin, total
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] row
    row_arr = np.empty(k, dtype=np.float64)
    row = row_arr
    for i in range(n):
        dmin = 0.0
        for j in range(k):
            d = 0.0
            for t in range(m):
                diff = x[i, t] - c[j, t]
                d += diff * diff
            if not squared:
                d = sqrt(d)
            row[j] = d
            if j == 0 or d < dmin:
                dmin = d
        total = 0.0
        for j in range(k):
            row[j] = exp(dmin - row[j])
            total += row[j]
        for j in range(k):
            out[i, j] = row[j] / total
    return out_arr


def refine_centroids_kernel(
    double[:, ::1] cent,
    double[::1] counts,
    double[:, ::1] probs,
    double[:, ::1] z,
    bint has_distractor,
):
    """Soft-assignment centroid update; see the pyref twin for the formulas."""
    cdef Py_ssize_t rows = cent.shape[0], dim = cent.shape[1], u = probs.shape[0]
    cdef Py_ssize_t n, j, t
    cdef double mass, w
    cdef Py_ssize_t n_regular = rows - 1 if has_distractor else rows
    out_arr = np.empty((rows, dim), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef bint kept_previous = False
    for n in range(n_regular):
        mass = 0.0
        for t in range(dim):
            out[n, t] = counts[n] * cent[n, t]
        for j in range(u):
            w = probs[j, n]
            mass += w
            for t in range(dim):
                out[n, t] += w * z[j, t]
        for t in range(dim):
            out[n, t] /= counts[n] + mass
    if has_distractor:
        n = rows - 1
        mass = 0.0
        for j in range(u):
            mass += probs[j, n]
        if mass < 1e-12:
            for t in range(dim):
                out[n, t] = cent[n, t]
            kept_previous = True
        else:
            for t in range(dim):
                out[n, t] = 0.0
            for j in range(u):
                w = probs[j, n]
                for t in range(dim):
                    out[n, t] += w * z[j, t]
            for t in range(dim):
                out[n, t] /= mass
    return out_arr, kept_previous

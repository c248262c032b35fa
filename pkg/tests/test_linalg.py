import numpy as np
import pytest

from tacnet import linalg
from tacnet.errors import (
    DegenerateVectorError,
    InvalidDimensionError,
    NumericalFailureError,
)


class TestSvd:
    def test_identity_has_unit_singular_values(self):
        r = linalg.svd(np.eye(2))
        assert np.allclose(r.s, [1.0, 1.0])

    def test_diagonal_matrix(self):
        r = linalg.svd(np.diag([3.0, 0.0]))
        assert np.allclose(r.s, [3.0, 0.0])

    def test_reconstruction_of_random_rectangular(self, rng):
        a = rng.normal(size=(4, 7))
        r = linalg.svd(a)
        recon = r.u[:, :4] @ np.diag(r.s) @ r.vt[:4]
        assert np.linalg.norm(recon - a) <= 1e-6 * np.linalg.norm(a)

    def test_singular_values_sorted_nonnegative(self, rng):
        for _ in range(20):
            m, n = rng.integers(1, 9, size=2)
            r = linalg.svd(rng.normal(size=(m, n)))
            assert np.all(np.diff(r.s) <= 0)
            assert np.all(r.s >= 0)

    def test_orthonormal_factors(self, rng):
        a = rng.normal(size=(5, 8))
        r = linalg.svd(a)
        assert np.abs(r.u.T @ r.u - np.eye(5)).max() < 1e-6
        assert np.abs(r.vt @ r.vt.T - np.eye(8)).max() < 1e-6

    def test_sign_convention_and_determinism(self, rng):
        a = rng.normal(size=(3, 6))
        r1 = linalg.svd(a)
        r2 = linalg.svd(a.copy())
        assert np.array_equal(r1.vt, r2.vt) and np.array_equal(r1.u, r2.u)
        for row in r1.vt:
            nz = np.flatnonzero(np.abs(row) > 1e-9)
            assert row[nz[0]] > 0

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(InvalidDimensionError):
            linalg.svd(np.zeros((0, 3)))
        with pytest.raises(NumericalFailureError):
            linalg.svd(np.array([[1.0, np.nan]]))


class TestNullSpace:
    def test_axis_aligned_row(self):
        e = np.array([[1.0, 0.0, 0.0]])
        m = e.shape[1] - 1
        basis = linalg.null_space(e)
        assert basis.shape == (3, m)
        assert np.abs(e @ basis).max() < 1e-12
        # spans the yz-plane: projector onto basis equals projector onto axes 2,3
        proj = basis @ basis.T
        assert np.allclose(proj, np.diag([0.0, 1.0, 1.0]), atol=1e-12)

    def test_rank_deficiency_enlarges_null_space(self):
        row = np.array([1.0, 2.0, -1.0, 0.5])
        e = np.vstack([row, row])
        basis = linalg.null_space(e)
        assert basis.shape[1] == 3  # rank 1, not 2

    def test_random_full_rank_wide(self, rng):
        e = rng.normal(size=(5, 64))
        basis = linalg.null_space(e)
        assert basis.shape[1] == 59
        # column-by-column orthogonality against each row
        for row in e:
            for j in range(basis.shape[1]):
                assert abs(row @ basis[:, j]) < 1e-5 * np.abs(e).max()

    def test_orthonormal_columns(self, rng):
        e = rng.normal(size=(4, 16))
        basis = linalg.null_space(e)
        gram = basis.T @ basis
        assert np.abs(gram - np.eye(basis.shape[1])).max() < 1e-6

    def test_dimension_error_when_not_wide(self):
        with pytest.raises(InvalidDimensionError):
            linalg.null_space(np.eye(3))

    def test_zero_matrix_gives_full_space(self):
        basis = linalg.null_space(np.zeros((2, 5)))
        assert basis.shape == (5, 5)
        assert np.allclose(basis.T @ basis, np.eye(5), atol=1e-12)

    def test_rank_property_randomized(self, rng):
        # null-space dimension equals D - numerical_rank(E) exactly
        for _ in range(1000):
            d = int(rng.integers(6, 20))
            k = int(rng.integers(1, d))
            r = int(rng.integers(1, k + 1))
            e = rng.normal(size=(k, r)) @ rng.normal(size=(r, d))
            basis = linalg.null_space(e)
            assert basis.shape[1] == d - r
            assert np.abs(e @ basis).max() <= 1e-5 * np.abs(e).max()


class TestNormalize:
    def test_three_four_five(self):
        assert np.allclose(linalg.l2_normalize([3.0, 4.0]), [0.6, 0.8])

    def test_unit_vector_unchanged(self):
        v = np.array([0.0, 1.0, 0.0])
        assert np.allclose(linalg.l2_normalize(v), v)

    def test_random_output_has_unit_norm(self, rng):
        v = rng.normal(size=64)
        out = linalg.l2_normalize(v)
        assert abs(np.linalg.norm(out) - 1.0) < 1e-9

    def test_idempotent(self, rng):
        v = rng.normal(size=16)
        once = linalg.l2_normalize(v)
        twice = linalg.l2_normalize(once)
        assert np.abs(once - twice).max() < 1e-12

    def test_degenerate_vector_raises(self):
        with pytest.raises(DegenerateVectorError):
            linalg.l2_normalize(np.zeros(4))

    def test_normalize_rows_flags_zero_row(self):
        with pytest.raises(DegenerateVectorError):
            linalg.normalize_rows(np.array([[1.0, 0.0], [0.0, 0.0]]))

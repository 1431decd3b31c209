import numpy as np
import pytest

from defect_schwarz.errors import (
    DimensionError,
    SizeGuardError,
    SpdViolationError,
    SymmetryError,
    TripletIndexError,
)
from defect_schwarz.sparse import (
    CsrMatrix,
    DenseSymmetricPencil,
    check_symmetric,
    csr_from_triplets,
    dense_generalized_eigvals,
    factorize_spd,
    solve_spd,
    spmv,
)

from conftest import random_spd


def count_below(a, m, sigma):
    """Eigenvalues of (a, m) below sigma, by Sylvester inertia of a - sigma m."""
    s = a - sigma * m
    n = s.shape[0]
    s = s.copy()
    neg = 0
    for k in range(n):
        d = s[k, k]
        if d < 0:
            neg += 1
        if d == 0:
            d = 1e-300
        s[k + 1 :, k + 1 :] -= np.outer(s[k + 1 :, k], s[k, k + 1 :]) / d
    return neg


def bisect_eigs(a, m, lo, hi, tol=1e-12):
    n = a.shape[0]
    out = []
    for k in range(n):
        a_, b_ = lo, hi
        while b_ - a_ > tol * max(1.0, abs(b_)):
            mid = 0.5 * (a_ + b_)
            if count_below(a, m, mid) > k:
                b_ = mid
            else:
                a_ = mid
        out.append(0.5 * (a_ + b_))
    return np.array(out)


class TestTriplets:
    def test_duplicates_are_summed(self):
        m = csr_from_triplets([(0, 0, 1.0), (0, 0, 2.0)], 1, 1)
        assert m.to_dense().tolist() == [[3.0]]
        assert m.nnz == 1

    def test_empty(self):
        m = csr_from_triplets([], 2, 2)
        assert m.row_offsets.tolist() == [0, 0, 0]
        assert np.all(m.to_dense() == 0)

    def test_matches_dense_accumulation(self, rng):
        n = 5
        trips = [(int(rng.integers(n)), int(rng.integers(n)), float(rng.standard_normal())) for _ in range(40)]
        dense = np.zeros((n, n))
        for i, j, v in trips:
            dense[i, j] += v
        m = csr_from_triplets(trips, n, n)
        assert np.array_equal(m.to_dense(), dense)

    def test_csr_invariants(self, rng):
        trips = [(int(rng.integers(7)), int(rng.integers(4)), 1.0) for _ in range(30)]
        m = csr_from_triplets(trips, 7, 4)
        assert m.row_offsets[0] == 0 and m.row_offsets[-1] == m.nnz
        assert np.all(np.diff(m.row_offsets) >= 0)
        for i in range(7):
            cols = m.col_indices[m.row_offsets[i] : m.row_offsets[i + 1]]
            assert np.all(np.diff(cols) > 0)

    def test_out_of_range_names_triplet(self):
        with pytest.raises(TripletIndexError) as err:
            csr_from_triplets([(0, 0, 1.0), (2, 0, 1.0)], 2, 2)
        assert err.value.position == 1 and err.value.row == 2
        assert "(2, 0)" in str(err.value)

    def test_array_input(self):
        m = csr_from_triplets((np.array([1, 0]), np.array([0, 1]), np.array([2.0, 3.0])), 2, 2)
        assert m.to_dense().tolist() == [[0.0, 3.0], [2.0, 0.0]]


class TestSpmv:
    def test_identity(self, rng):
        x = rng.standard_normal(4)
        assert np.array_equal(spmv(CsrMatrix.from_dense(np.eye(4)), x), x)

    def test_zero(self, rng):
        z = csr_from_triplets([], 3, 3)
        assert np.array_equal(spmv(z, rng.standard_normal(3)), np.zeros(3))

    def test_dense_oracle(self, rng):
        a = rng.standard_normal((6, 6)) * (rng.random((6, 6)) < 0.5)
        x = rng.standard_normal(6)
        ref = np.array([sum(a[i, j] * x[j] for j in range(6)) for i in range(6)])
        assert np.allclose(spmv(CsrMatrix.from_dense(a), x), ref, rtol=0, atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            spmv(CsrMatrix.from_dense(np.eye(3)), np.ones(2))


class TestFactorization:
    def test_scalar(self):
        f = factorize_spd(CsrMatrix.from_dense([[4.0]]))
        assert solve_spd(f, np.array([8.0])).tolist() == [2.0]

    def test_laplacian_against_inverse(self):
        n = 5
        t = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
        # closed-form inverse of the [2,-1] tridiagonal matrix
        inv = np.array([[min(i, j) * (n + 1 - max(i, j)) / (n + 1) for j in range(1, n + 1)]
                        for i in range(1, n + 1)])
        f = factorize_spd(CsrMatrix.from_dense(t))
        assert np.allclose(solve_spd(f, np.eye(n)), inv, atol=1e-13)

    def test_indefinite(self):
        with pytest.raises(SpdViolationError):
            factorize_spd(CsrMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]]))

    def test_nonsymmetric(self):
        with pytest.raises(SymmetryError):
            factorize_spd(CsrMatrix.from_dense([[2.0, 1.0], [0.0, 2.0]]))

    def test_zero_rhs_identity_and_repeatability(self, rng):
        f = factorize_spd(CsrMatrix.from_dense(np.eye(5)))
        b = rng.standard_normal(5)
        assert np.array_equal(solve_spd(f, np.zeros(5)), np.zeros(5))
        assert np.allclose(solve_spd(f, b), b)
        g = factorize_spd(CsrMatrix.from_dense(random_spd(rng, 12)))
        c = rng.standard_normal(12)
        assert np.array_equal(solve_spd(g, c), solve_spd(g, c))

    def test_dimension_mismatch(self):
        f = factorize_spd(CsrMatrix.from_dense(np.eye(3)))
        with pytest.raises(DimensionError):
            solve_spd(f, np.ones(4))

    def test_right_inverse(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 200))
            a = random_spd(rng, n)
            k = CsrMatrix.from_dense(a)
            b = rng.standard_normal(n)
            x = solve_spd(factorize_spd(k), b)
            assert np.linalg.norm(spmv(k, x) - b) <= 1e-10 * np.linalg.norm(b)

    def test_symmetry_check_sampled(self):
        a = np.eye(3)
        a[0, 2] = 1.0
        with pytest.raises(SymmetryError):
            check_symmetric(CsrMatrix.from_dense(a))


class TestGeneralizedEig:
    def test_equal_matrices(self, rng):
        a = random_spd(rng, 6)
        assert np.allclose(dense_generalized_eigvals(DenseSymmetricPencil(a, a)), 1.0, atol=1e-12)

    def test_diagonal(self):
        ev = dense_generalized_eigvals(DenseSymmetricPencil(np.diag([4.0, 1.0]), np.eye(2)))
        assert np.allclose(ev, [1.0, 4.0])

    def test_root_finding_oracle(self, rng):
        a = random_spd(rng, 8)
        m = random_spd(rng, 8)
        ev = dense_generalized_eigvals(DenseSymmetricPencil(a, m))
        ref = bisect_eigs(a, m, 0.0, 1e3)
        assert np.allclose(ev, ref, rtol=1e-9, atol=1e-9)

    def test_m_not_spd(self):
        with pytest.raises(SpdViolationError):
            dense_generalized_eigvals(DenseSymmetricPencil(np.eye(2), np.diag([1.0, -1.0])))

    def test_guard(self):
        p = DenseSymmetricPencil(np.eye(3), np.eye(3))
        with pytest.raises(SizeGuardError):
            dense_generalized_eigvals(p, limit=2)

    def test_pencil_symmetry(self):
        with pytest.raises(SymmetryError):
            DenseSymmetricPencil(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2))

"""Sparse and dense linear algebra kernels.

``CsrMatrix`` is a thin immutable CSR container; products go through
``scipy.sparse`` whose CSR mat-vec sums each row sequentially in stored
(ascending column) order, which keeps results bitwise reproducible.

SPD systems are factorized with a banded Cholesky (LAPACK ``pbtrf``).  All
matrices assembled by this package use lexicographic numbering, so the
bandwidth is one grid line and the band factor is both compact and trivially
serializable.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import (
    DimensionError,
    SizeGuardError,
    SpdViolationError,
    SymmetryError,
    TripletIndexError,
)

SYMMETRY_SAMPLES = 10_000
DENSE_EIG_LIMIT = 5000


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ("row_offsets", "col_indices", "values"):
            getattr(self, name).setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @cached_property
    def as_scipy(self) -> sp.csr_matrix:
        m = sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape, copy=False
        )
        m.has_sorted_indices = True
        return m

    def to_dense(self) -> np.ndarray:
        return self.as_scipy.toarray()

    def __matmul__(self, x):
        return spmv(self, x)

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = sp.csr_matrix(m, copy=True)
        m.sum_duplicates()
        m.sort_indices()
        return cls(
            m.shape[0],
            m.shape[1],
            m.indptr.astype(np.int64),
            m.indices.astype(np.int64),
            m.data.astype(np.float64),
        )

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=np.float64)))

    def transpose(self) -> "CsrMatrix":
        return CsrMatrix.from_scipy(self.as_scipy.T.tocsr())

    def get(self, i: int, j: int) -> float:
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        k = lo + np.searchsorted(self.col_indices[lo:hi], j)
        if k < hi and self.col_indices[k] == j:
            return float(self.values[k])
        return 0.0


def csr_from_triplets(entries, nrows: int, ncols: int) -> CsrMatrix:
    """Build a CSR matrix from ``(row, col, value)`` triplets.

    ``entries`` is either a sequence of triplets or a tuple of three equal
    length arrays ``(rows, cols, vals)``.  Duplicates are summed in input
    order, so assembling mirrored contributions in the same order yields a
    bitwise symmetric matrix.
    """
    if isinstance(entries, tuple) and len(entries) == 3 and all(
        isinstance(e, np.ndarray) for e in entries
    ):
        rows, cols, vals = entries
    else:
        entries = list(entries)
        if entries:
            rows, cols, vals = (np.asarray(c) for c in zip(*entries))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if not (len(rows) == len(cols) == len(vals)):
        raise DimensionError("triplet arrays differ in length")

    bad = (rows < 0) | (rows >= nrows) | (cols < 0) | (cols >= ncols)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise TripletIndexError(k, int(rows[k]), int(cols[k]), nrows, ncols)

    order = np.lexsort((cols, rows))  # stable: duplicates keep input order
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows):
        new = np.ones(len(rows), dtype=bool)
        new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(new)
        # sequential left-to-right sum within each duplicate run
        summed = vals[starts].copy()
        run_len = np.diff(np.append(starts, len(vals)))
        for extra in range(1, int(run_len.max())):
            has = run_len > extra
            summed[has] += vals[starts[has] + extra]
        rows, cols, vals = rows[starts], cols[starts], summed
    counts = np.bincount(rows, minlength=nrows)
    offsets = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return CsrMatrix(nrows, ncols, offsets, cols, vals)


def spmv(a: CsrMatrix, x) -> np.ndarray:
    """``y = A x`` for a vector or a block of column vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != a.ncols:
        raise DimensionError(f"spmv: matrix has {a.ncols} columns, vector has {x.shape[0]} rows")
    return a.as_scipy @ x


def check_symmetric(a: CsrMatrix, rtol: float = 1e-12, samples: int = SYMMETRY_SAMPLES, seed: int = 0):
    """Compare up to ``samples`` stored entries with their mirror images."""
    if a.nrows != a.ncols:
        raise DimensionError(f"matrix is {a.nrows}x{a.ncols}, not square")
    if a.nnz == 0:
        return
    rows = np.repeat(np.arange(a.nrows), np.diff(a.row_offsets))
    idx = np.arange(a.nnz)
    if a.nnz > samples:
        idx = np.random.default_rng(seed).choice(a.nnz, size=samples, replace=False)
    scale = np.abs(a.values).max()
    mirror = np.asarray(a.as_scipy[a.col_indices[idx], rows[idx]]).ravel()
    err = np.abs(a.values[idx] - mirror)
    if err.max() > rtol * scale:
        k = idx[int(np.argmax(err))]
        raise SymmetryError(
            f"A[{rows[k]},{a.col_indices[k]}]={a.values[k]!r} differs from its mirror "
            f"(relative error {err.max() / scale:.3e})"
        )


@dataclass(frozen=True, eq=False)
class SpdFactorization:
    """Lower banded Cholesky factor in LAPACK band storage.

    ``band[d, j]`` holds ``L[j + d, j]``.
    """

    dimension: int
    bandwidth: int
    band: np.ndarray

    def __post_init__(self):
        self.band.setflags(write=False)

    def solve(self, b) -> np.ndarray:
        return solve_spd(self, b)


def bandwidth(a: CsrMatrix) -> int:
    if a.nnz == 0:
        return 0
    rows = np.repeat(np.arange(a.nrows), np.diff(a.row_offsets))
    return int(np.abs(rows - a.col_indices).max())


def _lower_band(a: CsrMatrix, bw: int) -> np.ndarray:
    rows = np.repeat(np.arange(a.nrows), np.diff(a.row_offsets))
    keep = rows >= a.col_indices
    band = np.zeros((bw + 1, a.nrows))
    band[rows[keep] - a.col_indices[keep], a.col_indices[keep]] = a.values[keep]
    return band


def factorize_spd(a: CsrMatrix, check_symmetry: bool = True) -> SpdFactorization:
    """Cholesky-factorize a symmetric positive definite CSR matrix.

    Raises ``SpdViolationError`` on a non-positive pivot.
    """
    if a.nrows != a.ncols:
        raise DimensionError(f"matrix is {a.nrows}x{a.ncols}, not square")
    if check_symmetry:
        check_symmetric(a)
    bw = bandwidth(a)
    band = _lower_band(a, bw)
    try:
        factor = sla.cholesky_banded(band, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SpdViolationError(f"non-positive pivot in Cholesky factorization: {exc}") from exc
    except ValueError as exc:
        raise SpdViolationError(f"matrix contains non-finite entries: {exc}") from exc

    # Rayleigh-quotient spot check on one random vector
    x = np.random.default_rng(a.nrows).standard_normal(a.nrows)
    if float(x @ spmv(a, x)) <= 0.0:
        raise SpdViolationError("random Rayleigh quotient is not positive")
    return SpdFactorization(a.nrows, bw, factor)


def solve_spd(f: SpdFactorization, b) -> np.ndarray:
    """Solve ``K x = b`` with a stored factorization; ``b`` may be a block."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != f.dimension:
        raise DimensionError(f"solve: factorization has dimension {f.dimension}, rhs has {b.shape[0]} rows")
    if b.size == 0:
        return np.zeros_like(b)
    return sla.cho_solve_banded((f.band, True), b, check_finite=False)


@dataclass(frozen=True, eq=False)
class DenseSymmetricPencil:
    a_matrix: np.ndarray
    m_matrix: np.ndarray

    def __post_init__(self):
        a, m = np.asarray(self.a_matrix, float), np.asarray(self.m_matrix, float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape != m.shape:
            raise DimensionError(f"pencil shapes {a.shape} and {m.shape} are not equal and square")
        for name, x in (("a_matrix", a), ("m_matrix", m)):
            scale = max(np.abs(x).max(), np.finfo(float).tiny)
            if np.abs(x - x.T).max() > 1e-12 * scale:
                raise SymmetryError(f"{name} is not symmetric to 1e-12 relative")
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "m_matrix", m)

    @property
    def n(self) -> int:
        return self.a_matrix.shape[0]


def dense_generalized_eigvals(p: DenseSymmetricPencil, limit: int = DENSE_EIG_LIMIT) -> np.ndarray:
    """Ascending eigenvalues of ``A v = lambda M v``."""
    if p.n > limit:
        raise SizeGuardError(f"dense eigensolve of size {p.n} exceeds the guard {limit}")
    try:
        sla.cholesky(p.m_matrix, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SpdViolationError("pencil m_matrix is not positive definite") from exc
    return sla.eigh(p.a_matrix, p.m_matrix, eigvals_only=True)


def symmetrize(a: np.ndarray, rtol: float, what: str = "operator") -> np.ndarray:
    """Return ``(A + A^T) / 2`` after checking the asymmetry is below ``rtol``."""
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    asym = np.abs(a - a.T).max() / scale
    if asym > rtol:
        raise SymmetryError(f"{what} asymmetry {asym:.3e} exceeds {rtol:.1e}")
    return 0.5 * (a + a.T)


__all__ = [
    "CsrMatrix",
    "SpdFactorization",
    "DenseSymmetricPencil",
    "csr_from_triplets",
    "spmv",
    "factorize_spd",
    "solve_spd",
    "dense_generalized_eigvals",
    "check_symmetric",
    "symmetrize",
    "bandwidth",
]

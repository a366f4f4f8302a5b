"""Sparse and dense kernels: CSR storage, products, patch extraction, dense LU."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from . import kernels

PIVOT_RTOL = 1e-14


class SingularLocalSystem(ArithmeticError):
    """A dense factorization hit a pivot below tolerance.

    ``subdomain`` identifies the Vanka patch when the matrix came from one.
    """

    def __init__(self, message, subdomain=None, step=None):
        super().__init__(message)
        self.subdomain = subdomain
        self.step = step


class CSRMatrix:
    """Row-compressed square or rectangular sparse matrix.

    Column indices are sorted and unique within each row. Stored zeros are
    kept, so the pattern is structural rather than numerical.
    """

    def __init__(self, indptr, indices, data, shape):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        if len(self.indptr) != self.shape[0] + 1:
            raise ValueError("indptr length does not match row count")

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        """Sum duplicates in input order; explicit zeros survive."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        nrows, ncols = shape
        if len(rows) == 0:
            return cls(np.zeros(nrows + 1), np.zeros(0), np.zeros(0), shape)
        if rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols:
            raise IndexError("COO index out of range")
        key = rows * ncols + cols
        order = np.argsort(key, kind="stable")
        key = key[order]
        first = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        data = np.add.reduceat(vals[order], first)
        ukey = key[first]
        urows, ucols = ukey // ncols, ukey % ncols
        indptr = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(np.bincount(urows, minlength=nrows), out=indptr[1:])
        return cls(indptr, ucols, data, shape)

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=float)
        r, c = np.nonzero(dense)
        return cls.from_coo(r, c, dense[r, c], dense.shape)

    @classmethod
    def identity(cls, n):
        ar = np.arange(n)
        return cls(np.arange(n + 1), ar, np.ones(n), (n, n))

    @property
    def nnz(self):
        return len(self.data)

    def row_ids(self):
        return np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))

    def __matmul__(self, x):
        return spmv(self, x)

    def transpose(self):
        return CSRMatrix.from_coo(self.indices, self.row_ids(), self.data, self.shape[::-1])

    @property
    def T(self):
        return self.transpose()

    def to_scipy(self):
        return scipy.sparse.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_ids(), self.indices] = self.data
        return out

    def diagonal(self):
        n = min(self.shape)
        d = np.zeros(n)
        r = self.row_ids()
        on = (r == self.indices) & (r < n)
        d[r[on]] = self.data[on]
        return d

    def submatrix(self, rows, cols):
        """Sparse block in the order of the given index arrays (via scipy slicing)."""
        sub = self.to_scipy()[np.asarray(rows)][:, np.asarray(cols)].tocsr()
        sub.sort_indices()
        return CSRMatrix(sub.indptr, sub.indices, sub.data, sub.shape)

    def transpose_positions(self):
        """For every stored entry (i, j), the storage position of (j, i).

        Requires a structurally symmetric pattern.
        """
        n = self.shape[0]
        rows = self.row_ids()
        key = rows * n + self.indices
        tkey = self.indices * n + rows
        pos = np.searchsorted(key, tkey)
        if np.any(pos >= len(key)) or np.any(key[np.minimum(pos, len(key) - 1)] != tkey):
            raise ValueError("pattern is not structurally symmetric")
        return pos

    def symmetrize(self):
        """Average with the transpose on a symmetric pattern; result is exactly symmetric."""
        pos = self.transpose_positions()
        data = 0.5 * (self.data + self.data[pos])
        return CSRMatrix(self.indptr, self.indices, data, self.shape)


def spmv(M, x):
    """Sparse product M @ x through the active kernel backend."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (M.shape[1],):
        raise ValueError(f"dimension mismatch: matrix {M.shape}, vector {x.shape}")
    out = np.empty(M.shape[0])
    kernels.backend.csr_matvec(M.indptr, M.indices, M.data, x, out)
    return out


def residual(M, x, b):
    """b - M @ x in one pass."""
    out = np.empty(M.shape[0])
    kernels.backend.csr_residual(
        M.indptr, M.indices, M.data,
        np.ascontiguousarray(x, dtype=np.float64), np.ascontiguousarray(b, dtype=np.float64), out,
    )
    return out


def extract_submatrix(M, rows, cols):
    """Dense |rows| x |cols| block of M, ordered as given."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    nr, nc = M.shape
    if rows.size and (rows.min() < 0 or rows.max() >= nr):
        raise IndexError("row index out of range")
    if cols.size and (cols.min() < 0 or cols.max() >= nc):
        raise IndexError("column index out of range")
    if len(np.unique(rows)) != len(rows) or len(np.unique(cols)) != len(cols):
        raise ValueError("index sets must be unique")
    colpos = np.full(nc, -1, dtype=np.int64)
    colpos[cols] = np.arange(len(cols))
    out = np.zeros((len(rows), len(cols)))
    for k, g in enumerate(rows):
        lo, hi = M.indptr[g], M.indptr[g + 1]
        c = colpos[M.indices[lo:hi]]
        hit = c >= 0
        out[k, c[hit]] = M.data[lo:hi][hit]
    return out


@dataclass(frozen=True)
class DenseLU:
    """Packed LU factors with a LAPACK-style row-swap sequence.

    Row ``k`` was swapped with row ``piv[k]`` at elimination step ``k``; the
    strict lower triangle of ``lu`` holds L (unit diagonal), the rest U.
    """

    lu: np.ndarray
    piv: np.ndarray

    @property
    def n(self):
        return self.lu.shape[0]

    def permutation(self):
        perm = np.arange(self.n)
        for k, p in enumerate(self.piv):
            perm[[k, p]] = perm[[p, k]]
        return perm

    def factors(self):
        """Return (perm, Lo, Up) with M[perm] == Lo @ Up."""
        lo = np.tril(self.lu, -1) + np.eye(self.n)
        return self.permutation(), lo, np.triu(self.lu)


def lu_factor(M, rtol=PIVOT_RTOL, subdomain=None):
    """Partial-pivoting LU of a dense square matrix.

    Raises SingularLocalSystem if a pivot is at most ``rtol`` times the
    infinity norm of its original row.
    """
    a = np.array(M, dtype=np.float64, order="C", copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("lu_factor needs a square matrix")
    piv = np.empty(a.shape[0], dtype=np.int64)
    if a.shape[0]:
        step = kernels.backend.lu_factor_dense(a, piv, rtol)
        if step >= 0:
            where = f" in subdomain {subdomain}" if subdomain is not None else ""
            raise SingularLocalSystem(f"zero pivot at step {step}{where}", subdomain, step)
    return DenseLU(a, piv)


def _solve(f, rhs, transposed):
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != f.n:
        raise ValueError("right-hand side has the wrong length")
    if rhs.ndim == 1:
        x = rhs.copy()
        if f.n:
            kernels.backend.lu_solve_dense(f.lu, f.piv, x, transposed)
        return x
    cols = [_solve(f, rhs[:, j], transposed) for j in range(rhs.shape[1])]
    return np.stack(cols, axis=1) if cols else rhs.copy()


def lu_solve(f, rhs):
    """Solve M x = rhs with the factors of M."""
    return _solve(f, rhs, False)


def lu_solve_transposed(f, rhs):
    """Solve M^T x = rhs; with rhs = e_j this yields row j of M^{-1}."""
    return _solve(f, rhs, True)

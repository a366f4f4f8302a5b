# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: CSR products, batched patch LU and the three Vanka sweeps.

Every function mirrors one in ``_pykernels`` with the same signature. The
sweeps return ``(residual_flops, patch_flops)`` counted as the loops run. Index
arrays are int64, values float64, dense patch blocks are stored row-major and
packed back to back (offset of patch ``s`` is ``blk_ptr[s]``).
"""

import numpy as np

from libc.math cimport fabs

ctypedef long long i64


def csr_matvec(const i64[::1] indptr, const i64[::1] indices,
               const double[::1] data, const double[::1] x, double[::1] out):
    cdef Py_ssize_t i, jj, n = indptr.shape[0] - 1
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                acc += data[jj] * x[indices[jj]]
            out[i] = acc


def csr_residual(const i64[::1] indptr, const i64[::1] indices,
                 const double[::1] data, const double[::1] x,
                 const double[::1] b, double[::1] out):
    cdef Py_ssize_t i, jj, n = indptr.shape[0] - 1
    cdef double acc
    with nogil:
        for i in range(n):
            acc = b[i]
            for jj in range(indptr[i], indptr[i + 1]):
                acc -= data[jj] * x[indices[jj]]
            out[i] = acc


cdef inline int _lu_factor(double* a, i64* piv, Py_ssize_t n, double* rn,
                           double rtol) noexcept nogil:
    """In-place partial-pivoting LU of a row-major n x n block.

    Returns -1 on success, otherwise the failing elimination step.
    """
    cdef Py_ssize_t i, j, k, p
    cdef double amax, v, t
    for i in range(n):
        amax = 0.0
        for j in range(n):
            v = fabs(a[i * n + j])
            if v > amax:
                amax = v
        rn[i] = amax
    for k in range(n):
        p = k
        amax = fabs(a[k * n + k])
        for i in range(k + 1, n):
            v = fabs(a[i * n + k])
            if v > amax:
                amax = v
                p = i
        piv[k] = p
        if amax <= rtol * rn[p] or amax == 0.0:
            return <int>k
        if p != k:
            for j in range(n):
                t = a[k * n + j]
                a[k * n + j] = a[p * n + j]
                a[p * n + j] = t
            t = rn[k]
            rn[k] = rn[p]
            rn[p] = t
        t = a[k * n + k]
        for i in range(k + 1, n):
            v = a[i * n + k] / t
            a[i * n + k] = v
            if v != 0.0:
                for j in range(k + 1, n):
                    a[i * n + j] -= v * a[k * n + j]
    return -1


cdef inline void _lu_solve(const double* a, const i64* piv, Py_ssize_t n,
                           double* x) noexcept nogil:
    cdef Py_ssize_t i, j, p
    cdef double t
    for i in range(n):
        p = piv[i]
        if p != i:
            t = x[i]
            x[i] = x[p]
            x[p] = t
    for i in range(1, n):
        t = x[i]
        for j in range(i):
            t -= a[i * n + j] * x[j]
        x[i] = t
    for i in range(n - 1, -1, -1):
        t = x[i]
        for j in range(i + 1, n):
            t -= a[i * n + j] * x[j]
        x[i] = t / a[i * n + i]


cdef inline void _lu_solve_transposed(const double* a, const i64* piv,
                                      Py_ssize_t n, double* x) noexcept nogil:
    cdef Py_ssize_t i, j, p
    cdef double t
    # U^T z = x
    for i in range(n):
        t = x[i]
        for j in range(i):
            t -= a[j * n + i] * x[j]
        x[i] = t / a[i * n + i]
    # L^T w = z, unit diagonal
    for i in range(n - 1, -1, -1):
        t = x[i]
        for j in range(i + 1, n):
            t -= a[j * n + i] * x[j]
        x[i] = t
    for i in range(n - 1, -1, -1):
        p = piv[i]
        if p != i:
            t = x[i]
            x[i] = x[p]
            x[p] = t


def lu_factor_dense(double[:, ::1] a, i64[::1] piv, double rtol):
    """Factor one dense matrix in place; returns the failing step or -1."""
    cdef Py_ssize_t n = a.shape[0]
    cdef double[::1] rn = np.empty(max(n, 1))
    cdef int info
    with nogil:
        info = _lu_factor(&a[0, 0], &piv[0], n, &rn[0], rtol)
    return info


def lu_solve_dense(const double[:, ::1] a, const i64[::1] piv, double[::1] x,
                   bint transposed):
    cdef Py_ssize_t n = a.shape[0]
    with nogil:
        if transposed:
            _lu_solve_transposed(&a[0, 0], &piv[0], n, &x[0])
        else:
            _lu_solve(&a[0, 0], &piv[0], n, &x[0])


def gather_blocks(const i64[::1] indptr, const i64[::1] indices,
                  const double[::1] data, const i64[::1] sd_ptr,
                  const i64[::1] sd_dofs, const i64[::1] blk_ptr,
                  double[::1] blocks, i64[::1] pos):
    """Copy every patch matrix L_i = R_i L R_i^T into ``blocks``.

    ``pos`` is a length-n scratch array filled with -1 on entry and on exit.
    """
    cdef Py_ssize_t s, k, jj, n, off, boff, g, c
    cdef Py_ssize_t nsd = sd_ptr.shape[0] - 1
    with nogil:
        for s in range(nsd):
            off = sd_ptr[s]
            n = sd_ptr[s + 1] - off
            boff = blk_ptr[s]
            for k in range(n * n):
                blocks[boff + k] = 0.0
            for k in range(n):
                pos[sd_dofs[off + k]] = k
            for k in range(n):
                g = sd_dofs[off + k]
                for jj in range(indptr[g], indptr[g + 1]):
                    c = pos[indices[jj]]
                    if c >= 0:
                        blocks[boff + k * n + c] = data[jj]
            for k in range(n):
                pos[sd_dofs[off + k]] = -1


def factor_blocks(const i64[::1] sd_ptr, const i64[::1] blk_ptr,
                  double[::1] blocks, i64[::1] piv, double rtol):
    """LU-factor all packed patch blocks; returns the first singular patch or -1."""
    cdef Py_ssize_t s, n, off
    cdef Py_ssize_t nsd = sd_ptr.shape[0] - 1
    cdef Py_ssize_t nmax = 1
    cdef int info
    for s in range(nsd):
        nmax = max(nmax, sd_ptr[s + 1] - sd_ptr[s])
    cdef double[::1] rn = np.empty(nmax)
    cdef Py_ssize_t failed = -1
    with nogil:
        for s in range(nsd):
            off = sd_ptr[s]
            n = sd_ptr[s + 1] - off
            info = _lu_factor(&blocks[blk_ptr[s]], &piv[off], n, &rn[0], rtol)
            if info >= 0:
                failed = s
                break
    return failed


def inverse_rows(const i64[::1] sd_ptr, const i64[::1] blk_ptr,
                 const double[::1] blocks, const i64[::1] piv,
                 const i64[::1] rs_ptr, const i64[::1] rs_local,
                 const i64[::1] inv_ptr, double[::1] inv):
    """Rows of L_i^{-1} at the restricted positions, via L_i^T y = e_j."""
    cdef Py_ssize_t s, q, k, n, off, ioff
    cdef Py_ssize_t nsd = sd_ptr.shape[0] - 1
    with nogil:
        for s in range(nsd):
            off = sd_ptr[s]
            n = sd_ptr[s + 1] - off
            ioff = inv_ptr[s]
            for q in range(rs_ptr[s], rs_ptr[s + 1]):
                for k in range(n):
                    inv[ioff + k] = 0.0
                inv[ioff + rs_local[q]] = 1.0
                _lu_solve_transposed(&blocks[blk_ptr[s]], &piv[off], n, &inv[ioff])
                ioff += n


def mv_sweep(const i64[::1] indptr, const i64[::1] indices,
             const double[::1] data, const double[::1] b, double[::1] x,
             const i64[::1] sd_ptr, const i64[::1] sd_dofs,
             const i64[::1] blk_ptr, const double[::1] blocks,
             const i64[::1] piv, const i64[::1] order, double omega):
    """One multiplicative Vanka sweep; returns (residual flops, patch flops)."""
    cdef Py_ssize_t t, s, k, jj, n, off, g
    cdef Py_ssize_t nmax = 1
    cdef Py_ssize_t nsd = sd_ptr.shape[0] - 1
    cdef double r
    cdef long long flops = 0
    for s in range(nsd):
        nmax = max(nmax, sd_ptr[s + 1] - sd_ptr[s])
    cdef double[::1] w = np.empty(nmax)
    with nogil:
        for t in range(order.shape[0]):
            s = order[t]
            off = sd_ptr[s]
            n = sd_ptr[s + 1] - off
            for k in range(n):
                g = sd_dofs[off + k]
                r = b[g]
                for jj in range(indptr[g], indptr[g + 1]):
                    r -= data[jj] * x[indices[jj]]
                w[k] = r
                flops += 2 * (indptr[g + 1] - indptr[g])
            _lu_solve(&blocks[blk_ptr[s]], &piv[off], n, &w[0])
            flops += 2 * n * n - n
            for k in range(n):
                x[sd_dofs[off + k]] += omega * w[k]
            flops += 2 * n
    return 0, flops


def av_apply(const i64[::1] indptr, const i64[::1] indices,
             const double[::1] data, const double[::1] b, double[::1] x,
             const i64[::1] sd_ptr, const i64[::1] sd_dofs,
             const i64[::1] blk_ptr, const double[::1] blocks,
             const i64[::1] piv, double omega,
             double[::1] r, double[::1] delta):
    """One additive Vanka step; ``r`` and ``delta`` are length-n scratch."""
    cdef Py_ssize_t i, s, k, jj, n, off
    cdef Py_ssize_t nmax = 1
    cdef Py_ssize_t nsd = sd_ptr.shape[0] - 1
    cdef Py_ssize_t ndof = x.shape[0]
    cdef double acc
    cdef long long flops = 0
    cdef long long rflops = 2 * indptr[ndof] + ndof
    for s in range(nsd):
        nmax = max(nmax, sd_ptr[s + 1] - sd_ptr[s])
    cdef double[::1] w = np.empty(nmax)
    with nogil:
        for i in range(ndof):
            acc = b[i]
            for jj in range(indptr[i], indptr[i + 1]):
                acc -= data[jj] * x[indices[jj]]
            r[i] = acc
            delta[i] = 0.0
        for s in range(nsd):
            off = sd_ptr[s]
            n = sd_ptr[s + 1] - off
            for k in range(n):
                w[k] = r[sd_dofs[off + k]]
            _lu_solve(&blocks[blk_ptr[s]], &piv[off], n, &w[0])
            for k in range(n):
                delta[sd_dofs[off + k]] += omega * w[k]
            flops += 2 * n * n - n + 2 * n
        for i in range(ndof):
            x[i] += delta[i]
    return rflops, flops


def rav_apply(const i64[::1] indptr, const i64[::1] indices,
              const double[::1] data, const double[::1] b, double[::1] x,
              const i64[::1] sd_ptr, const i64[::1] sd_dofs,
              const i64[::1] rs_ptr, const i64[::1] rs_global,
              const i64[::1] inv_ptr, const double[::1] inv, double omega,
              double[::1] r):
    """One restricted additive Vanka step; writes to x are disjoint."""
    cdef Py_ssize_t i, s, q, k, jj, n, off, ioff
    cdef Py_ssize_t nsd = sd_ptr.shape[0] - 1
    cdef Py_ssize_t ndof = x.shape[0]
    cdef double acc
    cdef long long flops = 0
    cdef long long rflops = 2 * indptr[ndof]
    with nogil:
        for i in range(ndof):
            acc = b[i]
            for jj in range(indptr[i], indptr[i + 1]):
                acc -= data[jj] * x[indices[jj]]
            r[i] = acc
        for s in range(nsd):
            off = sd_ptr[s]
            n = sd_ptr[s + 1] - off
            ioff = inv_ptr[s]
            for q in range(rs_ptr[s], rs_ptr[s + 1]):
                acc = 0.0
                for k in range(n):
                    acc += inv[ioff + k] * r[sd_dofs[off + k]]
                x[rs_global[q]] += omega * acc
                ioff += n
                flops += 2 * n + 2
    return rflops, flops

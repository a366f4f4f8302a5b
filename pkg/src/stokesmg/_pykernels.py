"""Numpy fallback for the compiled kernels in ``_kernels.pyx``.

Same signatures and in-place semantics. Additive sweeps and the patch
factorizations are vectorized over groups of equally sized patches; the
multiplicative sweep is sequential by definition and loops in Python.
"""

import numpy as np
import scipy.linalg


def _row_ids(indptr):
    return np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))


def csr_matvec(indptr, indices, data, x, out):
    n = len(indptr) - 1
    out[:] = np.bincount(_row_ids(indptr), weights=data * x[indices], minlength=n)


def csr_residual(indptr, indices, data, x, b, out):
    n = len(indptr) - 1
    out[:] = b - np.bincount(_row_ids(indptr), weights=data * x[indices], minlength=n)


def _batch_lu(a, rtol):
    """Partial-pivoting LU over a stack of (m, n, n) matrices, in place.

    Returns (piv, fail_step) with fail_step -1 where the pivots were fine.
    """
    m, n, _ = a.shape
    ar = np.arange(m)
    piv = np.empty((m, n), dtype=np.int64)
    rn = np.abs(a).max(axis=2) if n else np.zeros((m, 0))
    fail_step = np.full(m, -1, dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(n):
            col = np.abs(a[:, k:, k])
            p = np.argmax(col, axis=1) + k
            amax = col[ar, p - k]
            piv[:, k] = p
            bad = ((amax <= rtol * rn[ar, p]) | (amax == 0.0)) & (fail_step < 0)
            fail_step[bad] = k
            swap = p != k
            if swap.any():
                s = ar[swap]
                rows = a[s, k].copy()
                a[s, k] = a[s, p[swap]]
                a[s, p[swap]] = rows
                t = rn[s, k].copy()
                rn[s, k] = rn[s, p[swap]]
                rn[s, p[swap]] = t
            a[:, k + 1:, k] /= a[:, k, k][:, None]
            a[:, k + 1:, k + 1:] -= a[:, k + 1:, k][:, :, None] * a[:, k, k + 1:][:, None, :]
    return piv, fail_step


def _batch_solve(a, piv, x, transposed=False):
    """Solve with stacked packed LU factors; x has shape (m, n) and is overwritten."""
    m, n = x.shape
    ar = np.arange(m)
    if not transposed:
        for k in range(n):
            p = piv[:, k]
            t = x[ar, k].copy()
            x[ar, k] = x[ar, p]
            x[ar, p] = t
        for i in range(1, n):
            x[:, i] -= np.einsum("mj,mj->m", a[:, i, :i], x[:, :i])
        for i in range(n - 1, -1, -1):
            x[:, i] = (x[:, i] - np.einsum("mj,mj->m", a[:, i, i + 1:], x[:, i + 1:])) / a[:, i, i]
    else:
        for i in range(n):
            x[:, i] = (x[:, i] - np.einsum("mj,mj->m", a[:, :i, i], x[:, :i])) / a[:, i, i]
        for i in range(n - 1, -1, -1):
            x[:, i] -= np.einsum("mj,mj->m", a[:, i + 1:, i], x[:, i + 1:])
        for k in range(n - 1, -1, -1):
            p = piv[:, k]
            t = x[ar, k].copy()
            x[ar, k] = x[ar, p]
            x[ar, p] = t
    return x


def lu_factor_dense(a, piv, rtol):
    stack = a[None, :, :].copy()
    p, fail_step = _batch_lu(stack, rtol)
    a[:, :] = stack[0]
    piv[:] = p[0]
    return int(fail_step[0])


def lu_solve_dense(a, piv, x, transposed):
    x[:] = _batch_solve(a[None], piv[None], x[None, :].copy(), transposed)[0]


def _groups(sd_ptr):
    sizes = np.diff(sd_ptr)
    for n in np.unique(sizes):
        yield int(n), np.flatnonzero(sizes == n)


def gather_blocks(indptr, indices, data, sd_ptr, sd_dofs, blk_ptr, blocks, pos):
    nsd = len(sd_ptr) - 1
    sizes = np.diff(sd_ptr)
    ndof = len(indptr) - 1
    blocks[:] = 0.0
    sd_of = np.repeat(np.arange(nsd), sizes)
    local = np.arange(len(sd_dofs)) - np.repeat(sd_ptr[:-1], sizes)
    # (patch, global dof) -> local position
    keys = sd_of * ndof + sd_dofs
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    rowlen = indptr[sd_dofs + 1] - indptr[sd_dofs]
    e_row = np.repeat(np.arange(len(sd_dofs)), rowlen)
    starts = np.repeat(indptr[sd_dofs] - np.cumsum(rowlen) + rowlen, rowlen)
    jj = starts + np.arange(len(e_row))
    ekeys = sd_of[e_row] * ndof + indices[jj]
    hit = np.searchsorted(skeys, ekeys)
    hit = np.minimum(hit, len(skeys) - 1)
    ok = skeys[hit] == ekeys
    e_row, jj, col = e_row[ok], jj[ok], local[order[hit[ok]]]
    s = sd_of[e_row]
    blocks[blk_ptr[s] + local[e_row] * sizes[s] + col] = data[jj]


def _group_block_index(sd_ptr, blk_ptr, idx, n):
    return blk_ptr[idx][:, None, None] + (np.arange(n)[:, None] * n + np.arange(n)[None, :])[None]


def factor_blocks(sd_ptr, blk_ptr, blocks, piv, rtol):
    failed_all = []
    for n, idx in _groups(sd_ptr):
        bi = _group_block_index(sd_ptr, blk_ptr, idx, n)
        a = blocks[bi]
        p, fail_step = _batch_lu(a, rtol)
        blocks[bi] = a
        piv[sd_ptr[idx][:, None] + np.arange(n)[None, :]] = p
        if (fail_step >= 0).any():
            failed_all.append(int(idx[fail_step >= 0].min()))
    return min(failed_all) if failed_all else -1


def inverse_rows(sd_ptr, blk_ptr, blocks, piv, rs_ptr, rs_local, inv_ptr, inv):
    nrs = np.diff(rs_ptr)
    for n, idx in _groups(sd_ptr):
        bi = _group_block_index(sd_ptr, blk_ptr, idx, n)
        a = blocks[bi]
        p = piv[sd_ptr[idx][:, None] + np.arange(n)[None, :]]
        for q in range(int(nrs[idx].max(initial=0))):
            sel = nrs[idx] > q
            if not sel.any():
                continue
            sub = idx[sel]
            e = np.zeros((len(sub), n))
            e[np.arange(len(sub)), rs_local[rs_ptr[sub] + q]] = 1.0
            y = _batch_solve(a[sel], p[sel], e, transposed=True)
            inv[(inv_ptr[sub] + q * n)[:, None] + np.arange(n)[None, :]] = y


def mv_sweep(indptr, indices, data, b, x, sd_ptr, sd_dofs, blk_ptr, blocks, piv, order, omega):
    flops = 0
    for s in order:
        off, end = sd_ptr[s], sd_ptr[s + 1]
        n = end - off
        dofs = sd_dofs[off:end]
        w = np.empty(n)
        for k, g in enumerate(dofs):
            lo, hi = indptr[g], indptr[g + 1]
            w[k] = b[g] - data[lo:hi] @ x[indices[lo:hi]]
            flops += 2 * (hi - lo)
        lu = blocks[blk_ptr[s]:blk_ptr[s] + n * n].reshape(n, n)
        w = scipy.linalg.lu_solve((lu, piv[off:end]), w, check_finite=False)
        flops += 2 * n * n - n
        x[dofs] += omega * w
        flops += 2 * n
    return 0, int(flops)


def av_apply(indptr, indices, data, b, x, sd_ptr, sd_dofs, blk_ptr, blocks, piv, omega, r, delta):
    csr_residual(indptr, indices, data, x, b, r)
    delta[:] = 0.0
    flops = 0
    for n, idx in _groups(sd_ptr):
        bi = _group_block_index(sd_ptr, blk_ptr, idx, n)
        gi = sd_ptr[idx][:, None] + np.arange(n)[None, :]
        dofs = sd_dofs[gi]
        w = _batch_solve(blocks[bi], piv[gi], r[dofs].copy())
        np.add.at(delta, dofs.ravel(), omega * w.ravel())
        flops += len(idx) * (2 * n * n - n + 2 * n)
    x += delta
    return 2 * int(indptr[-1]) + len(x), int(flops)


def rav_apply(indptr, indices, data, b, x, sd_ptr, sd_dofs, rs_ptr, rs_global, inv_ptr, inv, omega, r):
    csr_residual(indptr, indices, data, x, b, r)
    nrs = np.diff(rs_ptr)
    q_sd = np.repeat(np.arange(len(sd_ptr) - 1), nrs)
    q_rank = np.arange(len(q_sd)) - np.repeat(rs_ptr[:-1], nrs)
    sizes = np.diff(sd_ptr)
    d = np.empty(len(q_sd))
    flops = 0
    for n in np.unique(sizes[q_sd]):
        sel = np.flatnonzero(sizes[q_sd] == n)
        s = q_sd[sel]
        cols = np.arange(n)[None, :]
        rows = inv[(inv_ptr[s] + q_rank[sel] * n)[:, None] + cols]
        d[sel] = np.einsum("qk,qk->q", rows, r[sd_dofs[sd_ptr[s][:, None] + cols]])
        flops += len(sel) * (2 * int(n) + 2)
    x[rs_global] += omega * d
    return 2 * int(indptr[-1]), int(flops)

"""JIT-compiled kernels.

Numba twins of :mod:`._kernels_np`, signature-compatible function by
function.  All take raw CSR arrays (``indptr``/``indices`` int64, ``data``
float64) and compile lazily on first use with on-disk caching.
"""

from __future__ import annotations

import numpy as np
from numba import njit


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

@njit(cache=True)
def spmv(indptr, indices, data, x, n_rows):
    y = np.zeros(n_rows, dtype=np.float64)
    for i in range(n_rows):
        acc = 0.0
        for t in range(indptr[i], indptr[i + 1]):
            acc += data[t] * x[indices[t]]
        y[i] = acc
    return y


@njit(cache=True)
def spmv_t(indptr, indices, data, x, n_rows, n_cols):
    y = np.zeros(n_cols, dtype=np.float64)
    for i in range(n_rows):
        xi = x[i]
        if xi != 0.0:
            for t in range(indptr[i], indptr[i + 1]):
                y[indices[t]] += data[t] * xi
    return y


@njit(cache=True)
def spgemm(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data,
           n_rows, n_cols_out):
    # symbolic pass: per-row structural counts via a sparse-accumulator marker
    mark = np.full(n_cols_out, -1, dtype=np.int64)
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    for i in range(n_rows):
        cnt = 0
        for t in range(a_indptr[i], a_indptr[i + 1]):
            k = a_indices[t]
            for u in range(b_indptr[k], b_indptr[k + 1]):
                j = b_indices[u]
                if mark[j] != i:
                    mark[j] = i
                    cnt += 1
        indptr[i + 1] = indptr[i] + cnt
    nnz = indptr[n_rows]
    indices = np.empty(nnz, dtype=np.int64)
    data = np.empty(nnz, dtype=np.float64)
    for t in range(n_cols_out):
        mark[t] = -1
    vals = np.zeros(n_cols_out, dtype=np.float64)
    for i in range(n_rows):
        start = indptr[i]
        cnt = 0
        for t in range(a_indptr[i], a_indptr[i + 1]):
            k = a_indices[t]
            av = a_data[t]
            for u in range(b_indptr[k], b_indptr[k + 1]):
                j = b_indices[u]
                if mark[j] != i:
                    mark[j] = i
                    vals[j] = av * b_data[u]
                    indices[start + cnt] = j
                    cnt += 1
                else:
                    vals[j] += av * b_data[u]
        row = indices[start:start + cnt]
        row.sort()
        for t in range(cnt):
            data[start + t] = vals[row[t]]
    return indptr, indices, data


@njit(cache=True)
def add_scaled(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data,
               s, n_rows):
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    for i in range(n_rows):
        pa, ea = a_indptr[i], a_indptr[i + 1]
        pb, eb = b_indptr[i], b_indptr[i + 1]
        cnt = 0
        while pa < ea and pb < eb:
            ca = a_indices[pa]
            cb = b_indices[pb]
            if ca == cb:
                pa += 1
                pb += 1
            elif ca < cb:
                pa += 1
            else:
                pb += 1
            cnt += 1
        cnt += (ea - pa) + (eb - pb)
        indptr[i + 1] = indptr[i] + cnt
    nnz = indptr[n_rows]
    indices = np.empty(nnz, dtype=np.int64)
    data = np.empty(nnz, dtype=np.float64)
    for i in range(n_rows):
        pa, ea = a_indptr[i], a_indptr[i + 1]
        pb, eb = b_indptr[i], b_indptr[i + 1]
        w = indptr[i]
        while pa < ea and pb < eb:
            ca = a_indices[pa]
            cb = b_indices[pb]
            if ca == cb:
                indices[w] = ca
                data[w] = a_data[pa] + s * b_data[pb]
                pa += 1
                pb += 1
            elif ca < cb:
                indices[w] = ca
                data[w] = a_data[pa]
                pa += 1
            else:
                indices[w] = cb
                data[w] = s * b_data[pb]
                pb += 1
            w += 1
        while pa < ea:
            indices[w] = a_indices[pa]
            data[w] = a_data[pa]
            pa += 1
            w += 1
        while pb < eb:
            indices[w] = b_indices[pb]
            data[w] = s * b_data[pb]
            pb += 1
            w += 1
    return indptr, indices, data


@njit(cache=True)
def diagonal_of(indptr, indices, data, n):
    d = np.zeros(n, dtype=np.float64)
    for i in range(n):
        lo = indptr[i]
        hi = indptr[i + 1]
        while lo < hi:
            mid = (lo + hi) >> 1
            if indices[mid] < i:
                lo = mid + 1
            else:
                hi = mid
        if lo < indptr[i + 1] and indices[lo] == i:
            d[i] = data[lo]
    return d


# ---------------------------------------------------------------------------
# envelope (profile) Cholesky
# ---------------------------------------------------------------------------

@njit(cache=True)
def profile_chol_factor(fc, lptr, lval, dval, n):
    for i in range(n):
        s = lptr[i]
        fci = fc[i]
        for j in range(fci, i):
            fcj = fc[j]
            k0 = fcj if fcj > fci else fci
            oi = s + (k0 - fci)
            oj = lptr[j] + (k0 - fcj)
            acc = 0.0
            for t in range(j - k0):
                acc += lval[oi + t] * lval[oj + t]
            idx = s + j - fci
            lval[idx] = (lval[idx] - acc) / dval[j]
        acc = 0.0
        for t in range(s, s + i - fci):
            acc += lval[t] * lval[t]
        piv = dval[i] - acc
        if piv <= 0.0:
            return i
        dval[i] = np.sqrt(piv)
    return -1


@njit(cache=True)
def profile_chol_solve(fc, lptr, lval, dval, b):
    n = b.shape[0]
    x = np.empty(n, dtype=np.float64)
    for i in range(n):
        s = lptr[i]
        fci = fc[i]
        acc = b[i]
        for t in range(i - fci):
            acc -= lval[s + t] * x[fci + t]
        x[i] = acc / dval[i]
    for i in range(n - 1, -1, -1):
        s = lptr[i]
        fci = fc[i]
        x[i] /= dval[i]
        xi = x[i]
        for t in range(i - fci):
            x[fci + t] -= lval[s + t] * xi
    return x


# ---------------------------------------------------------------------------
# limited-memory incomplete Cholesky
# ---------------------------------------------------------------------------

@njit(cache=True)
def _heap_push(heap, size, v):
    heap[size] = v
    c = size
    while c > 0:
        p = (c - 1) >> 1
        if heap[p] <= heap[c]:
            break
        heap[p], heap[c] = heap[c], heap[p]
        c = p
    return size + 1


@njit(cache=True)
def _heap_pop(heap, size):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    c = 0
    while True:
        left = 2 * c + 1
        if left >= size:
            break
        m = left
        right = left + 1
        if right < size and heap[right] < heap[left]:
            m = right
        if heap[c] <= heap[m]:
            break
        heap[c], heap[m] = heap[m], heap[c]
        c = m
    return top, size


@njit(cache=True)
def ic_factor(low_indptr, low_indices, low_data, diag, rho, sigma):
    n = diag.shape[0]
    cap = 0
    for i in range(n):
        m = (low_indptr[i + 1] - low_indptr[i]) + rho
        if m > i:
            m = i
        cap += m
    lptr = np.zeros(n + 1, dtype=np.int64)
    lidx = np.empty(cap, dtype=np.int64)
    lval = np.empty(cap, dtype=np.float64)
    lrows = np.empty(cap, dtype=np.int64)
    nxt = np.empty(cap, dtype=np.int64)
    head = np.full(n, -1, dtype=np.int64)
    d = np.zeros(n, dtype=np.float64)
    vals = np.zeros(n, dtype=np.float64)
    mark = np.full(n, -1, dtype=np.int64)
    is_orig = np.full(n, -1, dtype=np.int64)
    heap = np.empty(n, dtype=np.int64)
    cand_cols = np.empty(n, dtype=np.int64)
    cand_vals = np.empty(n, dtype=np.float64)
    fill_vals = np.empty(n, dtype=np.float64)
    fill_cols = np.empty(n, dtype=np.int64)
    all_cols = np.empty(n, dtype=np.int64)
    all_vals = np.empty(n, dtype=np.float64)
    pos = 0

    for i in range(n):
        hsize = 0
        for t in range(low_indptr[i], low_indptr[i + 1]):
            k = low_indices[t]
            vals[k] = low_data[t]
            mark[k] = i
            is_orig[k] = i
            hsize = _heap_push(heap, hsize, k)
        ncand = 0
        while hsize > 0:
            k, hsize = _heap_pop(heap, hsize)
            xk = vals[k] / d[k]
            cand_cols[ncand] = k
            cand_vals[ncand] = xk
            ncand += 1
            e = head[k]
            while e != -1:
                r = lrows[e]
                if mark[r] == i:
                    vals[r] -= xk * lval[e]
                else:
                    mark[r] = i
                    vals[r] = -xk * lval[e]
                    hsize = _heap_push(heap, hsize, r)
                e = nxt[e]

        # keep all original-pattern positions plus the rho largest fills;
        # candidates pop in ascending column order, so a stable magnitude
        # sort breaks ties toward the smaller column.
        nfill = 0
        nkeep = 0
        for t in range(ncand):
            c = cand_cols[t]
            if is_orig[c] == i:
                all_cols[nkeep] = c
                all_vals[nkeep] = cand_vals[t]
                nkeep += 1
            else:
                fill_cols[nfill] = c
                fill_vals[nfill] = cand_vals[t]
                nfill += 1
        nsel = rho if rho < nfill else nfill
        if nsel > 0:
            order = np.argsort(-np.abs(fill_vals[:nfill]), kind="mergesort")
            for t in range(nsel):
                all_cols[nkeep + t] = fill_cols[order[t]]
                all_vals[nkeep + t] = fill_vals[order[t]]
        tot = nkeep + nsel
        perm = np.argsort(all_cols[:tot])
        piv = diag[i] * (1.0 + sigma)
        for t in range(tot):
            v = all_vals[perm[t]]
            piv -= v * v
        if piv <= 0.0:
            return lptr, lidx[:pos], lval[:pos], d, i
        d[i] = np.sqrt(piv)
        for t in range(tot):
            c = all_cols[perm[t]]
            lidx[pos] = c
            lval[pos] = all_vals[perm[t]]
            lrows[pos] = i
            nxt[pos] = head[c]
            head[c] = pos
            pos += 1
        lptr[i + 1] = pos

    return lptr, lidx[:pos], lval[:pos], d, -1


@njit(cache=True)
def ictri_solve(lptr, lidx, lval, d, b):
    n = b.shape[0]
    x = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = b[i]
        for t in range(lptr[i], lptr[i + 1]):
            acc -= lval[t] * x[lidx[t]]
        x[i] = acc / d[i]
    for i in range(n - 1, -1, -1):
        x[i] /= d[i]
        xi = x[i]
        for t in range(lptr[i], lptr[i + 1]):
            x[lidx[t]] -= lval[t] * xi
    return x


# ---------------------------------------------------------------------------
# assembly scatter
# ---------------------------------------------------------------------------

@njit(cache=True)
def csr_scatter_add(indptr, indices, data, dofmap, elem):
    ne, nl = dofmap.shape
    for e in range(ne):
        for a in range(nl):
            r = dofmap[e, a]
            lo0 = indptr[r]
            hi0 = indptr[r + 1]
            for b in range(nl):
                c = dofmap[e, b]
                lo = lo0
                hi = hi0
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if indices[mid] < c:
                        lo = mid + 1
                    else:
                        hi = mid
                data[lo] += elem[a, b]

"""Pure-NumPy kernels.

Reference implementations of every hot kernel, signature-compatible with the
JIT module (:mod:`._kernels_nb`).  Matrix arguments arrive as raw CSR arrays
(``indptr`` int64, ``indices`` int64, ``data`` float64) so both backends stay
interchangeable behind :mod:`._backend`.

These versions favour clarity and vectorised NumPy over raw speed; the
factorization routines fall back to per-row Python loops with vectorised
inner products.  They are correct at any size but intended for desk-scale
work and for checking the JIT backend.
"""

from __future__ import annotations

import heapq

import numpy as np


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

def spmv(indptr, indices, data, x, n_rows):
    """y = M x for CSR M."""
    counts = np.diff(indptr)
    rows = np.repeat(np.arange(n_rows, dtype=np.int64), counts)
    return np.bincount(rows, weights=data * x[indices], minlength=n_rows)


def spmv_t(indptr, indices, data, x, n_rows, n_cols):
    """y = M^T x for CSR M, without materializing the transpose."""
    counts = np.diff(indptr)
    products = data * np.repeat(x, counts)
    return np.bincount(indices, weights=products, minlength=n_cols)


def spgemm(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data,
           n_rows, n_cols_out):
    """CSR product A @ B -> (indptr, indices, data).

    Expands every scalar product a_ik * b_kj, then merges duplicates by a
    combined (row, col) key.  The structural pattern (all pairs with a stored
    a_ik and b_kj) matches the JIT backend's Gustavson pattern exactly;
    symbolic zeros are retained.
    """
    a_counts = np.diff(a_indptr)
    a_rows = np.repeat(np.arange(n_rows, dtype=np.int64), a_counts)
    b_counts = np.diff(b_indptr)

    lens = b_counts[a_indices]
    total = int(lens.sum())
    if total == 0:
        return (np.zeros(n_rows + 1, dtype=np.int64),
                np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))
    starts = b_indptr[a_indices]
    # ragged gather: for A-entry t, the slice b[starts[t] : starts[t]+lens[t]]
    offsets = np.concatenate(([0], np.cumsum(lens)))
    flat = (np.arange(total, dtype=np.int64)
            - np.repeat(offsets[:-1], lens) + np.repeat(starts, lens))
    out_rows = np.repeat(a_rows, lens)
    out_cols = b_indices[flat]
    out_vals = np.repeat(a_data, lens) * b_data[flat]

    keys = out_rows * np.int64(n_cols_out) + out_cols
    uniq, inv = np.unique(keys, return_inverse=True)
    merged = np.bincount(inv, weights=out_vals)
    rows = uniq // n_cols_out
    indices = uniq % n_cols_out
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
    return indptr, indices, merged


def add_scaled(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data,
               s, n_rows):
    """CSR sum A + s*B -> (indptr, indices, data); pattern is the union."""
    n_cols_key = np.int64(max(int(a_indices.max(initial=-1)),
                              int(b_indices.max(initial=-1))) + 1)
    a_counts = np.diff(a_indptr)
    b_counts = np.diff(b_indptr)
    a_rows = np.repeat(np.arange(n_rows, dtype=np.int64), a_counts)
    b_rows = np.repeat(np.arange(n_rows, dtype=np.int64), b_counts)
    keys = np.concatenate((a_rows * n_cols_key + a_indices,
                           b_rows * n_cols_key + b_indices))
    vals = np.concatenate((a_data, s * b_data))
    if keys.size == 0:
        return (np.zeros(n_rows + 1, dtype=np.int64),
                np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))
    uniq, inv = np.unique(keys, return_inverse=True)
    merged = np.bincount(inv, weights=vals)
    rows = uniq // n_cols_key
    indices = uniq % n_cols_key
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
    return indptr, indices, merged


def diagonal_of(indptr, indices, data, n):
    """Main diagonal of a square CSR matrix; 0 where not stored."""
    counts = np.diff(indptr)
    rows = np.repeat(np.arange(n, dtype=np.int64), counts)
    d = np.zeros(n, dtype=np.float64)
    hit = indices == rows
    d[rows[hit]] = data[hit]
    return d


# ---------------------------------------------------------------------------
# envelope (profile) Cholesky
# ---------------------------------------------------------------------------

def profile_chol_factor(fc, lptr, lval, dval, n):
    """In-place envelope Cholesky.

    Row i holds columns fc[i]..i-1 contiguously at lval[lptr[i]:lptr[i+1]],
    preloaded with the strictly-lower entries of the input; dval is preloaded
    with the diagonal.  Returns -1 on success, else the first row with a
    non-positive pivot.
    """
    for i in range(n):
        s = lptr[i]
        fci = fc[i]
        for j in range(fci, i):
            k0 = max(fci, fc[j])
            li = lval[s + (k0 - fci): s + (j - fci)]
            lj = lval[lptr[j] + (k0 - fc[j]): lptr[j] + (j - fc[j])]
            v = lval[s + j - fci] - (li @ lj if li.size else 0.0)
            lval[s + j - fci] = v / dval[j]
        row = lval[s: s + i - fci]
        piv = dval[i] - (row @ row if row.size else 0.0)
        if piv <= 0.0:
            return i
        dval[i] = np.sqrt(piv)
    return -1


def profile_chol_solve(fc, lptr, lval, dval, b):
    """Solve (L D^{1/2}) (L D^{1/2})^T x = b given the envelope factor."""
    n = b.shape[0]
    y = np.empty_like(b)
    for i in range(n):
        s = lptr[i]
        fci = fc[i]
        row = lval[s: s + i - fci]
        acc = row @ y[fci:i] if row.size else 0.0
        y[i] = (b[i] - acc) / dval[i]
    x = y  # backward sweep reuses the buffer
    for i in range(n - 1, -1, -1):
        s = lptr[i]
        fci = fc[i]
        x[i] /= dval[i]
        if i > fci:
            x[fci:i] -= lval[s: s + i - fci] * x[i]
    return x


# ---------------------------------------------------------------------------
# limited-memory incomplete Cholesky
# ---------------------------------------------------------------------------

def ic_factor(low_indptr, low_indices, low_data, diag, rho, sigma):
    """Limited-fill IC factor of an SPD matrix given as strict lower + diag.

    Each factor row keeps every original-pattern position plus at most
    ``rho`` extra fill entries (largest magnitude, ties to the smaller
    column).  ``sigma`` scales a diagonal shift: the matrix factored is
    M + sigma*diag(M).  Returns (lptr, lidx, lval, d, status); status is -1
    on success, else the first row whose pivot went non-positive.
    """
    n = diag.shape[0]
    head = [-1] * n          # column -> first stored-entry position, or -1
    nxt = []                 # stored-entry position -> next in same column
    lrows = []               # stored-entry position -> its row
    lidx_out = []
    lval_out = []
    lptr = np.zeros(n + 1, dtype=np.int64)
    d = np.zeros(n, dtype=np.float64)
    vals = np.zeros(n, dtype=np.float64)
    mark = np.full(n, -1, dtype=np.int64)

    for i in range(n):
        heap = []
        orig_start, orig_end = low_indptr[i], low_indptr[i + 1]
        for t in range(orig_start, orig_end):
            k = int(low_indices[t])
            vals[k] = low_data[t]
            mark[k] = i
            heapq.heappush(heap, k)
        cand_cols = []
        cand_vals = []
        while heap:
            k = heapq.heappop(heap)
            xk = vals[k] / d[k]
            cand_cols.append(k)
            cand_vals.append(xk)
            e = head[k]
            while e != -1:
                r = lrows[e]
                if mark[r] == i:
                    vals[r] -= xk * lval_out[e]
                else:
                    mark[r] = i
                    vals[r] = -xk * lval_out[e]
                    heapq.heappush(heap, r)
                e = nxt[e]

        origset = set(int(low_indices[t]) for t in range(orig_start, orig_end))
        fills = [(c, v) for c, v in zip(cand_cols, cand_vals)
                 if c not in origset]
        fills.sort(key=lambda cv: (-abs(cv[1]), cv[0]))
        keep = {c: v for c, v in zip(cand_cols, cand_vals) if c in origset}
        for c, v in fills[:rho]:
            keep[c] = v

        cols = sorted(keep)
        piv = diag[i] * (1.0 + sigma)
        for c in cols:
            piv -= keep[c] * keep[c]
        if piv <= 0.0:
            return (lptr, np.empty(0, dtype=np.int64),
                    np.empty(0, dtype=np.float64), d, i)
        d[i] = np.sqrt(piv)
        for c in cols:
            e = len(lidx_out)
            lidx_out.append(c)
            lval_out.append(keep[c])
            lrows.append(i)
            nxt.append(head[c])
            head[c] = e
        lptr[i + 1] = len(lidx_out)

    return (lptr, np.asarray(lidx_out, dtype=np.int64),
            np.asarray(lval_out, dtype=np.float64), d, -1)


def ictri_solve(lptr, lidx, lval, d, b):
    """Solve L L^T x = b for a strict-lower CSR factor with diagonal d."""
    n = b.shape[0]
    y = np.empty_like(b)
    for i in range(n):
        acc = b[i]
        for t in range(lptr[i], lptr[i + 1]):
            acc -= lval[t] * y[lidx[t]]
        y[i] = acc / d[i]
    x = y
    for i in range(n - 1, -1, -1):
        x[i] /= d[i]
        xi = x[i]
        for t in range(lptr[i], lptr[i + 1]):
            x[lidx[t]] -= lval[t] * xi
    return x


# ---------------------------------------------------------------------------
# assembly scatter
# ---------------------------------------------------------------------------

def csr_scatter_add(indptr, indices, data, dofmap, elem):
    """Add a constant element matrix into a prebuilt CSR pattern, in place.

    dofmap has shape (n_elems, n_ldofs); elem is (n_ldofs, n_ldofs).  Every
    (row, col) target must already exist in the pattern.
    """
    n = indptr.shape[0] - 1
    counts = np.diff(indptr)
    rows = np.repeat(np.arange(n, dtype=np.int64), counts)
    flat_keys = rows * np.int64(n) + indices
    nl = dofmap.shape[1]
    for a in range(nl):
        ra = dofmap[:, a]
        for b in range(nl):
            keys = ra * np.int64(n) + dofmap[:, b]
            pos = np.searchsorted(flat_keys, keys)
            np.add.at(data, pos, elem[a, b])

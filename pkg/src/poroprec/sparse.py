"""Compressed-row sparse matrices and their kernels.

The :class:`SparseMatrix` type stores CSR arrays with sorted, duplicate-free
column indices and validates those invariants at construction.  All heavy
operations (products, scaled sums, diagonal extraction) dispatch to the
active kernel backend; construction helpers (COO conversion, transpose,
dense round-trips) are plain NumPy.

All values are 64-bit floats; indices are 64-bit integers.
"""

from __future__ import annotations

import numpy as np

from ._backend import kernels

#: Densification guard for oracle paths (entries, not bytes).
DENSE_BUDGET = 4_000_000


class SparseMatrix:
    """Immutable CSR matrix.

    Parameters are taken over by the instance and frozen.  ``row_offsets``
    must have length ``n_rows + 1`` and end at the stored-entry count;
    ``col_indices`` must be strictly increasing within each row.
    """

    __slots__ = ("n_rows", "n_cols", "row_offsets", "col_indices", "values")

    def __init__(self, n_rows, n_cols, row_offsets, col_indices, values):
        n_rows = int(n_rows)
        n_cols = int(n_cols)
        row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        col_indices = np.ascontiguousarray(col_indices, dtype=np.int64)
        values = np.ascontiguousarray(values, dtype=np.float64)

        if row_offsets.shape != (n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if row_offsets[0] != 0 or np.any(np.diff(row_offsets) < 0):
            raise ValueError("row_offsets must be non-decreasing from 0")
        nnz = int(row_offsets[-1])
        if col_indices.shape != (nnz,) or values.shape != (nnz,):
            raise ValueError("col_indices/values length must match row_offsets[-1]")
        if nnz:
            if col_indices.min() < 0 or col_indices.max() >= n_cols:
                raise ValueError("column index out of range")
            # strictly increasing within each row <=> any non-increase happens
            # exactly at a row boundary
            bad = np.flatnonzero(np.diff(col_indices) <= 0) + 1
            if bad.size and not np.all(np.isin(bad, row_offsets)):
                raise ValueError(
                    "col_indices must be strictly increasing within each row"
                )

        self.n_rows = n_rows
        self.n_cols = n_cols
        self.row_offsets = row_offsets
        self.col_indices = col_indices
        self.values = values
        for arr in (row_offsets, col_indices, values):
            arr.setflags(write=False)

    # -- basic introspection ------------------------------------------------

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def __repr__(self):
        return (f"SparseMatrix({self.n_rows}x{self.n_cols}, "
                f"nnz={self.nnz})")

    # -- convenience method forms of the module-level operations ------------

    def spmv(self, x):
        return spmv(self, x)

    def spmv_t(self, x):
        return spmv_t(self, x)

    def diagonal_of(self):
        return diagonal_of(self)

    def to_dense(self):
        return to_dense(self)

    def transpose(self):
        return transpose(self)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def spmv(M: SparseMatrix, x) -> np.ndarray:
    """y = M x."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (M.n_cols,):
        raise ValueError(
            f"dimension mismatch: matrix is {M.n_rows}x{M.n_cols}, "
            f"vector has length {x.shape[0] if x.ndim == 1 else x.shape}"
        )
    return kernels.spmv(M.row_offsets, M.col_indices, M.values, x, M.n_rows)


def spmv_t(M: SparseMatrix, x) -> np.ndarray:
    """y = M^T x, without materializing the transpose."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (M.n_rows,):
        raise ValueError(
            f"dimension mismatch: matrix is {M.n_rows}x{M.n_cols}, "
            f"vector has length {x.shape[0] if x.ndim == 1 else x.shape}"
        )
    return kernels.spmv_t(M.row_offsets, M.col_indices, M.values, x,
                          M.n_rows, M.n_cols)


def spgemm(Ml: SparseMatrix, Mr: SparseMatrix) -> SparseMatrix:
    """Sparse product Ml @ Mr with merged duplicates.

    Symbolic zeros are retained: the output pattern is every (i, j) reachable
    through a stored pair, independent of cancellation.
    """
    if Ml.n_cols != Mr.n_rows:
        raise ValueError(
            f"dimension mismatch: {Ml.n_rows}x{Ml.n_cols} @ "
            f"{Mr.n_rows}x{Mr.n_cols}"
        )
    indptr, indices, data = kernels.spgemm(
        Ml.row_offsets, Ml.col_indices, Ml.values,
        Mr.row_offsets, Mr.col_indices, Mr.values,
        Ml.n_rows, Mr.n_cols)
    return SparseMatrix(Ml.n_rows, Mr.n_cols, indptr, indices, data)


def add_scaled(Ml: SparseMatrix, s: float, Mr: SparseMatrix) -> SparseMatrix:
    """Ml + s*Mr on the union pattern."""
    if Ml.shape != Mr.shape:
        raise ValueError(f"dimension mismatch: {Ml.shape} vs {Mr.shape}")
    indptr, indices, data = kernels.add_scaled(
        Ml.row_offsets, Ml.col_indices, Ml.values,
        Mr.row_offsets, Mr.col_indices, Mr.values,
        float(s), Ml.n_rows)
    return SparseMatrix(Ml.n_rows, Ml.n_cols, indptr, indices, data)


def diagonal_of(M: SparseMatrix) -> np.ndarray:
    """Main diagonal as a vector; 0 where the entry is not stored."""
    if M.n_rows != M.n_cols:
        raise ValueError(f"non-square input: {M.n_rows}x{M.n_cols}")
    return kernels.diagonal_of(M.row_offsets, M.col_indices, M.values,
                               M.n_rows)


def to_dense(M: SparseMatrix) -> np.ndarray:
    """Exact dense expansion, guarded by the oracle budget."""
    if M.n_rows * M.n_cols > DENSE_BUDGET:
        raise ValueError(
            f"oracle budget exceeded: {M.n_rows}x{M.n_cols} has "
            f"{M.n_rows * M.n_cols} entries > {DENSE_BUDGET}"
        )
    out = np.zeros((M.n_rows, M.n_cols))
    counts = np.diff(M.row_offsets)
    rows = np.repeat(np.arange(M.n_rows, dtype=np.int64), counts)
    out[rows, M.col_indices] = M.values
    return out


# ---------------------------------------------------------------------------
# constructors and structural helpers
# ---------------------------------------------------------------------------

def from_coo(n_rows, n_cols, rows, cols, vals) -> SparseMatrix:
    """Build a SparseMatrix from triplets, summing duplicates."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if rows.size == 0:
        return SparseMatrix(n_rows, n_cols,
                            np.zeros(n_rows + 1, dtype=np.int64),
                            np.empty(0, dtype=np.int64),
                            np.empty(0, dtype=np.float64))
    keys = rows * np.int64(n_cols) + cols
    uniq, inv = np.unique(keys, return_inverse=True)
    data = np.bincount(inv, weights=vals)
    out_rows = uniq // n_cols
    out_cols = uniq % n_cols
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(out_rows, minlength=n_rows), out=indptr[1:])
    return SparseMatrix(n_rows, n_cols, indptr, out_cols, data)


def from_dense(arr, tol: float = 0.0) -> SparseMatrix:
    """Sparsify a dense array, keeping entries with |value| > tol."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("from_dense expects a 2-D array")
    rows, cols = np.nonzero(np.abs(arr) > tol)
    return from_coo(arr.shape[0], arr.shape[1], rows, cols, arr[rows, cols])


def identity(n: int) -> SparseMatrix:
    idx = np.arange(n, dtype=np.int64)
    return SparseMatrix(n, n, np.arange(n + 1, dtype=np.int64), idx,
                        np.ones(n))


def diagonal_matrix(d) -> SparseMatrix:
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    return SparseMatrix(n, n, np.arange(n + 1, dtype=np.int64),
                        np.arange(n, dtype=np.int64), d.copy())


def transpose(M: SparseMatrix) -> SparseMatrix:
    """Explicit transpose (counting sort over columns)."""
    counts = np.diff(M.row_offsets)
    rows = np.repeat(np.arange(M.n_rows, dtype=np.int64), counts)
    order = np.argsort(M.col_indices, kind="stable")
    indptr = np.zeros(M.n_cols + 1, dtype=np.int64)
    np.cumsum(np.bincount(M.col_indices, minlength=M.n_cols), out=indptr[1:])
    return SparseMatrix(M.n_cols, M.n_rows, indptr, rows[order],
                        M.values[order])


def symmetry_gap(M: SparseMatrix) -> float:
    """max |M - M^T| over all entries (0 for an empty matrix)."""
    if M.n_rows != M.n_cols:
        raise ValueError(f"non-square input: {M.n_rows}x{M.n_cols}")
    diff = add_scaled(M, -1.0, transpose(M))
    return float(np.abs(diff.values).max()) if diff.nnz else 0.0

"""Shared builders for the test suite: random sparse operands and oracles."""

import numpy as np

from poroprec.sparse import SparseMatrix, from_dense


def rand_dense(rng, n_rows, n_cols, density=0.3):
    """Random dense matrix with roughly the requested fill fraction."""
    arr = rng.standard_normal((n_rows, n_cols))
    mask = rng.random((n_rows, n_cols)) < density
    return np.where(mask, arr, 0.0)


def rand_csr(rng, n_rows, n_cols, density=0.3) -> SparseMatrix:
    return from_dense(rand_dense(rng, n_rows, n_cols, density))


def rand_spd_dense(rng, n, density=0.4, shift=None):
    """Random dense SPD matrix with a sparse off-diagonal pattern."""
    G = rand_dense(rng, n, n, density)
    M = G @ G.T
    if shift is None:
        shift = 0.1 * n
    return M + shift * np.eye(n)


def rand_spd_csr(rng, n, density=0.4, shift=None) -> SparseMatrix:
    return from_dense(rand_spd_dense(rng, n, density, shift))


def rel_err(got, want):
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    denom = np.linalg.norm(want)
    return np.linalg.norm(got - want) / (denom if denom > 0 else 1.0)

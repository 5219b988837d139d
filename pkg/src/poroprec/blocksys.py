"""Three-field block operator and partitioned vectors.

The system operator is

    [ K    0   -Q  ] [u]
    [ 0    A   -B  ] [q]
    [ Q^T  gB^T  P ] [p]

with g = gamma = theta*dt.  K and A must be symmetric, P diagonal with
non-negative entries.  The sign convention above is fixed; the factorization
algorithms hard-code it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseMatrix, diagonal_of, spmv, spmv_t, symmetry_gap

SYM_TOL = 1e-12


class ThreeFieldSystem:
    """Validated, immutable holder of the five blocks and time scaling."""

    __slots__ = ("K", "A", "P", "Q", "B", "gamma", "theta", "dt",
                 "n_u", "n_q", "n_p")

    def __init__(self, K, A, P, Q, B, dt, theta=1.0):
        dt = float(dt)
        theta = float(theta)
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if not 0.5 <= theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")

        n_u, n_q, n_p = K.n_rows, A.n_rows, P.n_rows
        for name, blk, shape in (("K", K, (n_u, n_u)), ("A", A, (n_q, n_q)),
                                 ("P", P, (n_p, n_p)), ("Q", Q, (n_u, n_p)),
                                 ("B", B, (n_q, n_p))):
            if blk.shape != shape:
                raise ValueError(
                    f"block {name} has shape {blk.shape}, expected {shape}")

        for name, blk in (("K", K), ("A", A)):
            scale = float(np.abs(blk.values).max()) if blk.nnz else 1.0
            gap = symmetry_gap(blk)
            if gap > SYM_TOL * scale:
                raise ValueError(
                    f"block {name} is not symmetric: max asymmetry {gap:.3e} "
                    f"exceeds {SYM_TOL:.0e} * max|{name}|")

        counts = np.diff(P.row_offsets)
        rows = np.repeat(np.arange(n_p, dtype=np.int64), counts)
        off = P.col_indices != rows
        if np.any(P.values[off] != 0.0):
            raise ValueError("block P must be diagonal")
        if np.any(diagonal_of(P) < 0.0):
            raise ValueError("block P must have non-negative diagonal entries")

        self.K, self.A, self.P, self.Q, self.B = K, A, P, Q, B
        self.dt = dt
        self.theta = theta
        self.gamma = theta * dt
        self.n_u, self.n_q, self.n_p = n_u, n_q, n_p

    @property
    def n_total(self) -> int:
        return self.n_u + self.n_q + self.n_p

    def with_dt(self, dt, theta=None) -> "ThreeFieldSystem":
        """Same blocks under a new time step (blocks are dt-independent)."""
        return ThreeFieldSystem(self.K, self.A, self.P, self.Q, self.B,
                                dt, self.theta if theta is None else theta)

    def __repr__(self):
        return (f"ThreeFieldSystem(n_u={self.n_u}, n_q={self.n_q}, "
                f"n_p={self.n_p}, gamma={self.gamma:g})")


@dataclass
class BlockVector:
    """Vector partitioned by field: displacement, velocity, pressure."""

    u: np.ndarray
    q: np.ndarray
    p: np.ndarray

    @classmethod
    def zeros(cls, system: ThreeFieldSystem) -> "BlockVector":
        return cls(np.zeros(system.n_u), np.zeros(system.n_q),
                   np.zeros(system.n_p))

    @classmethod
    def from_concat(cls, system: ThreeFieldSystem, x) -> "BlockVector":
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (system.n_total,):
            raise ValueError(
                f"expected a length-{system.n_total} vector, got {x.shape}")
        n_u, n_q = system.n_u, system.n_q
        return cls(x[:n_u].copy(), x[n_u:n_u + n_q].copy(),
                   x[n_u + n_q:].copy())

    def concat(self) -> np.ndarray:
        return np.concatenate((self.u, self.q, self.p))

    def copy(self) -> "BlockVector":
        return BlockVector(self.u.copy(), self.q.copy(), self.p.copy())

    def norm(self) -> float:
        return float(np.sqrt(self.u @ self.u + self.q @ self.q
                             + self.p @ self.p))


def _check_lengths(system: ThreeFieldSystem, x: BlockVector, what: str):
    if (x.u.shape != (system.n_u,) or x.q.shape != (system.n_q,)
            or x.p.shape != (system.n_p,)):
        raise ValueError(
            f"dimension mismatch: {what} segments "
            f"({x.u.shape[0]}, {x.q.shape[0]}, {x.p.shape[0]}) do not match "
            f"system ({system.n_u}, {system.n_q}, {system.n_p})")


def apply_block_operator(system: ThreeFieldSystem,
                         x: BlockVector) -> BlockVector:
    """(Ku - Qp, Aq - Bp, Q^T u + gamma B^T q + Pp)."""
    _check_lengths(system, x, "input")
    row_u = spmv(system.K, x.u) - spmv(system.Q, x.p)
    row_q = spmv(system.A, x.q) - spmv(system.B, x.p)
    row_p = (spmv_t(system.Q, x.u) + system.gamma * spmv_t(system.B, x.q)
             + spmv(system.P, x.p))
    return BlockVector(row_u, row_q, row_p)


def block_residual(system: ThreeFieldSystem, x: BlockVector,
                   rhs: BlockVector) -> tuple[BlockVector, float]:
    """rhs - Ax and its Euclidean norm over the concatenated segments."""
    _check_lengths(system, rhs, "rhs")
    ax = apply_block_operator(system, x)
    res = BlockVector(rhs.u - ax.u, rhs.q - ax.q, rhs.p - ax.p)
    return res, res.norm()

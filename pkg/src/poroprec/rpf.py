"""Relaxed physical factorization preconditioner for the three-field system.

Setup chooses a relaxation parameter alpha from diagonal coupling
surrogates, clamps it per block against the lower bounds that keep the
augmented factors well conditioned, and factors the two augmented blocks

    K_hat = K + QQ^T / max(alpha, alpha_K)
    A_hat = A + gamma BB^T / max(alpha, alpha_A)

with a configurable inner solver per block.  Application is a fixed short
sequence of products and two inner solves; alpha itself (unclamped) scales
the vector operations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .blocksys import BlockVector, ThreeFieldSystem
from .factor import InnerSolver, cholesky_factor, diagonal_solver, ic_factor
from .sparse import SparseMatrix, add_scaled, diagonal_of, spgemm, spmv, spmv_t, transpose

_POLICIES = ("direct", "ic", "diagonal")


@dataclass
class RpfConfig:
    """Knobs for setup: relaxation margins, inner-solver policy per block.

    omega_K/omega_A (> 1) set the conditioning margin of the clamping
    bounds.  policy_K/policy_A choose the inner solver on each augmented
    block; rho_K/rho_A/rho_S are the per-row fill allowances when a policy
    is "ic".  d_k overrides the displacement-side coupling surrogate and
    alpha overrides the computed relaxation parameter (both optional).
    """

    omega_K: float = 10.0
    omega_A: float = 10.0
    policy_K: str = "direct"
    policy_A: str = "direct"
    rho_K: int = 0
    rho_A: int = 0
    rho_S: int = 0
    d_k: np.ndarray | None = None
    alpha: float | None = None
    reorder: str | None = None

    def __post_init__(self):
        if not self.omega_K > 1.0:
            raise ValueError("omega_K must exceed 1")
        if not self.omega_A > 1.0:
            raise ValueError("omega_A must exceed 1")
        for name in ("policy_K", "policy_A"):
            value = getattr(self, name)
            if value not in _POLICIES:
                raise ValueError(
                    f"{name} must be one of {_POLICIES}, got {value!r}")


class RpfOperator:
    """Factored preconditioner state produced by rpf_setup."""

    def __init__(self, system, alpha, alpha_K, alpha_A, D_K, D_A, A_tilde,
                 K_hat, A_hat, solver_K, solver_A, QQt, BBt):
        self.system = system
        self.alpha = alpha
        self.alpha_K = alpha_K
        self.alpha_A = alpha_A
        self.alpha_used_K = max(alpha, alpha_K)
        self.alpha_used_A = max(alpha, alpha_A)
        self.D_K = D_K
        self.D_A = D_A
        self.A_tilde = A_tilde
        self.K_hat = K_hat
        self.A_hat = A_hat
        self.solver_K = solver_K
        self.solver_A = solver_A
        self.gamma = system.gamma
        self._QQt = QQt
        self._BBt = BBt


def lumped_diagonal(M: SparseMatrix) -> np.ndarray:
    """Row absolute sums of M: the standard diagonal lumping.

    The lumped diagonal has the same scale as M itself, so its inverse is
    a sound stand-in for M^{-1} inside solver surrogates at any mesh
    resolution.
    """
    rowsum = np.zeros(M.n_rows)
    rows = np.repeat(np.arange(M.n_rows), np.diff(M.row_offsets))
    np.add.at(rowsum, rows, np.abs(M.values))
    return rowsum


def compute_DA(A: SparseMatrix, B: SparseMatrix):
    """Row-sum diagonal surrogate for the flux block.

    Returns (A_tilde, D_A) where A_tilde[i] = sqrt(sum_j |A_ij|) and
    D_A = diag(B^T A_tilde^{-1} B).  A row of A with no entries makes the
    surrogate singular and is reported as invalid input.

    The square root makes this vector a device for estimating the
    relaxation parameter, not an approximation of A: use
    ``lumped_diagonal`` when a stand-in for A itself is needed.
    """
    if A.n_rows != A.n_cols:
        raise ValueError("non-square input: A")
    if B.n_rows != A.n_rows:
        raise ValueError("dimension mismatch: B rows must match A")
    rowsum = lumped_diagonal(A)
    if np.any(rowsum <= 0.0):
        idx = int(np.argmin(rowsum > 0.0))
        raise ValueError(f"invalid input: zero row in A at index {idx}")
    a_tilde = np.sqrt(rowsum)
    b_rows = np.repeat(np.arange(B.n_rows), np.diff(B.row_offsets))
    D_A = np.zeros(B.n_cols)
    np.add.at(D_A, B.col_indices, B.values ** 2 / a_tilde[b_rows])
    return a_tilde, D_A


def compute_DK(K: SparseMatrix, Q: SparseMatrix):
    """Jacobi-style diagonal surrogate diag(Q^T diag(K)^{-1} Q)."""
    if K.n_rows != K.n_cols:
        raise ValueError("non-square input: K")
    if Q.n_rows != K.n_rows:
        raise ValueError("dimension mismatch: Q rows must match K")
    diag_K = diagonal_of(K)
    if np.any(diag_K <= 0.0):
        idx = int(np.argmin(diag_K > 0.0))
        raise ValueError(
            f"invalid input: non-positive diagonal in K at index {idx}")
    rows = np.repeat(np.arange(Q.n_rows), np.diff(Q.row_offsets))
    D_K = np.zeros(Q.n_cols)
    np.add.at(D_K, Q.col_indices, Q.values ** 2 / diag_K[rows])
    return D_K


def compute_alpha(D_K, D_A, gamma: float) -> float:
    """Balanced relaxation parameter from the two coupling surrogates."""
    D_K = np.asarray(D_K, dtype=np.float64)
    D_A = np.asarray(D_A, dtype=np.float64)
    if D_K.shape != D_A.shape or D_K.ndim != 1 or D_K.size == 0:
        raise ValueError("dimension mismatch: surrogate diagonals")
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    n_p = D_K.size
    return float(math.sqrt(gamma) / n_p * np.sum(np.sqrt(D_K * D_A)))


def compute_alpha_bounds(D_K, D_A, gamma: float, cfg: RpfConfig):
    """Per-block clamping thresholds (alpha_K, alpha_A)."""
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    alpha_K = float(np.max(D_K) / (cfg.omega_K - 1.0))
    alpha_A = float(gamma * np.max(D_A) / (cfg.omega_A - 1.0))
    return alpha_K, alpha_A


def _build_inner_solver(M: SparseMatrix, policy: str, rho: int,
                        reorder, side: str) -> InnerSolver:
    try:
        if policy == "direct":
            return cholesky_factor(M, reorder=reorder)
        if policy == "ic":
            return ic_factor(M, rho, reorder=reorder)
        return diagonal_solver(diagonal_of(M))
    except ValueError as exc:
        raise ValueError(f"{side} inner factorization failed: {exc}") from exc


def rpf_setup(system: ThreeFieldSystem, cfg: RpfConfig | None = None,
              factor_K: bool = True, factor_A: bool = True) -> RpfOperator:
    """Compute alpha, assemble both augmented blocks, factor per policy.

    factor_K/factor_A skip the expensive inner factorization for a block
    whose solves are routed elsewhere (the augmented matrix itself is still
    assembled).
    """
    cfg = cfg if cfg is not None else RpfConfig()
    A_tilde, D_A = compute_DA(system.A, system.B)
    D_K = cfg.d_k if cfg.d_k is not None else compute_DK(system.K, system.Q)
    D_K = np.asarray(D_K, dtype=np.float64)
    if D_K.shape != (system.n_p,):
        raise ValueError("dimension mismatch: d_k override")
    gamma = system.gamma
    alpha = cfg.alpha if cfg.alpha is not None else compute_alpha(
        D_K, D_A, gamma)
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    alpha_K, alpha_A = compute_alpha_bounds(D_K, D_A, gamma, cfg)

    p_norm = float(np.max(np.abs(diagonal_of(system.P)))) \
        if system.n_p else 0.0
    if alpha <= p_norm:
        warnings.warn(
            "relaxation parameter alpha does not dominate the pressure "
            f"block diagonal (alpha={alpha:.6g}, max |P|={p_norm:.6g})",
            RuntimeWarning, stacklevel=2)

    Qt = transpose(system.Q)
    QQt = spgemm(system.Q, Qt)
    Bt = transpose(system.B)
    BBt = spgemm(system.B, Bt)
    K_hat = add_scaled(system.K, 1.0 / max(alpha, alpha_K), QQt)
    A_hat = add_scaled(system.A, gamma / max(alpha, alpha_A), BBt)

    solver_K = None
    solver_A = None
    if factor_K:
        solver_K = _build_inner_solver(K_hat, cfg.policy_K, cfg.rho_K,
                                       cfg.reorder, "K-side")
    if factor_A:
        solver_A = _build_inner_solver(A_hat, cfg.policy_A, cfg.rho_A,
                                       cfg.reorder, "A-side")

    return RpfOperator(system, float(alpha), alpha_K, alpha_A, D_K, D_A,
                       A_tilde, K_hat, A_hat, solver_K, solver_A, QQt, BBt)


def rpf_apply(op: RpfOperator, r: BlockVector) -> BlockVector:
    """Apply the factored preconditioner to a block residual."""
    return apply_two_solve(op, op.solver_K.apply, op.solver_A.apply, r)


def apply_two_solve(op: RpfOperator, solve_K, solve_A,
                    r: BlockVector) -> BlockVector:
    """Shared application skeleton with pluggable per-block inner solves.

    The vector operations use the unclamped alpha; clamping only enters
    through the augmented matrices the inner solves were built on.
    """
    system = op.system
    alpha = op.alpha
    inv_alpha = 1.0 / alpha

    x_u = inv_alpha * spmv(system.Q, r.p)
    x_u = r.u + x_u
    t_u = solve_K(x_u)
    y_p = spmv_t(system.Q, t_u)
    y_p = r.p - y_p
    z_q = spmv(system.B, y_p)
    z_q = r.q + inv_alpha * z_q
    t_q = solve_A(z_q)
    t_p = spmv_t(system.B, t_q)
    t_p = inv_alpha * (y_p - op.gamma * t_p)
    return BlockVector(t_u, t_q, t_p)


def write_setup_report(op: RpfOperator, path):
    """Key-value text report of the parameter choices made during setup."""
    lines = {
        "alpha": op.alpha,
        "alpha_K": op.alpha_K,
        "alpha_A": op.alpha_A,
        "alpha_used_K": op.alpha_used_K,
        "alpha_used_A": op.alpha_used_A,
        "alpha_over_alpha_K": op.alpha / op.alpha_K if op.alpha_K > 0 else float("inf"),
        "alpha_over_alpha_A": op.alpha / op.alpha_A if op.alpha_A > 0 else float("inf"),
        "gamma": op.gamma,
        "n_u": op.system.n_u,
        "n_q": op.system.n_q,
        "n_p": op.system.n_p,
    }
    with open(path, "w") as fh:
        for key, value in lines.items():
            fh.write(f"{key} = {value!r}\n")

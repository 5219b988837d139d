"""Dense spectral diagnostics for the augmented-block analysis.

Everything here materializes dense matrices, so a hard size budget keeps
the routines inside the regimes they are meant for (verification and
small-problem study, not production solves).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseMatrix, diagonal_of

DENSE_EIG_BUDGET = 1500


def _check_budget(n: int):
    if n > DENSE_EIG_BUDGET:
        raise ValueError(
            f"dense eigenvalue budget exceeded: {n} > {DENSE_EIG_BUDGET}")


def _as_dense(M) -> np.ndarray:
    if isinstance(M, SparseMatrix):
        return M.to_dense()
    return np.asarray(M, dtype=np.float64)


def generalized_eigs(Ml, Mr) -> np.ndarray:
    """Eigenvalues of the symmetric pencil (Ml, Mr), ascending.

    Mr must be symmetric positive definite; the pencil is reduced with its
    Cholesky factor to an ordinary symmetric problem.
    """
    Ml = _as_dense(Ml)
    Mr = _as_dense(Mr)
    if Ml.shape != Mr.shape or Ml.ndim != 2 or Ml.shape[0] != Ml.shape[1]:
        raise ValueError("dimension mismatch: pencil matrices")
    n = Ml.shape[0]
    _check_budget(n)
    try:
        L = np.linalg.cholesky(Mr)
    except np.linalg.LinAlgError as exc:
        raise ValueError("matrix not SPD: right pencil matrix") from exc
    X = np.linalg.solve(L, Ml)
    Y = np.linalg.solve(L, X.T).T
    Y = 0.5 * (Y + Y.T)
    return np.linalg.eigvalsh(Y)


@dataclass
class EigenReport:
    """Spectrum of a clamped-vs-unclamped augmented pencil.

    eigenvalues are complex (imaginary parts are zero for these symmetric
    pencils), sorted by real part; bound_lambda1 is the predicted largest
    eigenvalue and max_violation the largest distance by which the
    spectrum leaves [1, bound_lambda1].
    """

    eigenvalues: np.ndarray
    bound_lambda1: float
    max_violation: float


def theorem31_bound(C: SparseMatrix, F: SparseMatrix, beta: float,
                    beta_ell: float) -> EigenReport:
    """Spectrum of (C + beta FF^T, C + beta_ell FF^T) against its bound.

    The largest eigenvalue is predicted by (beta mu1 + 1)/(beta_ell mu1 + 1)
    with mu1 the largest eigenvalue of F^T C^{-1} F, and the whole spectrum
    lies in [1, that value] whenever beta >= beta_ell > 0.
    """
    if beta_ell <= 0.0 or beta < beta_ell:
        raise ValueError("weights must satisfy beta >= beta_ell > 0")
    Cd = _as_dense(C)
    Fd = _as_dense(F)
    n = Cd.shape[0]
    _check_budget(n)
    if Fd.shape[0] != n:
        raise ValueError("dimension mismatch: coupling rows")

    S_C = Fd.T @ np.linalg.solve(Cd, Fd)
    S_C = 0.5 * (S_C + S_C.T)
    mu1 = float(np.linalg.eigvalsh(S_C)[-1])
    lam1 = (beta * mu1 + 1.0) / (beta_ell * mu1 + 1.0)

    FFt = Fd @ Fd.T
    eigs = generalized_eigs(Cd + beta * FFt, Cd + beta_ell * FFt)
    below = max(0.0, 1.0 - float(eigs[0]))
    above = max(0.0, float(eigs[-1]) - lam1)
    ordered = np.sort(eigs).astype(np.complex128)
    return EigenReport(ordered, lam1, max(below, above))


def iteration_matrix_radius(ctx) -> float:
    """Spectral radius of the damped inner-sweep iteration matrix.

    Builds G = I - (beta_ell/beta) * Chat_ell^{-1} Chat densely and runs
    power iteration to a relative tolerance of 1e-8.  The dominant
    eigenvalue of G is real and non-negative for these pencils.
    """
    if ctx.C_hat is None:
        raise ValueError("context lacks C_hat")
    Chat = _as_dense(ctx.C_hat)
    n = Chat.shape[0]
    _check_budget(n)
    if ctx.C_hat_ell is not None:
        Chat_ell = _as_dense(ctx.C_hat_ell)
    else:
        Cd = _as_dense(ctx.C)
        Fd = _as_dense(ctx.F)
        Chat_ell = Cd + ctx.beta_ell * (Fd @ Fd.T)
    damping = ctx.beta_ell / ctx.beta
    G = np.eye(n) - damping * np.linalg.solve(Chat_ell, Chat)

    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam_old = 0.0
    for _ in range(100000):
        w = G @ v
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        lam = float(v @ w)
        v = w / norm_w
        if abs(lam - lam_old) <= 1e-8 * max(abs(lam), 1e-30):
            return abs(lam)
        lam_old = lam
    return abs(lam_old)


def singular_values(M) -> np.ndarray:
    """Singular values, descending, via the symmetric Gram spectrum."""
    Md = _as_dense(M)
    _check_budget(max(Md.shape))
    G = Md.T @ Md
    G = 0.5 * (G + G.T)
    w = np.linalg.eigvalsh(G)
    w = np.clip(w, 0.0, None)
    sv = np.sqrt(w)[::-1]
    return sv[: min(Md.shape)]


@dataclass
class TraceModel:
    """Dense ingredients for the relaxation-parameter trace objective.

    S_full is always P + S_K + gamma * S_A; the constructor helpers keep
    that identity by building it from the parts.
    """

    S_K: np.ndarray
    S_A: np.ndarray
    S_full: np.ndarray
    gamma: float

    def z_alpha(self, alpha: float) -> np.ndarray:
        """alpha (alpha I + S_K)^{-1} S_full (alpha I + gamma S_A)^{-1}."""
        if alpha <= 0.0:
            raise ValueError("alpha must be positive")
        n = self.S_K.shape[0]
        left = alpha * np.eye(n) + self.S_K
        right = alpha * np.eye(n) + self.gamma * self.S_A
        X = np.linalg.solve(left, self.S_full)
        return alpha * np.linalg.solve(right.T, X.T).T


def trace_model_from_parts(S_K, S_A, P_diag, gamma: float) -> TraceModel:
    """Assemble the model from dense coupling blocks and the P diagonal."""
    S_K = _as_dense(S_K)
    S_A = _as_dense(S_A)
    n = S_K.shape[0]
    _check_budget(n)
    if S_A.shape != S_K.shape:
        raise ValueError("dimension mismatch: coupling blocks")
    P_diag = np.asarray(P_diag, dtype=np.float64)
    if P_diag.ndim == 2:
        P_diag = np.diag(P_diag)
    S_full = np.diag(P_diag) + S_K + gamma * S_A
    return TraceModel(S_K, S_A, S_full, gamma)


def trace_model_from_system(system) -> TraceModel:
    """Exact dense coupling blocks Q^T K^{-1} Q and B^T A^{-1} B."""
    _check_budget(system.n_u)
    Kd = system.K.to_dense()
    Ad = system.A.to_dense()
    Qd = system.Q.to_dense()
    Bd = system.B.to_dense()
    S_K = Qd.T @ np.linalg.solve(Kd, Qd)
    S_A = Bd.T @ np.linalg.solve(Ad, Bd)
    S_K = 0.5 * (S_K + S_K.T)
    S_A = 0.5 * (S_A + S_A.T)
    return trace_model_from_parts(S_K, S_A, diagonal_of(system.P),
                                  system.gamma)


def trace_model_from_surrogates(D_K, D_A, P_diag, gamma: float) -> TraceModel:
    """Diagonal-surrogate model; the objective becomes a cheap scalar sum."""
    return trace_model_from_parts(np.diag(np.asarray(D_K, dtype=np.float64)),
                                  np.diag(np.asarray(D_A, dtype=np.float64)),
                                  P_diag, gamma)


def trace_objective_scan(tm: TraceModel, n_p: int, alpha_grid) -> np.ndarray:
    """n_p - tr[Z_alpha] for each grid point (smaller is better)."""
    alpha_grid = np.asarray(alpha_grid, dtype=np.float64)
    out = np.empty(alpha_grid.size)
    for i, a in enumerate(alpha_grid):
        out[i] = n_p - float(np.trace(tm.z_alpha(float(a))))
    return out


def write_indexed_csv(path, values, header=("index", "value")):
    """Two-column CSV (index, value) for any 1-D diagnostic series."""
    values = np.asarray(values)
    with open(path, "w") as fh:
        fh.write(f"{header[0]},{header[1]}\n")
        for k, v in enumerate(values):
            fh.write(f"{k},{float(v):.16e}\n")


def write_eigen_csv(path, report: EigenReport):
    """Three-column CSV (index, real, imag) of a computed spectrum."""
    with open(path, "w") as fh:
        fh.write("index,real,imag\n")
        for k, v in enumerate(report.eigenvalues):
            fh.write(f"{k},{v.real:.16e},{v.imag:.16e}\n")

"""Right-preconditioned Bi-CGStab with true-residual stopping.

The outer iteration solves A M^{-1} y = b and returns x = M^{-1} y, so the
stopping test runs directly on ||b - Ax||_2 / ||b||_2.  Whenever the
recursive residual signals convergence, the true residual is recomputed and
takes its place in the history; a signal the true residual fails to confirm
is counted, and three unconfirmed signals end the solve with status
"stagnation".  rho/omega magnitudes below 1e-300 end it with "breakdown".
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

BREAKDOWN_EPS = 1e-300
STAGNATION_STRIKES = 3


@dataclass
class SolveReport:
    """Outcome of one outer solve.

    residual_history[k] is the relative 2-norm residual after k iterations
    (entry 0 is the initial ratio, 1.0 for a zero initial guess); the final
    entry is always recomputed from the true residual.  total_time is
    setup_time + solve_time.
    """

    iterations: int
    residual_history: np.ndarray
    setup_time: float
    solve_time: float
    total_time: float
    status: str  # converged | max-iterations | breakdown | stagnation

    def converged(self) -> bool:
        return self.status == "converged"


def bicgstab(apply_op, apply_prec, rhs, tol: float = 1e-6,
             max_it: int = 1000, setup_time: float = 0.0):
    """Solve op(x) = rhs with zero initial guess; returns (x, SolveReport).

    apply_op and apply_prec are vector -> vector callables of matching
    dimension.  Convergence at iteration 0 requires a strict ratio < tol;
    afterwards the test is ratio <= tol on the recomputed true residual.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    t0 = time.perf_counter()
    bnorm = float(np.linalg.norm(rhs))
    n = rhs.shape[0]
    x = np.zeros(n)

    if bnorm == 0.0:
        elapsed = time.perf_counter() - t0
        report = SolveReport(0, np.array([0.0]), setup_time, elapsed,
                             setup_time + elapsed, "converged")
        return x, report

    history = [1.0]
    status = None
    iterations = 0

    if 1.0 < tol:
        status = "converged"

    if status is None:
        r = rhs.copy()
        r_hat = rhs.copy()
        rho_old = 1.0
        alpha = 1.0
        omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        strikes = 0

        for it in range(1, max_it + 1):
            rho = float(r_hat @ r)
            if abs(rho) < BREAKDOWN_EPS:
                status = "breakdown"
                break
            if it == 1:
                p = r.copy()
            else:
                beta = (rho / rho_old) * (alpha / omega)
                p = r + beta * (p - omega * v)
            ph = apply_prec(p)
            v = apply_op(ph)
            denom = float(r_hat @ v)
            if abs(denom) < BREAKDOWN_EPS:
                status = "breakdown"
                break
            alpha = rho / denom
            s = r - alpha * v
            x = x + alpha * ph

            rel_s = float(np.linalg.norm(s)) / bnorm
            if rel_s <= tol:
                iterations = it
                history.append(rel_s)
                true_rel = float(
                    np.linalg.norm(rhs - apply_op(x))) / bnorm
                history[-1] = true_rel
                if true_rel <= tol:
                    status = "converged"
                    break
                strikes += 1
                if strikes >= STAGNATION_STRIKES:
                    status = "stagnation"
                    break
                r = s
                rho_old = rho
                continue

            sh = apply_prec(s)
            t = apply_op(sh)
            tt = float(t @ t)
            omega = float(t @ s) / tt if tt > 0.0 else 0.0
            if abs(omega) < BREAKDOWN_EPS:
                iterations = it
                history.append(rel_s)
                status = "breakdown"
                break
            x = x + omega * sh
            r = s - omega * t
            iterations = it
            rel = float(np.linalg.norm(r)) / bnorm
            history.append(rel)
            if rel <= tol:
                true_rel = float(
                    np.linalg.norm(rhs - apply_op(x))) / bnorm
                history[-1] = true_rel
                if true_rel <= tol:
                    status = "converged"
                    break
                strikes += 1
                if strikes >= STAGNATION_STRIKES:
                    status = "stagnation"
                    break
                r = rhs - apply_op(x)
            rho_old = rho
        else:
            status = "max-iterations"

    # the reported final residual is always the true one
    final_true = float(np.linalg.norm(rhs - apply_op(x))) / bnorm
    history[-1] = final_true
    if status != "converged" and final_true <= tol and iterations > 0:
        status = "converged"

    elapsed = time.perf_counter() - t0
    report = SolveReport(iterations, np.asarray(history), setup_time,
                         elapsed, setup_time + elapsed, status)
    return x, report


def export_residual_history(report: SolveReport, path):
    """Two-column CSV (iteration, relative residual)."""
    with open(path, "w") as fh:
        fh.write("iteration,relative_residual\n")
        for k, rel in enumerate(report.residual_history):
            fh.write(f"{k},{rel:.16e}\n")

"""Relaxed two-solve preconditioner: surrogates, setup, application."""

import numpy as np
import pytest

from poroprec.blocksys import BlockVector, ThreeFieldSystem
from poroprec.rpf import (RpfConfig, apply_two_solve, compute_alpha,
                          compute_alpha_bounds, compute_DA, compute_DK,
                          lumped_diagonal, rpf_apply, rpf_setup,
                          write_setup_report)
from poroprec.sparse import diagonal_matrix, from_dense, to_dense

from helpers import rand_csr, rand_spd_csr, rel_err


def coupled_system(seed=0, n_u=10, n_q=8, n_p=5, dt=1.0, theta=1.0,
                   p_scale=0.0):
    rng = np.random.default_rng(seed)
    K = rand_spd_csr(rng, n_u)
    A = rand_spd_csr(rng, n_q)
    P = diagonal_matrix(p_scale * (rng.random(n_p) + 0.5))
    Q = rand_csr(rng, n_u, n_p, density=0.6)
    B = rand_csr(rng, n_q, n_p, density=0.6)
    return ThreeFieldSystem(K, A, P, Q, B, dt=dt, theta=theta)


class TestSurrogates:
    def test_lumped_diagonal_is_row_abs_sum(self):
        rng = np.random.default_rng(1)
        M = rand_csr(rng, 9, 9, density=0.4)
        want = np.abs(to_dense(M)).sum(axis=1)
        assert np.allclose(lumped_diagonal(M), want, rtol=1e-14)

    def test_flux_surrogate_hand_example(self):
        A = from_dense(np.array([[3.0, -1.0], [-1.0, 3.0]]))
        B = from_dense(np.array([[1.0], [1.0]]))
        a_tilde, D_A = compute_DA(A, B)
        assert np.allclose(a_tilde, [2.0, 2.0])
        assert np.allclose(D_A, [1.0])

    def test_flux_surrogate_dense_oracle(self):
        rng = np.random.default_rng(2)
        A = rand_spd_csr(rng, 12)
        B = rand_csr(rng, 12, 4, density=0.5)
        a_tilde, D_A = compute_DA(A, B)
        a_dense = np.sqrt(np.abs(to_dense(A)).sum(axis=1))
        Bd = to_dense(B)
        want = np.diag(Bd.T @ np.diag(1.0 / a_dense) @ Bd)
        assert np.allclose(a_tilde, a_dense, rtol=1e-14)
        assert np.allclose(D_A, want, rtol=1e-13)

    def test_flux_surrogate_rejects_empty_row(self):
        A = from_dense(np.array([[2.0, 0.0], [0.0, 0.0]]))
        B = from_dense(np.ones((2, 1)))
        with pytest.raises(ValueError, match="zero row in A at index 1"):
            compute_DA(A, B)

    def test_displacement_surrogate_hand_example(self):
        K = diagonal_matrix(np.array([2.0, 8.0]))
        Q = from_dense(np.array([[2.0], [4.0]]))
        assert np.allclose(compute_DK(K, Q), [4.0])

    def test_displacement_surrogate_dense_oracle(self):
        rng = np.random.default_rng(3)
        K = rand_spd_csr(rng, 15)
        Q = rand_csr(rng, 15, 6, density=0.5)
        diag_K = np.diag(to_dense(K))
        Qd = to_dense(Q)
        want = np.diag(Qd.T @ np.diag(1.0 / diag_K) @ Qd)
        assert np.allclose(compute_DK(K, Q), want, rtol=1e-13)

    def test_displacement_surrogate_rejects_bad_diagonal(self):
        K = from_dense(np.array([[1.0, 0.0], [0.0, -2.0]]))
        Q = from_dense(np.ones((2, 1)))
        with pytest.raises(ValueError,
                           match="non-positive diagonal in K at index 1"):
            compute_DK(K, Q)


class TestRelaxationParameter:
    def test_single_entry_value(self):
        assert compute_alpha(np.array([4.0]), np.array([1.0]),
                             gamma=9.0) == pytest.approx(6.0)

    def test_averages_over_entries(self):
        got = compute_alpha(np.array([1.0, 4.0]), np.array([4.0, 1.0]),
                            gamma=1.0)
        assert got == pytest.approx(2.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            compute_alpha(np.ones(3), np.ones(2), gamma=1.0)

    def test_non_positive_gamma_rejected(self):
        with pytest.raises(ValueError, match="gamma"):
            compute_alpha(np.ones(2), np.ones(2), gamma=0.0)

    def test_clamping_thresholds(self):
        cfg = RpfConfig(omega_K=10.0, omega_A=10.0)
        alpha_K, alpha_A = compute_alpha_bounds(
            np.array([4.0, 9.0]), np.array([1.0, 2.0]), gamma=3.0, cfg=cfg)
        assert alpha_K == pytest.approx(1.0)
        assert alpha_A == pytest.approx(2.0 / 3.0)

    def test_safety_factor_must_exceed_one(self):
        with pytest.raises(ValueError, match="omega_K"):
            RpfConfig(omega_K=1.0)

    def test_unknown_policy_rejected(self):
        with pytest.raises(ValueError, match="policy_K"):
            RpfConfig(policy_K="lu")


class TestSetup:
    def test_decoupled_system_leaves_blocks_unchanged(self):
        rng = np.random.default_rng(4)
        K = rand_spd_csr(rng, 8)
        A = rand_spd_csr(rng, 6)
        P = diagonal_matrix(np.zeros(3))
        Q = from_dense(np.zeros((8, 3)))
        B = from_dense(np.zeros((6, 3)))
        system = ThreeFieldSystem(K, A, P, Q, B, dt=1.0)
        op = rpf_setup(system, RpfConfig(alpha=1.0))
        assert np.array_equal(to_dense(op.K_hat), to_dense(K))
        assert np.array_equal(to_dense(op.A_hat), to_dense(A))

    def test_augmented_blocks_match_definition(self):
        system = coupled_system(seed=5)
        op = rpf_setup(system)
        K, A = to_dense(system.K), to_dense(system.A)
        Q, B = to_dense(system.Q), to_dense(system.B)
        want_K = K + Q @ Q.T / op.alpha_used_K
        want_A = A + system.gamma * (B @ B.T) / op.alpha_used_A
        assert rel_err(to_dense(op.K_hat), want_K) <= 1e-13
        assert rel_err(to_dense(op.A_hat), want_A) <= 1e-13

    def test_clamping_never_lowers_alpha(self):
        system = coupled_system(seed=6)
        op = rpf_setup(system)
        assert op.alpha_used_K == max(op.alpha, op.alpha_K)
        assert op.alpha_used_A == max(op.alpha, op.alpha_A)
        assert op.alpha_used_K >= op.alpha_K
        assert op.alpha_used_A >= op.alpha_A

    def test_augmentation_raises_every_eigenvalue(self):
        system = coupled_system(seed=7)
        op = rpf_setup(system)
        base = np.linalg.eigvalsh(to_dense(system.K))
        lifted = np.linalg.eigvalsh(to_dense(op.K_hat))
        assert np.all(lifted >= base - 1e-12)

    def test_warns_when_alpha_below_pressure_diagonal(self):
        system = coupled_system(seed=8, p_scale=50.0)
        with pytest.warns(RuntimeWarning, match="dominate"):
            rpf_setup(system, RpfConfig(alpha=0.5))

    def test_explicit_alpha_override(self):
        system = coupled_system(seed=9)
        op = rpf_setup(system, RpfConfig(alpha=3.5))
        assert op.alpha == 3.5

    def test_d_k_override_shape_checked(self):
        system = coupled_system(seed=10)
        with pytest.raises(ValueError, match="d_k"):
            rpf_setup(system, RpfConfig(d_k=np.ones(7)))

    def test_skipping_factorization_leaves_solver_unset(self):
        system = coupled_system(seed=11)
        op = rpf_setup(system, factor_A=False)
        assert op.solver_A is None
        assert op.solver_K is not None

    def test_setup_report_contents(self, tmp_path):
        system = coupled_system(seed=12)
        op = rpf_setup(system)
        path = tmp_path / "setup.txt"
        write_setup_report(op, path)
        text = path.read_text()
        assert f"alpha = {op.alpha!r}" in text
        assert "n_p = 5" in text
        assert "alpha_over_alpha_K" in text
        assert "gamma" in text


def dense_preconditioner_matrix(system, alpha):
    """The factored operator the application routine inverts, assembled
    densely: a block-triangular pair around a diagonal scaling, valid when
    no clamping is active."""
    K, A = to_dense(system.K), to_dense(system.A)
    Q, B = to_dense(system.Q), to_dense(system.B)
    n_u, n_q, n_p = system.n_u, system.n_q, system.n_p
    n = n_u + n_q + n_p
    M1 = np.zeros((n, n))
    M1[:n_u, :n_u] = K
    M1[:n_u, n_u + n_q:] = -Q
    M1[n_u:n_u + n_q, n_u:n_u + n_q] = alpha * np.eye(n_q)
    M1[n_u + n_q:, :n_u] = Q.T
    M1[n_u + n_q:, n_u + n_q:] = alpha * np.eye(n_p)
    M2 = np.zeros((n, n))
    M2[:n_u, :n_u] = np.eye(n_u)
    M2[n_u:n_u + n_q, n_u:n_u + n_q] = A
    M2[n_u:n_u + n_q, n_u + n_q:] = -B
    M2[n_u + n_q:, n_u:n_u + n_q] = system.gamma * B.T
    M2[n_u + n_q:, n_u + n_q:] = alpha * np.eye(n_p)
    scale = np.concatenate([np.ones(n_u), np.full(n_q + n_p, 1.0 / alpha)])
    return M1 @ (scale[:, None] * M2)


class TestApply:
    def test_zero_residual_maps_to_zero(self):
        system = coupled_system(seed=13)
        op = rpf_setup(system)
        out = rpf_apply(op, BlockVector.zeros(system))
        assert out.norm() == 0.0

    def test_application_is_linear(self):
        system = coupled_system(seed=14)
        op = rpf_setup(system)
        rng = np.random.default_rng(15)
        x = rng.standard_normal(system.n_total)
        y = rng.standard_normal(system.n_total)
        combo = rpf_apply(
            op, BlockVector.from_concat(system, 2.0 * x - 3.0 * y)).concat()
        parts = (2.0 * rpf_apply(
            op, BlockVector.from_concat(system, x)).concat()
            - 3.0 * rpf_apply(
                op, BlockVector.from_concat(system, y)).concat())
        assert rel_err(combo, parts) <= 1e-12

    def test_matches_dense_factored_inverse_small(self):
        system = coupled_system(seed=16)
        probe = rpf_setup(system, factor_K=False, factor_A=False)
        alpha = 2.0 * max(probe.alpha, probe.alpha_K, probe.alpha_A)
        op = rpf_setup(system, RpfConfig(alpha=alpha))
        rng = np.random.default_rng(17)
        r_flat = rng.standard_normal(system.n_total)
        got = rpf_apply(op, BlockVector.from_concat(system, r_flat)).concat()
        M = dense_preconditioner_matrix(system, alpha)
        want = np.linalg.solve(M, r_flat)
        assert rel_err(got, want) <= 1e-11

    def test_matches_dense_factored_inverse_assembled(self, slab10):
        system = slab10["system"]
        probe = rpf_setup(system, factor_K=False, factor_A=False)
        alpha = 2.0 * max(probe.alpha, probe.alpha_K, probe.alpha_A)
        op = rpf_setup(system, RpfConfig(alpha=alpha))
        rng = np.random.default_rng(18)
        r_flat = rng.standard_normal(system.n_total)
        got = rpf_apply(op, BlockVector.from_concat(system, r_flat)).concat()
        M = dense_preconditioner_matrix(system, alpha)
        want = np.linalg.solve(M, r_flat)
        assert rel_err(got, want) <= 1e-9

    def test_output_block_dimensions(self, slab10):
        system = slab10["system"]
        op = rpf_setup(system)
        rng = np.random.default_rng(19)
        out = rpf_apply(op, BlockVector.from_concat(
            system, rng.standard_normal(system.n_total)))
        assert out.u.size == 726
        assert out.q.size == 420
        assert out.p.size == 100

    def test_pluggable_solves_reproduce_default(self):
        system = coupled_system(seed=20)
        op = rpf_setup(system)
        K_hat_inv = np.linalg.inv(to_dense(op.K_hat))
        A_hat_inv = np.linalg.inv(to_dense(op.A_hat))
        rng = np.random.default_rng(21)
        r = BlockVector.from_concat(
            system, rng.standard_normal(system.n_total))
        via_custom = apply_two_solve(
            op, lambda v: K_hat_inv @ v, lambda v: A_hat_inv @ v, r).concat()
        via_default = rpf_apply(op, r).concat()
        assert rel_err(via_custom, via_default) <= 1e-11

"""Both kernel flavours must agree bit-for-bit on patterns, closely on values.

The JIT module and the pure-NumPy module are signature-compatible; these
tests drive both on identical raw CSR inputs inside one process, then check
the environment-variable selection in subprocesses (the choice is made at
import time).
"""

import os
import subprocess
import sys

import numpy as np
import pytest

from poroprec import _kernels_nb as nb
from poroprec import _kernels_np as knp
from poroprec.factor import extract_lower
from poroprec.sparse import SparseMatrix, to_dense

from helpers import rand_csr, rand_spd_csr

BOTH = pytest.mark.parametrize("mod", [knp, nb], ids=["numpy", "numba"])


def raw(M):
    return M.row_offsets, M.col_indices, M.values


class TestProductAgreement:
    def test_matrix_vector(self):
        rng = np.random.default_rng(0)
        M = rand_csr(rng, 13, 9, density=0.4)
        x = rng.standard_normal(9)
        a = knp.spmv(*raw(M), x, 13)
        b = nb.spmv(*raw(M), x, 13)
        assert np.allclose(a, b, rtol=1e-15, atol=1e-15)

    def test_transposed_matrix_vector(self):
        rng = np.random.default_rng(1)
        M = rand_csr(rng, 13, 9, density=0.4)
        x = rng.standard_normal(13)
        a = knp.spmv_t(*raw(M), x, 13, 9)
        b = nb.spmv_t(*raw(M), x, 13, 9)
        assert np.allclose(a, b, rtol=1e-15, atol=1e-15)

    def test_matrix_product_pattern_and_values(self):
        rng = np.random.default_rng(2)
        L = rand_csr(rng, 8, 11, density=0.3)
        R = rand_csr(rng, 11, 6, density=0.3)
        ap, ai, av = knp.spgemm(*raw(L), *raw(R), 8, 6)
        bp, bi, bv = nb.spgemm(*raw(L), *raw(R), 8, 6)
        assert np.array_equal(ap, bp)
        assert np.array_equal(ai, bi)
        assert np.allclose(av, bv, rtol=1e-14, atol=1e-16)

    def test_scaled_sum_pattern_and_values(self):
        rng = np.random.default_rng(3)
        L = rand_csr(rng, 9, 9, density=0.3)
        R = rand_csr(rng, 9, 9, density=0.3)
        ap, ai, av = knp.add_scaled(*raw(L), *raw(R), 2.5, 9)
        bp, bi, bv = nb.add_scaled(*raw(L), *raw(R), 2.5, 9)
        assert np.array_equal(ap, bp)
        assert np.array_equal(ai, bi)
        assert np.allclose(av, bv, rtol=1e-15, atol=1e-16)

    def test_diagonal_extraction(self):
        rng = np.random.default_rng(4)
        M = rand_csr(rng, 10, 10, density=0.4)
        assert np.array_equal(knp.diagonal_of(*raw(M), 10),
                              nb.diagonal_of(*raw(M), 10))


def envelope_arrays(dense):
    """Full-envelope storage (every row holds columns 0..i-1)."""
    n = dense.shape[0]
    fc = np.zeros(n, dtype=np.int64)
    lptr = np.zeros(n + 1, dtype=np.int64)
    lptr[1:] = np.cumsum(np.arange(n, dtype=np.int64))
    lval = np.concatenate([dense[i, :i] for i in range(n)]) if n else \
        np.empty(0)
    dval = np.diag(dense).copy()
    return fc, lptr, np.ascontiguousarray(lval, dtype=np.float64), dval


class TestEnvelopeCholeskyAgreement:
    def test_factor_and_solve(self):
        rng = np.random.default_rng(5)
        G = rng.standard_normal((8, 8))
        dense = G @ G.T + 8.0 * np.eye(8)
        b = rng.standard_normal(8)
        results = []
        for mod in (knp, nb):
            fc, lptr, lval, dval = envelope_arrays(dense)
            status = mod.profile_chol_factor(fc, lptr, lval, dval, 8)
            assert status == -1
            x = mod.profile_chol_solve(fc, lptr, lval, dval, b.copy())
            results.append((lval.copy(), dval.copy(), x))
        l_np, d_np, x_np = results[0]
        l_nb, d_nb, x_nb = results[1]
        assert np.allclose(l_np, l_nb, rtol=1e-13, atol=1e-15)
        assert np.allclose(d_np, d_nb, rtol=1e-13, atol=1e-15)
        assert np.allclose(x_np, x_nb, rtol=1e-12, atol=1e-14)
        assert np.allclose(dense @ x_np, b, rtol=1e-10, atol=1e-12)

    @BOTH
    def test_non_positive_pivot_reported(self, mod):
        dense = np.array([[1.0, 2.0], [2.0, 1.0]])  # indefinite
        fc, lptr, lval, dval = envelope_arrays(dense)
        assert mod.profile_chol_factor(fc, lptr, lval, dval, 2) == 1


class TestIncompleteFactorAgreement:
    @pytest.mark.parametrize("rho", [0, 2, 50])
    def test_factor_matches(self, rho):
        rng = np.random.default_rng(6)
        M = rand_spd_csr(rng, 20)
        low = extract_lower(M)
        ap, ai, av, ad, astat = knp.ic_factor(*low, rho, 0.0)
        bp, bi, bv, bd, bstat = nb.ic_factor(*low, rho, 0.0)
        assert astat == bstat == -1
        assert np.array_equal(ap, bp)
        assert np.array_equal(ai, bi)
        assert np.allclose(av, bv, rtol=1e-13, atol=1e-15)
        assert np.allclose(ad, bd, rtol=1e-13, atol=1e-15)

    def test_triangular_solve_matches(self):
        rng = np.random.default_rng(7)
        M = rand_spd_csr(rng, 15)
        low = extract_lower(M)
        lptr, lidx, lval, d, status = knp.ic_factor(*low, 3, 0.0)
        assert status == -1
        b = rng.standard_normal(15)
        x_np = knp.ictri_solve(lptr, lidx, lval, d, b.copy())
        x_nb = nb.ictri_solve(lptr, lidx, lval, d, b.copy())
        assert np.allclose(x_np, x_nb, rtol=1e-13, atol=1e-15)

    @BOTH
    def test_indefinite_input_flags_row(self, mod):
        lptr = np.array([0, 0, 1], dtype=np.int64)
        lidx = np.array([0], dtype=np.int64)
        lval = np.array([5.0])
        diag = np.array([1.0, 1.0])
        *_, status = mod.ic_factor(lptr, lidx, lval, diag, 0, 0.0)
        assert status == 1


class TestScatterAgreement:
    def test_element_accumulation(self):
        rng = np.random.default_rng(8)
        n = 7
        pattern = SparseMatrix(
            n, n,
            np.arange(0, n * n + 1, n, dtype=np.int64),
            np.tile(np.arange(n, dtype=np.int64), n),
            np.zeros(n * n))
        dofmap = np.stack([rng.permutation(n)[:3] for _ in range(4)])
        dofmap = dofmap.astype(np.int64)
        elem = rng.standard_normal((3, 3))

        outputs = []
        for mod in (knp, nb):
            data = pattern.values.copy()
            mod.csr_scatter_add(pattern.row_offsets, pattern.col_indices,
                                data, dofmap, elem)
            outputs.append(data)
        assert np.allclose(outputs[0], outputs[1], rtol=1e-15, atol=1e-16)

        oracle = np.zeros((n, n))
        for dofs in dofmap:
            oracle[np.ix_(dofs, dofs)] += elem
        got = to_dense(SparseMatrix(n, n, pattern.row_offsets,
                                    pattern.col_indices, outputs[0]))
        assert np.allclose(got, oracle, rtol=1e-14, atol=1e-15)


def run_with_backend(value, code):
    env = dict(os.environ)
    if value is None:
        env.pop("POROPREC_BACKEND", None)
    else:
        env["POROPREC_BACKEND"] = value
    return subprocess.run([sys.executable, "-c", code], env=env,
                          capture_output=True, text=True)


class TestEnvironmentSelection:
    def test_numpy_flag_selects_reference_kernels(self):
        proc = run_with_backend(
            "numpy", "import poroprec; print(poroprec.backend_name())")
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.strip() == "numpy"

    def test_default_selects_compiled_kernels(self):
        proc = run_with_backend(
            None, "import poroprec; print(poroprec.backend_name())")
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.strip() == "numba"

    def test_invalid_flag_fails_fast(self):
        proc = run_with_backend("fortran", "import poroprec")
        assert proc.returncode != 0
        assert "not a valid backend" in proc.stderr

    def test_solve_is_backend_independent(self):
        code = (
            "from poroprec.mandel import GridSpec, MaterialParams, "
            "assemble_three_field\n"
            "from poroprec.erpf import build_preconditioner\n"
            "from poroprec.krylov import bicgstab\n"
            "from poroprec.blocksys import BlockVector, apply_block_operator\n"
            "system, rhs = assemble_three_field(GridSpec(2, 1, 2), "
            "MaterialParams(), dt=900.0)\n"
            "prec = build_preconditioner(system)\n"
            "op = lambda x: apply_block_operator(system, "
            "BlockVector.from_concat(system, x)).concat()\n"
            "x, report = bicgstab(op, prec.apply, rhs.concat(), tol=1e-8)\n"
            "print(report.iterations, report.status)\n")
        runs = {}
        for backend in ("numpy", "numba"):
            proc = run_with_backend(backend, code)
            assert proc.returncode == 0, proc.stderr
            runs[backend] = proc.stdout.strip()
        assert runs["numpy"] == runs["numba"]
        assert runs["numpy"].endswith("converged")

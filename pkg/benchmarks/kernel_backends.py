"""Compare the compiled and pure-numpy kernel backends on the slab problem.

Spawns one fresh interpreter per backend (the backend is fixed at import
time by the POROPREC_BACKEND environment variable), times the hot kernels
behind the sparse and factorization layers, and prints a side-by-side
table.  The compiled column excludes JIT compilation: every kernel is
called once before timing starts.

Usage:
    python benchmarks/kernel_backends.py [--aspect 10] [--repeats 5]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _time_best(fn, repeats):
    """Best wall time over `repeats` calls (first call already warmed)."""
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_child(aspect, repeats):
    import numpy as np

    import poroprec
    from poroprec import (MaterialParams, assemble_three_field,
                          cholesky_factor, grid_for_ratio, ic_factor,
                          rpf_setup, spgemm, spmv, spmv_t, transpose)

    mat = MaterialParams()
    system, _ = assemble_three_field(grid_for_ratio(aspect), mat,
                                     dt=mat.consolidation_time)
    op = rpf_setup(system, factor_K=False, factor_A=False)
    K, Q, K_hat = system.K, system.Q, op.K_hat
    x_u = np.linspace(-1.0, 1.0, system.n_u)
    Qt = transpose(Q)

    timings = {}

    def measure(name, fn):
        fn()  # warm up (JIT compile on the compiled backend)
        timings[name] = _time_best(fn, repeats)

    measure(f"spmv K ({K.n_rows}^2)", lambda: spmv(K, x_u))
    measure(f"spmv_t Q ({Q.n_rows}x{Q.n_cols})", lambda: spmv_t(Q, x_u))
    measure("spgemm Q Q^T", lambda: spgemm(Q, Qt))
    measure("assemble slab blocks",
            lambda: assemble_three_field(grid_for_ratio(aspect), mat,
                                         dt=mat.consolidation_time))
    measure("cholesky factor K_hat", lambda: cholesky_factor(K_hat))
    solver = cholesky_factor(K_hat)
    measure("cholesky solve", lambda: solver.apply(x_u))
    measure("ic factor K_hat (rho=8)", lambda: ic_factor(K_hat, 8))
    ic_solver = ic_factor(K_hat, 8)
    measure("ic solve", lambda: ic_solver.apply(x_u))

    json.dump({"backend": poroprec.backend_name(), "timings": timings},
              sys.stdout)
    sys.stdout.write("\n")


def run_parent(aspect, repeats):
    results = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, POROPREC_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--child",
             "--aspect", str(aspect), "--repeats", str(repeats)],
            env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            raise SystemExit(f"{backend} child failed")
        payload = json.loads(proc.stdout.strip().splitlines()[-1])
        assert payload["backend"] == backend
        results[backend] = payload["timings"]

    names = list(results["numpy"])
    width = max(len(n) for n in names)
    print(f"slab aspect {aspect}, best of {repeats} runs, compile time "
          "excluded")
    print(f"{'kernel':<{width}}  {'numpy':>12}  {'numba':>12}  {'speedup':>8}")
    for name in names:
        t_np = results["numpy"][name]
        t_nb = results["numba"][name]
        ratio = t_np / t_nb if t_nb > 0 else float("inf")
        print(f"{name:<{width}}  {t_np:>10.6f} s  {t_nb:>10.6f} s  "
              f"{ratio:>7.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--aspect", type=int, default=10,
                        help="slab refinement ratio (10, 20, 40, ...)")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--child", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.child:
        run_child(args.aspect, args.repeats)
    else:
        run_parent(args.aspect, args.repeats)


if __name__ == "__main__":
    main()

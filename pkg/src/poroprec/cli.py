"""Command-line driver: problem generation and benchmark sweeps.

Timings use time.perf_counter (a monotonic wall clock, not CPU time).
Per case, T_p is the preconditioner setup wall time, T_s the outer-solve
wall time, and T_t their sum; problem assembly/loading is timed separately
and reported in the log, not in the row.  Sweep rows are emitted in case
order no matter which worker finishes first, and a case failure is caught
and reported in its own row without stopping the sweep.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .blocksys import BlockVector
from .erpf import VARIANTS, build_preconditioner
from .krylov import bicgstab, export_residual_history
from .mandel import (GridSpec, MaterialParams, assemble_three_field,
                     fixed_stress_diagonal, grid_for_ratio,
                     load_block_system)
from .rpf import RpfConfig, write_setup_report
from . import io as pio

INNER_MODES = ("M_I-direct", "M_II-ic")

ROW_FIELDS = ("label", "source", "dt_over_tc", "variant", "inner",
              "alpha_over_alpha_K", "alpha_over_alpha_A", "n_it",
              "T_p", "T_s", "T_t", "status")


@dataclass
class BenchCase:
    """One benchmark solve: problem source, step size, solver choices.

    source is either an integer refinement ratio for the generated slab
    problem or a directory path holding a saved block system.  seed is
    recorded in the row for provenance; the whole pipeline is
    deterministic, so it does not influence the result.
    """

    source: int | str = 10
    dt_over_tc: float = 1.0
    variant: str = "auto"
    inner: str = "M_I-direct"
    rho_K: int = 8
    rho_A: int = 8
    rho_S: int = 8
    n_in: int = 2
    tol: float = 1e-6
    max_it: int = 1000
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.inner not in INNER_MODES:
            raise ValueError(f"unknown inner mode {self.inner!r}")


def _case_config(case: BenchCase, d_k) -> RpfConfig:
    if case.inner == "M_I-direct":
        return RpfConfig(policy_K="direct", policy_A="direct",
                         rho_S=case.rho_S, d_k=d_k)
    return RpfConfig(policy_K="ic", policy_A="ic", rho_K=case.rho_K,
                     rho_A=case.rho_A, rho_S=case.rho_S, d_k=d_k)


def _build_problem(case: BenchCase):
    mat = MaterialParams()
    dt = case.dt_over_tc * mat.consolidation_time
    if isinstance(case.source, int):
        grid = grid_for_ratio(case.source)
        system, rhs = assemble_three_field(grid, mat, dt)
        d_k = fixed_stress_diagonal(grid, mat)
    else:
        system, rhs = load_block_system(case.source)
        system = system.with_dt(dt)
        d_k = None
    return system, rhs, d_k


def run_case(case: BenchCase, out_dir=None, index: int = 0) -> dict:
    """Run one case and return its summary row; never raises."""
    row = {field: "" for field in ROW_FIELDS}
    row["label"] = case.label or f"case{index:03d}"
    row["source"] = str(case.source)
    row["dt_over_tc"] = f"{case.dt_over_tc:g}"
    row["inner"] = case.inner
    try:
        system, rhs, d_k = _build_problem(case)
        cfg = _case_config(case, d_k)

        t0 = time.perf_counter()
        prec = build_preconditioner(system, cfg, variant=case.variant,
                                    n_in=case.n_in)
        t_setup = time.perf_counter() - t0

        row["variant"] = prec.variant
        op = prec.op
        row["alpha_over_alpha_K"] = f"{op.alpha / op.alpha_K:.6g}"
        row["alpha_over_alpha_A"] = f"{op.alpha / op.alpha_A:.6g}"

        def apply_op(x, _system=system):
            from .blocksys import apply_block_operator
            return apply_block_operator(
                _system, BlockVector.from_concat(_system, x)).concat()

        x, report = bicgstab(apply_op, prec.apply, rhs.concat(),
                             tol=case.tol, max_it=case.max_it,
                             setup_time=t_setup)
        row["n_it"] = str(report.iterations)
        row["T_p"] = f"{report.setup_time:.4f}"
        row["T_s"] = f"{report.solve_time:.4f}"
        row["T_t"] = f"{report.total_time:.4f}"
        row["status"] = report.status

        if out_dir is not None:
            stem = os.path.join(out_dir, row["label"])
            export_residual_history(report, stem + "_residuals.csv")
            write_setup_report(op, stem + "_setup.txt")
    except Exception as exc:  # isolate per-case failures
        row["status"] = f"error: {exc}"
    return row


def _run_case_indexed(args):
    case, out_dir, index = args
    return run_case(case, out_dir, index)


def run_sweep(cases, out_dir, workers: int = 1, strict: bool = False,
              stream=None) -> int:
    """Run all cases, write summary.csv, return a process exit code.

    With strict=True the exit code is nonzero when any case fails to
    converge; otherwise failures only show in the status column.
    """
    stream = stream if stream is not None else sys.stdout
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(case, out_dir, idx) for idx, case in enumerate(cases)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_case_indexed, jobs))
    else:
        rows = [_run_case_indexed(job) for job in jobs]

    summary = os.path.join(out_dir, "summary.csv")
    with open(summary, "w") as fh:
        fh.write(",".join(ROW_FIELDS) + "\n")
        for row in rows:
            fh.write(",".join(str(row[f]) for f in ROW_FIELDS) + "\n")

    width = max(12, max((len(r["label"]) for r in rows), default=12))
    print(f"{'label':<{width}} {'dt/tc':>8} {'variant':>10} {'n_it':>5} "
          f"{'T_p':>8} {'T_s':>8} status", file=stream)
    for row in rows:
        print(f"{row['label']:<{width}} {row['dt_over_tc']:>8} "
              f"{row['variant']:>10} {row['n_it']:>5} {row['T_p']:>8} "
              f"{row['T_s']:>8} {row['status']}", file=stream)
    print(f"summary written to {summary}", file=stream)

    if strict and any(r["status"] != "converged" for r in rows):
        return 1
    return 0


def _parse_values(text: str):
    return text.replace(",", " ").split()


def parse_config(path) -> list[BenchCase]:
    """Read one sweep description from an INI file.

    The [sweep] section sets shared defaults and may define a cross
    product via `aspects` and `dt_over_tc` lists; each additional
    [case NAME] section adds one explicit case inheriting those defaults.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValueError(f"cannot read config file: {path}")

    defaults = BenchCase()
    cases: list[BenchCase] = []
    if parser.has_section("sweep"):
        sw = parser["sweep"]
        defaults = BenchCase(
            variant=sw.get("variant", defaults.variant),
            inner=sw.get("inner", defaults.inner),
            rho_K=sw.getint("rho_K", defaults.rho_K),
            rho_A=sw.getint("rho_A", defaults.rho_A),
            rho_S=sw.getint("rho_S", defaults.rho_S),
            n_in=sw.getint("n_in", defaults.n_in),
            tol=sw.getfloat("tol", defaults.tol),
            max_it=sw.getint("max_it", defaults.max_it),
            seed=sw.getint("seed", defaults.seed),
        )
        aspects = [int(v) for v in _parse_values(sw.get("aspects", ""))]
        dts = [float(v) for v in _parse_values(sw.get("dt_over_tc", ""))]
        label = sw.get("label", "sweep")
        for aspect in aspects:
            for dt in dts:
                cases.append(replace(
                    defaults, source=aspect, dt_over_tc=dt,
                    label=f"{label}_a{aspect}_dt{dt:g}"))

    for section in parser.sections():
        if not section.startswith("case"):
            continue
        sec = parser[section]
        source: int | str
        if "source" in sec:
            source = sec.get("source")
        else:
            source = sec.getint("aspect", 10)
        cases.append(BenchCase(
            source=source,
            dt_over_tc=sec.getfloat("dt_over_tc", defaults.dt_over_tc),
            variant=sec.get("variant", defaults.variant),
            inner=sec.get("inner", defaults.inner),
            rho_K=sec.getint("rho_K", defaults.rho_K),
            rho_A=sec.getint("rho_A", defaults.rho_A),
            rho_S=sec.getint("rho_S", defaults.rho_S),
            n_in=sec.getint("n_in", defaults.n_in),
            tol=sec.getfloat("tol", defaults.tol),
            max_it=sec.getint("max_it", defaults.max_it),
            seed=sec.getint("seed", defaults.seed),
            label=section.split(None, 1)[1] if " " in section else section,
        ))
    if not cases:
        raise ValueError("config defines no cases")
    return cases


def _add_material_args(sub):
    sub.add_argument("--young-modulus", type=float, default=None)
    sub.add_argument("--poisson-ratio", type=float, default=None)
    sub.add_argument("--biot-coefficient", type=float, default=None)
    sub.add_argument("--permeability", type=float, default=None)
    sub.add_argument("--fluid-viscosity", type=float, default=None)
    sub.add_argument("--storage-coefficient", type=float, default=None)


def _material_from_args(args) -> MaterialParams:
    kwargs = {}
    for name in ("young_modulus", "poisson_ratio", "biot_coefficient",
                 "permeability", "fluid_viscosity", "storage_coefficient"):
        value = getattr(args, name)
        if value is not None:
            kwargs[name] = value
    return MaterialParams(**kwargs)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="poroprec",
        description="block preconditioners for three-field poroelasticity")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("generate",
                          help="assemble a slab problem and save its blocks")
    gen.add_argument("--aspect", type=int, default=None,
                     help="planar refinement ratio (10, 20, ...)")
    gen.add_argument("--grid", default=None,
                     help="explicit cell counts nx,ny,nz")
    gen.add_argument("--dt-over-tc", type=float, default=1.0)
    gen.add_argument("--theta", type=float, default=1.0)
    gen.add_argument("--bc-top", choices=("rigid", "traction"),
                     default="rigid")
    gen.add_argument("--out", required=True)
    _add_material_args(gen)

    run = subs.add_parser("run", help="run a benchmark sweep or one case")
    run.add_argument("--config", default=None, help="INI sweep description")
    run.add_argument("--out", default="bench_out")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--strict", action="store_true",
                     help="exit nonzero if any case fails to converge")
    run.add_argument("--source", default=None,
                     help="directory with a saved block system")
    run.add_argument("--aspect", type=int, default=None)
    run.add_argument("--dt-over-tc", type=float, default=1.0)
    run.add_argument("--variant", choices=VARIANTS, default="auto")
    run.add_argument("--inner", choices=INNER_MODES, default="M_I-direct")
    run.add_argument("--rho-k", type=int, default=8)
    run.add_argument("--rho-a", type=int, default=8)
    run.add_argument("--rho-s", type=int, default=8)
    run.add_argument("--n-in", type=int, default=2)
    run.add_argument("--tol", type=float, default=1e-6)
    run.add_argument("--max-it", type=int, default=1000)
    run.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)

    if args.command == "generate":
        if (args.aspect is None) == (args.grid is None):
            parser.error("give exactly one of --aspect or --grid")
        if args.grid is not None:
            nx, ny, nz = (int(v) for v in args.grid.split(","))
            grid = GridSpec(nx, ny, nz)
        else:
            grid = grid_for_ratio(args.aspect)
        mat = _material_from_args(args)
        dt = args.dt_over_tc * mat.consolidation_time
        system, rhs = assemble_three_field(grid, mat, dt, theta=args.theta,
                                           bc_top=args.bc_top)
        pio.save_block_system(args.out, system, rhs=rhs, extra_metadata={
            "grid": f"{grid.nx}x{grid.ny}x{grid.nz}",
            "bc_top": args.bc_top,
            "dt_over_tc": repr(args.dt_over_tc),
        })
        print(f"block system written to {args.out} "
              f"(n_u={system.n_u}, n_q={system.n_q}, n_p={system.n_p})")
        return 0

    if args.config is not None:
        cases = parse_config(args.config)
    else:
        source: int | str
        if args.source is not None:
            source = args.source
        else:
            source = args.aspect if args.aspect is not None else 10
        cases = [BenchCase(source=source, dt_over_tc=args.dt_over_tc,
                           variant=args.variant, inner=args.inner,
                           rho_K=args.rho_k, rho_A=args.rho_a,
                           rho_S=args.rho_s, n_in=args.n_in, tol=args.tol,
                           max_it=args.max_it, seed=args.seed)]
    return run_sweep(cases, args.out, workers=args.workers,
                     strict=args.strict)


if __name__ == "__main__":
    sys.exit(main())

"""Block preconditioners for three-field poroelasticity.

The package builds relaxed physical-factorization preconditioners for the
coupled displacement/flux/pressure systems of linear poroelasticity, with
enhanced variants that stay robust when the relaxation parameter is driven
below its per-block conditioning bounds.  Hot kernels run through a
compiled backend selected by the POROPREC_BACKEND environment variable
("numba", the default, or "numpy").
"""

from ._backend import backend_name
from .sparse import (SparseMatrix, add_scaled, diagonal_matrix, diagonal_of,
                     from_coo, from_dense, identity, spgemm, spmv, spmv_t,
                     symmetry_gap, to_dense, transpose)
from .io import (read_matrix_market, read_metadata, read_vector,
                 save_block_system, write_matrix_market, write_metadata,
                 write_vector)
from .blocksys import (BlockVector, ThreeFieldSystem, apply_block_operator,
                       block_residual)
from .factor import (InnerSolver, callable_solver, cholesky_factor,
                     diagonal_solver, ic_factor, ic_factor_pattern,
                     rcm_permutation)
from .krylov import SolveReport, bicgstab, export_residual_history
from .rpf import (RpfConfig, RpfOperator, compute_DA, compute_DK,
                  compute_alpha, compute_alpha_bounds, lumped_diagonal,
                  rpf_apply, rpf_setup, write_setup_report)
from .erpf import (AugmentedBlockContext, Preconditioner,
                   assemble_stilde_A, build_preconditioner, build_stilde_A,
                   build_stilde_K, erpf2_alt_apply, method1_apply,
                   method2_apply, select_variant)
from .spectral import (EigenReport, TraceModel, generalized_eigs,
                       iteration_matrix_radius, singular_values,
                       theorem31_bound, trace_model_from_parts,
                       trace_model_from_surrogates, trace_model_from_system,
                       trace_objective_scan, write_eigen_csv,
                       write_indexed_csv)
from .mandel import (GridSpec, MaterialParams, assemble_three_field,
                     fixed_stress_diagonal, grid_for_ratio,
                     load_block_system, q1_stiffness_element)
from .cli import BenchCase, parse_config, run_case, run_sweep

__version__ = "0.1.0"

__all__ = [
    "AugmentedBlockContext", "BenchCase", "BlockVector", "EigenReport",
    "GridSpec", "InnerSolver", "MaterialParams", "Preconditioner",
    "RpfConfig", "RpfOperator", "SolveReport", "SparseMatrix",
    "ThreeFieldSystem", "TraceModel", "add_scaled", "apply_block_operator",
    "assemble_stilde_A", "assemble_three_field", "backend_name",
    "bicgstab", "block_residual", "build_preconditioner", "build_stilde_A",
    "build_stilde_K", "callable_solver", "cholesky_factor", "compute_DA",
    "compute_DK", "compute_alpha", "compute_alpha_bounds",
    "diagonal_matrix", "diagonal_of", "diagonal_solver",
    "erpf2_alt_apply", "export_residual_history", "fixed_stress_diagonal",
    "from_coo", "from_dense", "generalized_eigs", "grid_for_ratio",
    "ic_factor", "ic_factor_pattern", "identity",
    "iteration_matrix_radius", "load_block_system", "lumped_diagonal",
    "method1_apply",
    "method2_apply", "parse_config", "q1_stiffness_element",
    "rcm_permutation", "read_matrix_market", "read_metadata",
    "read_vector", "rpf_apply", "rpf_setup", "run_case", "run_sweep",
    "save_block_system", "select_variant", "singular_values", "spgemm",
    "spmv", "spmv_t", "symmetry_gap", "theorem31_bound", "to_dense",
    "trace_model_from_parts", "trace_model_from_surrogates",
    "trace_model_from_system", "trace_objective_scan", "transpose",
    "write_eigen_csv", "write_indexed_csv", "write_matrix_market",
    "write_metadata", "write_setup_report", "write_vector",
]

"""Session fixtures: the desk-scale slab problem shared across test modules."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from poroprec.mandel import (GridSpec, MaterialParams, assemble_three_field,
                             fixed_stress_diagonal, grid_for_ratio)


@pytest.fixture(scope="session")
def material():
    return MaterialParams()


@pytest.fixture(scope="session")
def slab10(material):
    """Coarsest slab problem at dt = t_c, with its canonical loading."""
    grid = grid_for_ratio(10)
    system, rhs = assemble_three_field(grid, material,
                                       dt=material.consolidation_time)
    d_k = fixed_stress_diagonal(grid, material)
    return {"grid": grid, "system": system, "rhs": rhs, "d_k": d_k}


@pytest.fixture(scope="session")
def single_element(material):
    """One-cell unit cube: every matrix is small enough to check by hand."""
    grid = GridSpec(1, 1, 1, lx=1.0, ly=1.0, lz=1.0)
    system, rhs = assemble_three_field(grid, material,
                                       dt=material.consolidation_time)
    return {"grid": grid, "system": system, "rhs": rhs}

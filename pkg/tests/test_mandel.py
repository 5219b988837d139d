"""Problem assembly on thin-slab grids, plus block-system disk round trips."""

import os

import numpy as np
import pytest

from poroprec.io import (BLOCK_FILES, META_FILE, RHS_FILES,
                         read_metadata, save_block_system,
                         write_matrix_market, write_metadata, write_vector)
from poroprec.mandel import (GridSpec, MaterialParams, assemble_three_field,
                             fixed_stress_diagonal, grid_for_ratio,
                             load_block_system, q1_stiffness_element)
from poroprec.sparse import from_dense, to_dense


class TestGridAndMaterial:
    def test_aspect_grid_shape(self):
        grid = grid_for_ratio(10)
        assert (grid.nx, grid.ny, grid.nz) == (10, 1, 10)
        assert (grid.lx, grid.ly, grid.lz) == (1.0, 0.1, 1.0)
        grid40 = grid_for_ratio(40)
        assert (grid40.nx, grid40.ny, grid40.nz) == (40, 4, 40)

    @pytest.mark.parametrize("aspect", [5, 15, 0, -10])
    def test_aspect_must_be_multiple_of_ten(self, aspect):
        with pytest.raises(ValueError, match="multiple of 10"):
            grid_for_ratio(aspect)

    def test_grid_rejects_empty_axis(self):
        with pytest.raises(ValueError, match="nz"):
            GridSpec(2, 2, 0)

    def test_spacing(self):
        grid = GridSpec(4, 2, 5, lx=2.0, ly=1.0, lz=10.0)
        assert grid.spacing == (0.5, 0.5, 2.0)
        assert grid.n_cells == 40

    def test_default_elastic_constants(self, material):
        lam, mu = material.lame()
        assert lam + 2.0 * mu == pytest.approx(10.0 / 9.0)
        assert material.drained_bulk_modulus() == pytest.approx(50.0 / 81.0)

    def test_material_validation(self):
        with pytest.raises(ValueError, match="poisson"):
            MaterialParams(poisson_ratio=0.5)
        with pytest.raises(ValueError, match="biot"):
            MaterialParams(biot_coefficient=0.0)
        with pytest.raises(ValueError, match="storage"):
            MaterialParams(storage_coefficient=-1.0)

    def test_fixed_stress_weight_value(self, material):
        grid = grid_for_ratio(10)
        d = fixed_stress_diagonal(grid, material)
        cell_volume = 0.1 * 0.1 * 0.1
        want = cell_volume / material.drained_bulk_modulus()
        assert d.shape == (100,)
        assert np.allclose(d, want, rtol=1e-14)


class TestElementStiffness:
    def test_symmetric(self):
        Ke = q1_stiffness_element(0.1, 0.05, 0.2, 1.0, 2.0)
        assert Ke.shape == (24, 24)
        assert np.abs(Ke - Ke.T).max() <= 1e-14 * np.abs(Ke).max()

    def test_rigid_translations_in_nullspace(self):
        Ke = q1_stiffness_element(0.3, 0.1, 0.25, 0.7, 1.3)
        for comp in range(3):
            t = np.zeros(24)
            t[comp::3] = 1.0
            assert np.abs(Ke @ t).max() <= 1e-12 * np.abs(Ke).max()

    def test_positive_semidefinite(self):
        Ke = q1_stiffness_element(1.0, 1.0, 1.0, 1.0, 1.0)
        eigs = np.linalg.eigvalsh(Ke)
        assert eigs.min() >= -1e-12 * eigs.max()


class TestAssembly:
    def test_block_dimensions_scale_with_aspect(self, slab10, material):
        system = slab10["system"]
        assert (system.n_u, system.n_q, system.n_p) == (726, 420, 100)
        system20, _ = assemble_three_field(grid_for_ratio(20), material,
                                           dt=1.0)
        assert (system20.n_u, system20.n_q, system20.n_p) == (3969, 2880, 800)

    def test_single_element_dimensions(self, single_element):
        system = single_element["system"]
        assert (system.n_u, system.n_q, system.n_p) == (24, 6, 1)

    def test_single_element_flux_coupling_is_drained_face_area(
            self, single_element):
        Bd = to_dense(single_element["system"].B)
        assert np.count_nonzero(Bd) == 1
        assert Bd.max() == pytest.approx(1.0)

    def test_blocks_are_positive_definite_in_practice(self, slab10):
        system = slab10["system"]
        rng = np.random.default_rng(0)
        Kd = to_dense(system.K)
        Ad = to_dense(system.A)
        for _ in range(100):
            x = rng.standard_normal(system.n_u)
            assert x @ (Kd @ x) > 0.0
            y = rng.standard_normal(system.n_q)
            assert y @ (Ad @ y) > 0.0

    def test_no_storage_means_zero_pressure_block(self, slab10):
        assert np.count_nonzero(to_dense(slab10["system"].P)) == 0

    def test_storage_scales_pressure_block_by_cell_volume(self, material):
        from dataclasses import replace
        mat = replace(material, storage_coefficient=2.0)
        system, _ = assemble_three_field(GridSpec(2, 1, 2), mat, dt=1.0)
        hx, hy, hz = GridSpec(2, 1, 2).spacing
        want = 2.0 * hx * hy * hz
        assert np.allclose(np.diag(to_dense(system.P)), want, rtol=1e-14)

    def test_interior_flux_columns_balance(self, material):
        system, _ = assemble_three_field(grid_for_ratio(10), material, dt=1.0)
        Bd = to_dense(system.B)
        col_sums = Bd.sum(axis=0)
        grid = grid_for_ratio(10)
        interior = np.zeros(grid.n_cells, dtype=bool)
        for c in range(grid.n_cells):
            i = c % grid.nx
            k = c // (grid.nx * grid.ny)
            interior[c] = 0 < i and 0 < k < grid.nz - 1
        assert np.abs(col_sums[interior]).max() <= 1e-14

    def test_loading_modes_differ(self, material):
        grid = GridSpec(2, 1, 2)
        _, rigid = assemble_three_field(grid, material, dt=1.0,
                                        bc_top="rigid")
        _, traction = assemble_three_field(grid, material, dt=1.0,
                                           bc_top="traction")
        assert not np.array_equal(rigid.concat(), traction.concat())
        assert np.count_nonzero(traction.q) == 0
        assert np.count_nonzero(traction.p) == 0

    def test_traction_load_totals_surface_force(self, material):
        grid = GridSpec(1, 1, 1, lx=1.0, ly=1.0, lz=1.0)
        _, rhs = assemble_three_field(grid, material, dt=1.0,
                                      bc_top="traction")
        assert rhs.u.sum() == pytest.approx(-1.0)
        assert np.count_nonzero(rhs.u) == 4

    def test_rigid_load_carries_unit_overpressure(self, single_element):
        system = single_element["system"]
        rhs = single_element["rhs"]
        ones = np.ones(system.n_p)
        assert np.allclose(rhs.u, to_dense(system.Q) @ ones)
        assert np.allclose(rhs.q, to_dense(system.B) @ ones)
        assert np.allclose(rhs.p, 1.0)

    def test_unknown_loading_rejected(self, material):
        with pytest.raises(ValueError, match="bc_top"):
            assemble_three_field(GridSpec(1, 1, 1), material, dt=1.0,
                                 bc_top="drained")


@pytest.fixture()
def saved_system(tmp_path, material):
    system, rhs = assemble_three_field(GridSpec(2, 1, 2), material, dt=3.0,
                                       theta=0.5)
    save_block_system(tmp_path, system, rhs=rhs)
    return tmp_path, system, rhs


class TestDiskRoundTrip:
    def test_blocks_and_metadata_survive_exactly(self, saved_system):
        directory, system, rhs = saved_system
        loaded, loaded_rhs = load_block_system(directory)
        for name in BLOCK_FILES:
            got = to_dense(getattr(loaded, name))
            want = to_dense(getattr(system, name))
            assert np.abs(got - want).max() == 0.0
        assert loaded.dt == system.dt
        assert loaded.theta == system.theta
        assert loaded.gamma == system.gamma
        assert np.array_equal(loaded_rhs.concat(), rhs.concat())

    def test_absent_right_hand_side_loads_as_zero(self, tmp_path, material):
        system, _ = assemble_three_field(GridSpec(2, 1, 2), material, dt=1.0)
        save_block_system(tmp_path, system)
        _, rhs = load_block_system(tmp_path)
        assert rhs.norm() == 0.0

    def test_missing_block_file_is_named(self, saved_system):
        directory, _, _ = saved_system
        os.remove(directory / BLOCK_FILES["B"])
        with pytest.raises(ValueError, match="block B"):
            load_block_system(directory)

    def test_asymmetric_stiffness_file_rejected(self, saved_system):
        directory, system, _ = saved_system
        bad = np.zeros((system.n_u, system.n_u))
        bad[0, 1] = 1.0
        bad[np.diag_indices(system.n_u)] = 1.0
        write_matrix_market(directory / BLOCK_FILES["K"], from_dense(bad))
        with pytest.raises(ValueError, match="symmet"):
            load_block_system(directory)

    def test_missing_time_step_metadata_rejected(self, saved_system):
        directory, _, _ = saved_system
        meta = read_metadata(directory / META_FILE)
        del meta["dt"]
        write_metadata(directory / META_FILE, meta)
        with pytest.raises(ValueError, match="dt"):
            load_block_system(directory)

    def test_declared_dimension_mismatch_rejected(self, saved_system):
        directory, _, _ = saved_system
        meta = read_metadata(directory / META_FILE)
        meta["n_p"] = "999"
        write_metadata(directory / META_FILE, meta)
        with pytest.raises(ValueError, match="n_p=999"):
            load_block_system(directory)

    def test_inconsistent_gamma_rejected(self, saved_system):
        directory, _, _ = saved_system
        meta = read_metadata(directory / META_FILE)
        meta["gamma"] = "123.0"
        write_metadata(directory / META_FILE, meta)
        with pytest.raises(ValueError, match="gamma"):
            load_block_system(directory)

    def test_wrong_length_right_hand_side_rejected(self, saved_system):
        directory, _, _ = saved_system
        write_vector(directory / RHS_FILES["p"], np.ones(2))
        with pytest.raises(ValueError, match="right-hand side p"):
            load_block_system(directory)

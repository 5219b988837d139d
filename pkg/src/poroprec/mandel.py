"""Cartesian three-field poroelastic test problems and block-system I/O.

Generates the classic laterally-drained slab: trilinear displacement,
lowest-order face-flux, and piecewise-constant pressure unknowns on an
nx x ny x nz hex grid.  The thin-slab family used throughout the test
suite keeps ny = nx/10 so the cell count grows with the planar refinement
ratio while the slab stays one layer of cells thick per ten in plane.

Boundary conditions: the x = 0 plane is a symmetry plane, y = 0 and
y = ly are rigid frictionless walls, z = 0 is a rigid base, and x = lx is
the drained face (all other faces impermeable).  With bc_top = "rigid"
the top plate is rigid and the load is a unit initial overpressure; with
bc_top = "traction" the top is loaded by a unit downward traction.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import io as pio
from .blocksys import BlockVector, ThreeFieldSystem
from .sparse import SparseMatrix, diagonal_matrix, from_coo, spmv
from ._backend import kernels


@dataclass
class GridSpec:
    """Cartesian grid: cell counts and physical extents."""

    nx: int
    ny: int
    nz: int
    lx: float = 1.0
    ly: float = 0.1
    lz: float = 1.0

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        for name in ("lx", "ly", "lz"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def spacing(self):
        return (self.lx / self.nx, self.ly / self.ny, self.lz / self.nz)


@dataclass
class MaterialParams:
    """Isotropic poroelastic constants.

    The defaults give a drained modulus lambda + 2 mu = 10/9 and mobility
    1e-3, hence a consolidation time of 900 over a unit drainage length;
    consolidation_time is declarative (used to scale time steps) and is
    not re-derived when other constants change.
    """

    young_modulus: float = 10.0 / 10.8
    poisson_ratio: float = 0.25
    biot_coefficient: float = 1.0
    permeability: float = 1e-3
    fluid_viscosity: float = 1.0
    storage_coefficient: float = 0.0
    consolidation_time: float = 900.0

    def __post_init__(self):
        if not self.young_modulus > 0.0:
            raise ValueError("young_modulus must be positive")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise ValueError("poisson_ratio must lie in (-1, 0.5)")
        if not 0.0 < self.biot_coefficient <= 1.0:
            raise ValueError("biot_coefficient must lie in (0, 1]")
        if not self.permeability > 0.0:
            raise ValueError("permeability must be positive")
        if not self.fluid_viscosity > 0.0:
            raise ValueError("fluid_viscosity must be positive")
        if self.storage_coefficient < 0.0:
            raise ValueError("storage_coefficient must be non-negative")
        if not self.consolidation_time > 0.0:
            raise ValueError("consolidation_time must be positive")

    def lame(self):
        E, nu = self.young_modulus, self.poisson_ratio
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        mu = E / (2.0 * (1.0 + nu))
        return lam, mu

    def drained_bulk_modulus(self) -> float:
        lam, mu = self.lame()
        return lam + 2.0 * mu / 3.0


def grid_for_ratio(aspect: int) -> GridSpec:
    """Thin-slab grid for a planar refinement ratio (10, 20, 40, 80, ...)."""
    if aspect < 10 or aspect % 10 != 0:
        raise ValueError("aspect must be a positive multiple of 10")
    return GridSpec(nx=aspect, ny=aspect // 10, nz=aspect)


def fixed_stress_diagonal(grid: GridSpec, mat: MaterialParams) -> np.ndarray:
    """Physics-based displacement coupling surrogate b^2 V / K_dr per cell.

    This is the classic fixed-stress pressure-block weight; it tracks the
    true coupling strength far better than algebraic diagonal probes on
    these grids and is what the problem generator feeds the preconditioner
    setup.
    """
    hx, hy, hz = grid.spacing
    volume = hx * hy * hz
    weight = mat.biot_coefficient ** 2 * volume / mat.drained_bulk_modulus()
    return np.full(grid.n_cells, weight)


def _node_ids(grid: GridSpec) -> np.ndarray:
    nx, ny, nz = grid.nx, grid.ny, grid.nz
    return np.arange((nx + 1) * (ny + 1) * (nz + 1),
                     dtype=np.int64).reshape(nx + 1, ny + 1, nz + 1,
                                             order="F")


def _face_numbering(grid: GridSpec):
    """Face ids from one geometric sweep ordered by (z, y, x, axis)."""
    nx, ny, nz = grid.nx, grid.ny, grid.nz
    hx, hy, hz = grid.spacing

    Ix, Jx, Kx = np.meshgrid(np.arange(nx + 1), np.arange(ny),
                             np.arange(nz), indexing="ij")
    Iy, Jy, Ky = np.meshgrid(np.arange(nx), np.arange(ny + 1),
                             np.arange(nz), indexing="ij")
    Iz, Jz, Kz = np.meshgrid(np.arange(nx), np.arange(ny),
                             np.arange(nz + 1), indexing="ij")

    xc = np.concatenate([(Ix * hx).ravel(), ((Iy + 0.5) * hx).ravel(),
                         ((Iz + 0.5) * hx).ravel()])
    yc = np.concatenate([((Jx + 0.5) * hy).ravel(), (Jy * hy).ravel(),
                         ((Jz + 0.5) * hy).ravel()])
    zc = np.concatenate([((Kx + 0.5) * hz).ravel(), ((Ky + 0.5) * hz).ravel(),
                         (Kz * hz).ravel()])
    n_fx = Ix.size
    n_fy = Iy.size
    n_fz = Iz.size
    axis = np.concatenate([np.zeros(n_fx, np.int64),
                           np.ones(n_fy, np.int64),
                           np.full(n_fz, 2, np.int64)])

    order = np.lexsort((axis, xc, yc, zc))
    ids = np.empty(order.size, dtype=np.int64)
    ids[order] = np.arange(order.size)
    fx = ids[:n_fx].reshape(nx + 1, ny, nz)
    fy = ids[n_fx:n_fx + n_fy].reshape(nx, ny + 1, nz)
    fz = ids[n_fx + n_fy:].reshape(nx, ny, nz + 1)
    return fx, fy, fz, order.size


_LOCAL_NODES = ((0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0),
                (0, 0, 1), (1, 0, 1), (0, 1, 1), (1, 1, 1))


def q1_stiffness_element(hx: float, hy: float, hz: float,
                         lam: float, mu: float) -> np.ndarray:
    """24x24 trilinear elasticity element matrix (2x2x2 Gauss rule)."""
    g = 1.0 / np.sqrt(3.0)
    ref = np.array([[2 * d - 1 for d in node] for node in _LOCAL_NODES],
                   dtype=np.float64)
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[0, 0] = D[1, 1] = D[2, 2] = lam + 2.0 * mu
    D[3, 3] = D[4, 4] = D[5, 5] = mu
    detJ = hx * hy * hz / 8.0
    Ke = np.zeros((24, 24))
    for xi in (-g, g):
        for eta in (-g, g):
            for ze in (-g, g):
                # quadrature points iterate all sign triples; the element
                # matrix is the symmetric sum so visit order is free
                dN = np.empty((8, 3))
                rx, ry, rz = ref[:, 0], ref[:, 1], ref[:, 2]
                dN[:, 0] = 0.125 * rx * (1 + ry * eta) * (1 + rz * ze) * (2.0 / hx)
                dN[:, 1] = 0.125 * ry * (1 + rx * xi) * (1 + rz * ze) * (2.0 / hy)
                dN[:, 2] = 0.125 * rz * (1 + rx * xi) * (1 + ry * eta) * (2.0 / hz)
                Bm = np.zeros((6, 24))
                cols = 3 * np.arange(8)
                Bm[0, cols + 0] = dN[:, 0]
                Bm[1, cols + 1] = dN[:, 1]
                Bm[2, cols + 2] = dN[:, 2]
                Bm[3, cols + 0] = dN[:, 1]
                Bm[3, cols + 1] = dN[:, 0]
                Bm[4, cols + 1] = dN[:, 2]
                Bm[4, cols + 2] = dN[:, 1]
                Bm[5, cols + 0] = dN[:, 2]
                Bm[5, cols + 2] = dN[:, 0]
                Ke += Bm.T @ D @ Bm * detJ
    return Ke


def _stiffness_pattern(grid: GridSpec, nid):
    """CSR pattern coupling every displacement dof to its 27-neighborhood."""
    nx, ny, nz = grid.nx, grid.ny, grid.nz
    n_u = 3 * nid.size
    rows_parts = []
    cols_parts = []
    comp = np.arange(3, dtype=np.int64)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for dk in (-1, 0, 1):
                src = nid[max(0, -di):nx + 1 - max(0, di),
                          max(0, -dj):ny + 1 - max(0, dj),
                          max(0, -dk):nz + 1 - max(0, dk)].ravel()
                dst = nid[max(0, di):nx + 1 + min(0, di),
                          max(0, dj):ny + 1 + min(0, dj),
                          max(0, dk):nz + 1 + min(0, dk)].ravel()
                r = (3 * src[:, None] + comp)[:, :, None]
                c = (3 * dst[:, None] + comp)[:, None, :]
                m = src.size
                rows_parts.append(np.broadcast_to(r, (m, 3, 3)).ravel())
                cols_parts.append(np.broadcast_to(c, (m, 3, 3)).ravel())
    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    order = np.lexsort((cols, rows))
    rows = rows[order]
    cols = cols[order]
    indptr = np.zeros(n_u + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, cols, np.zeros(cols.size)


def assemble_three_field(grid: GridSpec, mat: MaterialParams, dt: float,
                         theta: float = 1.0, bc_top: str = "rigid"):
    """Build (ThreeFieldSystem, BlockVector rhs) for one implicit step.

    bc_top selects the loading as well: "rigid" applies a unit uniform
    initial overpressure (its first-step right-hand side has components in
    every block); "traction" applies a unit downward surface load on the
    free top and leaves the flux and pressure components zero.
    """
    if bc_top not in ("rigid", "traction"):
        raise ValueError("bc_top must be 'rigid' or 'traction'")
    nx, ny, nz = grid.nx, grid.ny, grid.nz
    hx, hy, hz = grid.spacing
    lam, mu = mat.lame()
    volume = hx * hy * hz
    areas = (hy * hz, hx * hz, hx * hy)

    nid = _node_ids(grid)
    n_nodes = nid.size
    n_u = 3 * n_nodes
    n_p = grid.n_cells
    fx, fy, fz, n_q = _face_numbering(grid)

    ii, jj, kk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                             indexing="ij")
    ci, cj, ck = ii.ravel(), jj.ravel(), kk.ravel()
    ncell = ci.size
    cells = (ci + cj * nx + ck * nx * ny).astype(np.int64)

    dofmap = np.empty((ncell, 24), dtype=np.int64)
    for a, (di, dj, dk) in enumerate(_LOCAL_NODES):
        node = nid[ci + di, cj + dj, ck + dk]
        for c in range(3):
            dofmap[:, 3 * a + c] = 3 * node + c

    # displacement constraints: symmetry/wall planes plus base, top per bc
    con_u = np.zeros(n_u, dtype=bool)
    con_u[3 * nid[0, :, :].ravel() + 0] = True
    con_u[3 * nid[:, 0, :].ravel() + 1] = True
    con_u[3 * nid[:, ny, :].ravel() + 1] = True
    con_u[3 * nid[:, :, 0].ravel() + 2] = True
    if bc_top == "rigid":
        con_u[3 * nid[:, :, nz].ravel() + 2] = True

    # flux constraints: impermeable everywhere except the drained x = lx
    con_q = np.zeros(n_q, dtype=bool)
    con_q[fx[0, :, :].ravel()] = True
    con_q[fy[:, 0, :].ravel()] = True
    con_q[fy[:, ny, :].ravel()] = True
    con_q[fz[:, :, 0].ravel()] = True
    con_q[fz[:, :, nz].ravel()] = True

    # stiffness: scatter one shared element matrix into a prebuilt pattern
    Ke = q1_stiffness_element(hx, hy, hz, lam, mu)
    k_indptr, k_indices, k_data = _stiffness_pattern(grid, nid)
    kernels.csr_scatter_add(k_indptr, k_indices, k_data, dofmap, Ke)
    rows_exp = np.repeat(np.arange(n_u, dtype=np.int64),
                         np.diff(k_indptr))
    kill = (rows_exp != k_indices) & (con_u[rows_exp] | con_u[k_indices])
    k_data[kill] = 0.0
    K = SparseMatrix(n_u, n_u, k_indptr, k_indices, k_data)

    # pressure-displacement coupling: signed quarter-face areas per node
    q_rows = np.empty(ncell * 24, dtype=np.int64)
    q_cols = np.empty(ncell * 24, dtype=np.int64)
    q_vals = np.empty(ncell * 24)
    pos = 0
    for a, (di, dj, dk) in enumerate(_LOCAL_NODES):
        node = nid[ci + di, cj + dj, ck + dk]
        signs = (2 * di - 1, 2 * dj - 1, 2 * dk - 1)
        for comp in range(3):
            q_rows[pos:pos + ncell] = 3 * node + comp
            q_cols[pos:pos + ncell] = cells
            q_vals[pos:pos + ncell] = (mat.biot_coefficient * signs[comp]
                                       * areas[comp] / 4.0)
            pos += ncell
    q_vals[con_u[q_rows]] = 0.0
    Q = from_coo(n_u, n_p, q_rows, q_cols, q_vals)

    # flux mass matrix: a 2x2 block per cell and axis on its face pair
    f_lo = (fx[ci, cj, ck], fy[ci, cj, ck], fz[ci, cj, ck])
    f_hi = (fx[ci + 1, cj, ck], fy[ci, cj + 1, ck], fz[ci, cj, ck + 1])
    coef = mat.fluid_viscosity / mat.permeability * volume
    a_rows_parts = []
    a_cols_parts = []
    a_vals_parts = []
    for axis in range(3):
        f0, f1 = f_lo[axis], f_hi[axis]
        for fa, fb, w in ((f0, f0, 1.0 / 3.0), (f0, f1, 1.0 / 6.0),
                          (f1, f0, 1.0 / 6.0), (f1, f1, 1.0 / 3.0)):
            a_rows_parts.append(fa)
            a_cols_parts.append(fb)
            a_vals_parts.append(np.full(ncell, coef * w))
    a_rows = np.concatenate(a_rows_parts)
    a_cols = np.concatenate(a_cols_parts)
    a_vals = np.concatenate(a_vals_parts)
    off_diag = a_rows != a_cols
    a_vals[off_diag & (con_q[a_rows] | con_q[a_cols])] = 0.0
    A = from_coo(n_q, n_q, a_rows, a_cols, a_vals)

    # flux-pressure coupling: signed face areas (outflow positive)
    b_rows_parts = []
    b_cols_parts = []
    b_vals_parts = []
    for axis in range(3):
        b_rows_parts.extend([f_lo[axis], f_hi[axis]])
        b_cols_parts.extend([cells, cells])
        b_vals_parts.extend([np.full(ncell, -areas[axis]),
                             np.full(ncell, +areas[axis])])
    b_rows = np.concatenate(b_rows_parts)
    b_cols = np.concatenate(b_cols_parts)
    b_vals = np.concatenate(b_vals_parts)
    b_vals[con_q[b_rows]] = 0.0
    B = from_coo(n_q, n_p, b_rows, b_cols, b_vals)

    P = diagonal_matrix(np.full(n_p, mat.storage_coefficient * volume))

    system = ThreeFieldSystem(K=K, A=A, P=P, Q=Q, B=B, dt=dt, theta=theta)

    if bc_top == "rigid":
        p0 = np.ones(n_p)
        rhs = BlockVector(spmv(Q, p0), spmv(B, p0), volume * p0)
    else:
        f_u = np.zeros(n_u)
        ti, tj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        ti, tj = ti.ravel(), tj.ravel()
        for di, dj in ((0, 0), (1, 0), (0, 1), (1, 1)):
            node = nid[ti + di, tj + dj, nz]
            np.add.at(f_u, 3 * node + 2, -hx * hy / 4.0)
        f_u[con_u] = 0.0
        rhs = BlockVector(f_u, np.zeros(n_q), np.zeros(n_p))

    return system, rhs


def load_block_system(source):
    """Read a saved block system (five matrices + metadata + optional rhs).

    Every validation failure names the offending block or file.  Returns
    (ThreeFieldSystem, BlockVector rhs) with a zero rhs when no right-hand
    side files are present.
    """
    paths = {name: os.path.join(source, fname)
             for name, fname in pio.BLOCK_FILES.items()}
    for name, path in paths.items():
        if not os.path.exists(path):
            raise ValueError(f"missing file for block {name}: {path}")
    meta_path = os.path.join(source, pio.META_FILE)
    if not os.path.exists(meta_path):
        raise ValueError(f"missing metadata file: {meta_path}")

    blocks = {}
    for name, path in paths.items():
        try:
            blocks[name] = pio.read_matrix_market(path)
        except ValueError as exc:
            raise ValueError(f"block {name}: {exc}") from exc

    meta = pio.read_metadata(meta_path)
    try:
        dt = float(meta["dt"])
        theta = float(meta["theta"])
    except KeyError as exc:
        raise ValueError(f"metadata missing required key: {exc}") from exc

    for dim_key, attr in (("n_u", "K"), ("n_q", "A"), ("n_p", "P")):
        if dim_key in meta and int(meta[dim_key]) != blocks[attr].n_rows:
            raise ValueError(
                f"block {attr}: declared {dim_key}={meta[dim_key]} does not "
                f"match matrix dimension {blocks[attr].n_rows}")

    system = ThreeFieldSystem(K=blocks["K"], A=blocks["A"], P=blocks["P"],
                              Q=blocks["Q"], B=blocks["B"], dt=dt,
                              theta=theta)
    if "gamma" in meta:
        declared = float(meta["gamma"])
        if abs(declared - system.gamma) > 1e-12 * max(abs(declared), 1.0):
            raise ValueError(
                f"metadata gamma={declared} inconsistent with "
                f"theta*dt={system.gamma}")

    rhs = BlockVector.zeros(system)
    rhs_paths = {name: os.path.join(source, fname)
                 for name, fname in pio.RHS_FILES.items()}
    if all(os.path.exists(p) for p in rhs_paths.values()):
        parts = {}
        for name, path in rhs_paths.items():
            try:
                parts[name] = pio.read_vector(path)
            except ValueError as exc:
                raise ValueError(
                    f"right-hand side {name}: {exc}") from exc
        expected = {"u": system.n_u, "q": system.n_q, "p": system.n_p}
        for name, vec in parts.items():
            if vec.shape[0] != expected[name]:
                raise ValueError(
                    f"right-hand side {name}: length {vec.shape[0]} does "
                    f"not match block dimension {expected[name]}")
        rhs = BlockVector(parts["u"], parts["q"], parts["p"])
    return system, rhs

"""Matrix Market I/O and block-system serialization.

Coordinate files (real, general or symmetric) round-trip
:class:`~poroprec.sparse.SparseMatrix`; symmetric input is expanded to full
storage on read.  Dense vectors use the array format.  A block system
serializes as five coordinate files (K, A, P, Q, B), a key-value metadata
text file, and three right-hand-side vector files.
"""

from __future__ import annotations

import os

import numpy as np

from .sparse import SparseMatrix, from_coo

_COORD_HEADER = "%%MatrixMarket matrix coordinate real {sym}\n"
_ARRAY_HEADER = "%%MatrixMarket matrix array real general\n"

#: filenames used by save_block_system / load_block_system
BLOCK_FILES = {
    "K": "K.mtx", "A": "A.mtx", "P": "P.mtx", "Q": "Q.mtx", "B": "B.mtx",
}
META_FILE = "metadata.txt"
RHS_FILES = {"u": "rhs_u.mtx", "q": "rhs_q.mtx", "p": "rhs_p.mtx"}


def _parse_header(line: str, path):
    parts = line.strip().lower().split()
    if (len(parts) < 5 or parts[0] != "%%matrixmarket"
            or parts[1] != "matrix"):
        raise ValueError(f"{path}: not a Matrix Market file")
    layout, field, sym = parts[2], parts[3], parts[4]
    if field != "real":
        raise ValueError(f"{path}: only real matrices are supported")
    if sym not in ("general", "symmetric"):
        raise ValueError(f"{path}: unsupported symmetry '{sym}'")
    return layout, sym


def read_matrix_market(path) -> SparseMatrix:
    """Read a coordinate-format file; symmetric storage is expanded."""
    with open(path) as fh:
        layout, sym = _parse_header(fh.readline(), path)
        if layout != "coordinate":
            raise ValueError(f"{path}: expected coordinate layout")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        n_rows, n_cols, nnz = (int(tok) for tok in line.split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        for t in range(nnz):
            tok = fh.readline().split()
            rows[t] = int(tok[0]) - 1
            cols[t] = int(tok[1]) - 1
            vals[t] = float(tok[2])
    if sym == "symmetric":
        off = rows != cols
        rows = np.concatenate((rows, cols[off]))
        cols = np.concatenate((cols, rows[:nnz][off]))
        vals = np.concatenate((vals, vals[:nnz][off]))
    return from_coo(n_rows, n_cols, rows, cols, vals)


def write_matrix_market(path, M: SparseMatrix, symmetric: bool = False):
    """Write coordinate format; symmetric output stores the lower triangle."""
    counts = np.diff(M.row_offsets)
    rows = np.repeat(np.arange(M.n_rows, dtype=np.int64), counts)
    cols = M.col_indices
    vals = M.values
    if symmetric:
        if M.n_rows != M.n_cols:
            raise ValueError("symmetric output requires a square matrix")
        keep = cols <= rows
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    with open(path, "w") as fh:
        fh.write(_COORD_HEADER.format(
            sym="symmetric" if symmetric else "general"))
        fh.write(f"{M.n_rows} {M.n_cols} {rows.size}\n")
        for r, c, v in zip(rows, cols, vals):
            fh.write(f"{r + 1} {c + 1} {v:.17g}\n")


def read_vector(path) -> np.ndarray:
    """Read a dense vector stored in array format (single column)."""
    with open(path) as fh:
        layout, sym = _parse_header(fh.readline(), path)
        if layout != "array":
            raise ValueError(f"{path}: expected array layout")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        n_rows, n_cols = (int(tok) for tok in line.split())
        if n_cols != 1:
            raise ValueError(f"{path}: expected a single-column vector")
        return np.array([float(fh.readline()) for _ in range(n_rows)])


def write_vector(path, v):
    v = np.asarray(v, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write(_ARRAY_HEADER)
        fh.write(f"{v.size} 1\n")
        for x in v:
            fh.write(f"{x:.17g}\n")


def write_metadata(path, entries: dict):
    """key = value text file, one entry per line."""
    with open(path, "w") as fh:
        for key, val in entries.items():
            fh.write(f"{key} = {val}\n")


def read_metadata(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def save_block_system(directory, system, rhs=None, extra_metadata=None):
    """Serialize a ThreeFieldSystem (and optional rhs) into a directory."""
    os.makedirs(directory, exist_ok=True)
    for name, fname in BLOCK_FILES.items():
        write_matrix_market(os.path.join(directory, fname),
                            getattr(system, name))
    meta = {
        "gamma": repr(system.gamma),
        "theta": repr(system.theta),
        "dt": repr(system.dt),
        "n_u": system.n_u,
        "n_q": system.n_q,
        "n_p": system.n_p,
    }
    if extra_metadata:
        meta.update(extra_metadata)
    write_metadata(os.path.join(directory, META_FILE), meta)
    if rhs is not None:
        for seg, fname in RHS_FILES.items():
            write_vector(os.path.join(directory, fname), getattr(rhs, seg))

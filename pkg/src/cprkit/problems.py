"""Synthetic problem sequences standing in for a simulator's Newton loop.

The generator builds 7-point-stencil grids with one 3x3 block per cell:
the pressure row is a heterogeneous anisotropic diffusion operator over a
log-normal permeability field, the two saturation rows carry upwind
convection plus a time-term diagonal, and the inter-variable couplings scale
with ``drift``.  Successive systems random-walk the field coefficients by
O(drift), so a preconditioner built early in the sequence stays useful for a
while - exactly the situation the adaptive setup exploits.  Everything is a
pure function of the seed.

Sequences can also be loaded from disk through a JSON manifest pointing at
MatrixMarket files, which is how externally recorded Jacobians come in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mmio import (
    read_block_matrix_market,
    read_matrix_market,
    read_vector,
    write_block_matrix_market,
    write_matrix_market,
    write_vector,
)
from .sparse import BlockCsrMatrix, CsrMatrix, spmv

__all__ = [
    "ProblemSequence",
    "generate_blackoil_like_sequence",
    "save_sequence",
    "load_sequence",
    "poisson_2d",
]


@dataclass
class ProblemSequence:
    systems: list[tuple[BlockCsrMatrix | CsrMatrix, np.ndarray]]
    provenance: dict = field(default_factory=dict)

    @property
    def block_size(self) -> int:
        A = self.systems[0][0]
        return A.block_size if isinstance(A, BlockCsrMatrix) else 1

    def __len__(self) -> int:
        return len(self.systems)


def _neighbor_links(nx: int, ny: int, nz: int):
    """(cell_a, cell_b, axis) for every face of the structured grid;
    x varies fastest."""
    links = []
    for iz in range(nz):
        for iy in range(ny):
            for ix in range(nx):
                c = ix + nx * (iy + ny * iz)
                if ix + 1 < nx:
                    links.append((c, c + 1, 0))
                if iy + 1 < ny:
                    links.append((c, c + nx, 1))
                if iz + 1 < nz:
                    links.append((c, c + nx * ny, 2))
    return np.array(links, dtype=np.int64).reshape(-1, 3)


def generate_blackoil_like_sequence(nx: int, ny: int, nz: int, nsteps: int,
                                    drift: float, seed: int) -> ProblemSequence:
    """Deterministic-by-seed sequence of 3x3-block 7-point systems.

    drift = 0 decouples the variables and makes every step identical;
    drift > 0 scales the couplings and random-walks the coefficients per
    step.
    """
    if min(nx, ny, nz) < 1 or nsteps < 1:
        raise ValueError("grid dimensions and nsteps must be >= 1")
    rng = np.random.default_rng(seed)
    ncells = nx * ny * nz
    links = _neighbor_links(nx, ny, nz)
    aniso = np.array([1.0, 1.0, 0.2])

    logk = rng.normal(0.0, 1.0, ncells)
    conv_scale = rng.uniform(0.2, 0.5, ncells)
    couple = rng.standard_normal((ncells, 6)) * 0.5
    # manufactured solution: smooth per-cell profile over the flattened index
    t = np.linspace(0.0, 2.0 * np.pi, ncells, endpoint=False)
    xstar = np.empty(3 * ncells)
    xstar[0::3] = 1.0 + 0.3 * np.sin(t)
    xstar[1::3] = 0.4 + 0.2 * np.cos(2.0 * t)
    xstar[2::3] = 0.5 - 0.1 * np.sin(3.0 * t)

    systems = []
    for step in range(nsteps):
        if step > 0:
            logk = logk + drift * rng.normal(0.0, 1.0, ncells)
            conv_scale = conv_scale * np.exp(drift * rng.normal(0.0, 1.0, ncells))
        perm = np.exp(logk)
        A = _assemble_step(ncells, links, aniso, perm, conv_scale, couple, drift)
        systems.append((A, spmv(A, xstar)))
    return ProblemSequence(systems, provenance={
        "kind": "synthetic", "nx": nx, "ny": ny, "nz": nz,
        "nsteps": nsteps, "drift": drift, "seed": seed,
    })


def _assemble_step(ncells, links, aniso, perm, conv_scale, couple, drift) -> BlockCsrMatrix:
    a, bvert, axis = links[:, 0], links[:, 1], links[:, 2]
    trans = aniso[axis] * 2.0 / (1.0 / perm[a] + 1.0 / perm[bvert])  # harmonic mean
    conv = conv_scale[a] * trans  # upwind from the lower-index (upstream) cell

    nl = links.shape[0]
    rows = np.empty(2 * nl + ncells, dtype=np.int64)
    cols = np.empty_like(rows)
    blocks = np.zeros((rows.shape[0], 3, 3))

    # off-diagonal blocks: pressure diffusion both ways, convection upwind
    rows[:nl], cols[:nl] = a, bvert
    blocks[:nl, 0, 0] = -trans
    rows[nl:2 * nl], cols[nl:2 * nl] = bvert, a
    blocks[nl:2 * nl, 0, 0] = -trans
    blocks[nl:2 * nl, 1, 1] = -conv
    blocks[nl:2 * nl, 2, 2] = -0.8 * conv
    # saturation-pressure coupling on the upwind side, scaled by drift
    blocks[nl:2 * nl, 1, 0] = -drift * 0.5 * conv
    blocks[nl:2 * nl, 2, 0] = -drift * 0.3 * conv

    # diagonal blocks: accumulation + outflow terms, drift-scaled couplings
    diag_idx = 2 * nl + np.arange(ncells)
    rows[diag_idx] = np.arange(ncells)
    cols[diag_idx] = np.arange(ncells)
    p_diag = 0.05 * perm.copy()
    w_diag = np.full(ncells, 1.0)
    o_diag = np.full(ncells, 1.0)
    np.add.at(p_diag, a, trans)
    np.add.at(p_diag, bvert, trans)
    np.add.at(w_diag, bvert, conv)
    np.add.at(o_diag, bvert, 0.8 * conv)
    blocks[diag_idx, 0, 0] = p_diag
    blocks[diag_idx, 1, 1] = w_diag
    blocks[diag_idx, 2, 2] = o_diag
    blocks[diag_idx, 0, 1] = drift * couple[:, 0]
    blocks[diag_idx, 0, 2] = drift * couple[:, 1]
    blocks[diag_idx, 1, 0] = drift * couple[:, 2]
    blocks[diag_idx, 1, 2] = drift * 0.2 * couple[:, 3]
    blocks[diag_idx, 2, 0] = drift * couple[:, 4]
    blocks[diag_idx, 2, 1] = drift * 0.2 * couple[:, 5]
    return BlockCsrMatrix.from_block_coo(3, rows, cols, blocks, (ncells, ncells),
                                         sum_duplicates=True)


def save_sequence(seq: ProblemSequence, out_dir) -> Path:
    """Write matrices/rhs as MatrixMarket plus a manifest.json; returns the
    manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, (A, rhs) in enumerate(seq.systems, start=1):
        mpath = out / f"system_{k:03d}.mtx"
        vpath = out / f"rhs_{k:03d}.mtx"
        if isinstance(A, BlockCsrMatrix):
            write_block_matrix_market(mpath, A)
            bs = A.block_size
        else:
            write_matrix_market(mpath, A)
            bs = 1
        write_vector(vpath, rhs)
        entries.append({"matrix": mpath.name, "rhs": vpath.name, "block_size": bs})
    manifest = {"systems": entries, "provenance": seq.provenance}
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2) + "\n")
    return mpath


def load_sequence(manifest_path) -> ProblemSequence:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    systems = []
    for entry in manifest["systems"]:
        path = base / entry["matrix"]
        if entry.get("block_size", 1) > 1:
            A = read_block_matrix_market(path)
        else:
            A = read_matrix_market(path)
        rhs = read_vector(base / entry["rhs"])
        systems.append((A, rhs))
    return ProblemSequence(systems, provenance=manifest.get("provenance", {}))


def poisson_2d(nx: int, ny: int) -> CsrMatrix:
    """5-point Laplacian on an nx-by-ny grid (test/verify gallery)."""
    n = nx * ny
    rows, cols, vals = [], [], []
    for iy in range(ny):
        for ix in range(nx):
            i = ix + nx * iy
            rows.append(i); cols.append(i); vals.append(4.0)
            for jx, jy in ((ix - 1, iy), (ix + 1, iy), (ix, iy - 1), (ix, iy + 1)):
                if 0 <= jx < nx and 0 <= jy < ny:
                    rows.append(i); cols.append(jx + nx * jy); vals.append(-1.0)
    return CsrMatrix.from_coo(rows, cols, vals, (n, n))

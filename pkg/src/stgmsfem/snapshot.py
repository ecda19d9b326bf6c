"""Local snapshot spaces: transport solves on (oversampled) space-time regions
driven by fine-grid nodal deltas on the initial face and the inflow boundary."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fe_core
from .fe_core import CG, DofLayout
from .field import VelocityField
from .linalg import BlockTriangularLU, SingularMatrixError
from .mesh import Region, SpaceTimeMesh

INITIAL = 0
INFLOW = 1


@dataclass(frozen=True)
class DeltaSet:
    """One entry per snapshot generator: kind (INITIAL/INFLOW), global node, level.

    An INITIAL delta at a node lying on an inflow edge also carries the
    matching inflow data at the first level, so that the deltas sum to one on
    the whole data boundary.
    """

    kind: np.ndarray
    node: np.ndarray
    level: np.ndarray

    def __len__(self) -> int:
        return int(self.kind.size)

    def count(self, kind: int) -> int:
        return int(np.sum(self.kind == kind))


def delta_boundary_set(layout: DofLayout, vel: VelocityField) -> DeltaSet:
    inflow = fe_core.inflow_load(layout, vel)
    init_nodes = layout.nodes()
    in_nodes = inflow.inflow_nodes
    levels = np.arange(1, layout.n_steps + 1)
    kind = np.concatenate([np.full(init_nodes.size, INITIAL), np.full(in_nodes.size * levels.size, INFLOW)])
    node = np.concatenate([init_nodes, np.repeat(in_nodes, levels.size)])
    level = np.concatenate([np.zeros(init_nodes.size, dtype=np.int64), np.tile(levels, in_nodes.size)])
    return DeltaSet(kind, node, level)


def delta_rhs(layout: DofLayout, vel: VelocityField, deltas: DeltaSet,
              inflow: fe_core.InflowLoad | None = None) -> sp.csr_array:
    """Right-hand sides (one column per delta) of the local problems."""
    m = layout.mesh
    inflow = fe_core.inflow_load(layout, vel) if inflow is None else inflow
    n = len(deltas)
    col_of_node = np.full(m.n_nodes, -1, dtype=np.int64)
    init = np.flatnonzero(deltas.kind == INITIAL)
    col_of_node[deltas.node[init]] = init
    # f = nodal hat: every cell vertex sitting on the node gets value 1
    cv_nodes = m.cell_nodes[layout.cells].ravel()
    cols = col_of_node[cv_nodes]
    ok = cols >= 0
    sel = sp.csr_array((np.ones(ok.sum()), (np.flatnonzero(ok), cols[ok])), shape=(cv_nodes.size, n))
    R = inflow.matrix.shape[1]
    bpos = np.full(m.n_nodes, -1, dtype=np.int64)
    bpos[inflow.nodes] = np.arange(inflow.nodes.size)
    gcol = np.where(bpos[deltas.node] >= 0, inflow.column(bpos[deltas.node], deltas.level), -1)
    ok = gcol >= 0
    gsel = sp.csr_array((np.ones(ok.sum()), (gcol[ok], np.flatnonzero(ok))), shape=(R, n))
    return (fe_core.initial_load(layout) @ sel + inflow.matrix @ gsel).tocsr()


@dataclass
class SnapshotSpace:
    cell: int
    slab: int
    region: Region
    layout: DofLayout  # oversampled region
    target: DofLayout  # K_i times the slab
    deltas: DeltaSet
    restricted: np.ndarray  # (target.n_dofs, n_snap)
    full: np.ndarray | None = None  # (layout.n_dofs, n_snap)
    residual: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.deltas)

    def partition_error(self) -> float:
        """max |sum_j psi_j - 1| over the region (or the target when the full set was dropped)."""
        M = self.restricted if self.full is None else self.full
        return float(np.abs(M.sum(axis=1) - 1.0).max(initial=0.0))


def generate_snapshots(mesh: SpaceTimeMesh, vel: VelocityField, cell: int, slab: int, mode: str = CG,
                       oversampling: bool = True, keep_full: bool | None = None,
                       region: Region | None = None) -> SnapshotSpace:
    """Solve the local transport problem for every delta and restrict to ``K_i x slab``."""
    if region is None:
        region = mesh.oversampled_region(cell, slab) if oversampling else mesh.cell_region(cell, slab)
    layout = DofLayout(mesh, region, mode)
    target = DofLayout(mesh, mesh.cell_region(cell, slab), mode)
    K = fe_core.slab_matrix(layout, vel)
    inflow = fe_core.inflow_load(layout, vel)
    deltas = delta_boundary_set(layout, vel)
    rhs = delta_rhs(layout, vel, deltas, inflow).toarray(order="F")
    residual = 0.0
    try:
        if len(deltas):
            lu = BlockTriangularLU(K)
            psi = lu.solve(rhs)
            residual = lu.last_residual
        else:
            psi = np.zeros((layout.n_dofs, 0))
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"local solve failed for cell {cell}, slab {slab}: {exc}", exc.row) from exc
    if psi.ndim == 1:
        psi = psi[:, None]
    idx = fe_core.restriction_indices(layout, target, region.n_pre)
    if keep_full is None:
        keep_full = mode == CG
    return SnapshotSpace(cell, slab, region, layout, target, deltas, psi[idx], psi if keep_full else None,
                         residual, {"n_pre": region.n_pre})


def pack_snapshot_matrix(space: SnapshotSpace, restricted: bool = True) -> np.ndarray:
    """Snapshots as columns, in generator order."""
    M = space.restricted if restricted else space.full
    if M is None:
        raise ValueError("unrestricted snapshots were not retained")
    return np.asarray(M)

"""Tensor Q1(space) x P1(time) space-time elements and the upwind slab form.

A :class:`DofLayout` numbers the degrees of freedom of one space-time window
(a box of fine cells times a run of fine time steps).  Functions are
continuous inside a *patch* and may jump across patch boundaries:

* ``cg`` mode: patches are coarse blocks (clipped to the box) and time is
  continuous except at the listed break levels;
* ``dg`` mode: patches are single fine cells and every fine time level is a
  break.

Every element ``(cell, step)`` owns eight local functions indexed
``b * 4 + a`` with ``b`` the time end (0 start, 1 end) and ``a`` the vertex
((x0,y0), (x1,y0), (x0,y1), (x1,y1)).  Matrices are stored ``[test, trial]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .field import VelocityField
from .linalg import assemble_csr
from .mesh import Region, SpaceTimeMesh

CG = "cg"
DG = "dg"
MODES = (CG, DG)

M1 = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
K1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
# integral of T_b' T_d over a unit-free step: rows trial b, columns test d
TDER = np.array([[-0.5, -0.5], [0.5, 0.5]])
GAUSS_PTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS_WTS = np.array([0.5, 0.5])

VX = np.array([0, 1, 0, 1])
VY = np.array([0, 0, 1, 1])
# trace vertices along an edge, ordered by increasing coordinate
SIDE_VERTS = {"left": (0, 2), "right": (1, 3), "bottom": (0, 1), "top": (2, 3)}


def shape_1d(s):
    s = np.asarray(s, dtype=float)
    return np.stack([1 - s, s], axis=-1)


def shape_q1(s, r):
    """Q1 shape values at reference points; trailing axis is the vertex."""
    Ns, Nr = shape_1d(s), shape_1d(r)
    return Ns[..., VX] * Nr[..., VY]


def spatial_mass(hx: float, hy: float) -> np.ndarray:
    return hx * hy * M1[VX][:, VX] * M1[VY][:, VY]


def spatial_stiffness(hx: float, hy: float) -> np.ndarray:
    return (hy / hx) * K1[VX][:, VX] * M1[VY][:, VY] + (hx / hy) * M1[VX][:, VX] * K1[VY][:, VY]


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


class DofLayout:
    def __init__(self, mesh: SpaceTimeMesh, region: Region, mode: str = CG):
        self.mesh = mesh
        self.region = region
        self.mode = check_mode(mode)
        self.box = region.box
        self.n_steps = region.n_steps
        self.t_start = region.t_start
        self.dt = mesh.dt
        i0, i1, j0, j1 = self.box
        self.nbx, self.nby = i1 - i0, j1 - j0
        self.cells = mesh.cells_in_box(self.box)
        self.n_cells = self.cells.size
        self.local_of = np.full(mesh.n_cells, -1, dtype=np.int64)
        self.local_of[self.cells] = np.arange(self.n_cells)
        if mode == DG:
            self.breaks = tuple(range(1, self.n_steps))
        elif region.n_pre > 0:
            self.breaks = (region.n_pre,)
        else:
            self.breaks = ()
        self._build()

    # -- numbering ---------------------------------------------------------
    def _build(self):
        m = self.mesh
        i0, i1, j0, j1 = self.box
        jj, ii = np.divmod(np.arange(self.n_cells), self.nbx)
        ii, jj = ii + i0, jj + j0
        if self.mode == DG:
            patch = np.arange(self.n_cells)
            pbox = np.column_stack([ii, ii + 1, jj, jj + 1])
        else:
            coarse = m.cell_coarse[self.cells]
            uniq, patch = np.unique(coarse, return_inverse=True)
            pbox = np.array([m.coarse_box(k) for k in uniq]).reshape(-1, 4)
            pbox[:, 0] = np.maximum(pbox[:, 0], i0)
            pbox[:, 1] = np.minimum(pbox[:, 1], i1)
            pbox[:, 2] = np.maximum(pbox[:, 2], j0)
            pbox[:, 3] = np.minimum(pbox[:, 3], j1)
        self.cell_patch = patch
        self.patch_box = pbox
        pw = pbox[:, 1] - pbox[:, 0]
        npn = (pw + 1) * (pbox[:, 3] - pbox[:, 2] + 1)

        slot_start = np.empty(self.n_steps, dtype=np.int64)
        slot_end = np.empty(self.n_steps, dtype=np.int64)
        nxt = 1
        for k in range(self.n_steps):
            if k == 0:
                slot_start[k] = 0
            elif k in self.breaks:
                slot_start[k] = nxt
                nxt += 1
            else:
                slot_start[k] = slot_end[k - 1]
            slot_end[k] = nxt
            nxt += 1
        self.n_slots = nxt
        self.slot_start, self.slot_end = slot_start, slot_end

        sizes = self.n_slots * npn
        self.patch_offset = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.n_dofs = int(sizes.sum())
        p = patch
        lx = ii[:, None] + VX[None, :] - pbox[p, 0][:, None]
        ly = jj[:, None] + VY[None, :] - pbox[p, 2][:, None]
        node_local = ly * (pw[p] + 1)[:, None] + lx  # (n_cells, 4)
        slots = np.stack([slot_start, slot_end], axis=1)  # (n_steps, 2)
        self.elem_dofs = (
            self.patch_offset[p][:, None, None, None]
            + slots[None, :, :, None] * npn[p][:, None, None, None]
            + node_local[:, None, None, :]
        ).reshape(self.n_cells, self.n_steps, 8)
        self.cell_ij = np.column_stack([ii, jj])

    @cached_property
    def dof_coords(self) -> np.ndarray:
        """(n_dofs, 3) array of (x, y, t) for every degree of freedom."""
        m = self.mesh
        xy = m.node_xy[m.cell_nodes[self.cells]]  # (n_cells, 4, 2)
        out = np.empty((self.n_dofs, 3))
        for k in range(self.n_steps):
            for b in range(2):
                d = self.elem_dofs[:, k, b * 4:(b + 1) * 4]
                out[d, 0] = xy[..., 0]
                out[d, 1] = xy[..., 1]
                out[d, 2] = self.t_start + (k + b) * self.dt
        return out

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_steps + 1)

    def trace_dofs(self, level: int, side: str = "+") -> np.ndarray:
        """(n_cells, 4) dofs of the trace at a fine level; ``side`` picks T^+ or T^-."""
        if side == "+":
            if not 0 <= level < self.n_steps:
                raise IndexError(f"no step starts at level {level}")
            return self.elem_dofs[:, level, 0:4]
        if not 0 < level <= self.n_steps:
            raise IndexError(f"no step ends at level {level}")
        return self.elem_dofs[:, level - 1, 4:8]

    # -- edges ---------------------------------------------------------------
    @cached_property
    def edges(self) -> "LayoutEdges":
        m = self.mesh
        e = np.unique(m.cell_edges[self.cells])
        ec = m.edge_cells[e]
        lm = np.where(ec[:, 0] >= 0, self.local_of[np.maximum(ec[:, 0], 0)], -1)
        lp = np.where(ec[:, 1] >= 0, self.local_of[np.maximum(ec[:, 1], 0)], -1)
        vertical = e < m.n_vertical
        interior = (lm >= 0) & (lp >= 0)
        same_patch = np.zeros(e.size, dtype=bool)
        same_patch[interior] = self.cell_patch[lm[interior]] == self.cell_patch[lp[interior]]
        return LayoutEdges(e, lm, lp, vertical, interior, same_patch)

    def side_trace_dofs(self, local_cells: np.ndarray, vertical: np.ndarray, minus_side: bool) -> np.ndarray:
        """(n, n_steps, 4) dofs of a cell's trace on an edge, index ``b * 2 + alpha``.

        ``minus_side`` means the cell lies left of / below the edge.
        """
        if minus_side:
            va = np.where(vertical[:, None], SIDE_VERTS["right"], SIDE_VERTS["top"])
        else:
            va = np.where(vertical[:, None], SIDE_VERTS["left"], SIDE_VERTS["bottom"])
        cols = np.concatenate([va, va + 4], axis=1)  # (n, 4)
        ed = self.elem_dofs[local_cells]  # (n, n_steps, 8)
        return np.take_along_axis(ed, cols[:, None, :].repeat(self.n_steps, axis=1), axis=2)

    def boundary_nodes(self) -> np.ndarray:
        """Global ids of the nodes on the box boundary, lexicographic."""
        i0, i1, j0, j1 = self.box
        ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1))
        on = (ii == i0) | (ii == i1) | (jj == j0) | (jj == j1)
        return self.mesh.node_id(ii[on], jj[on])

    def nodes(self) -> np.ndarray:
        i0, i1, j0, j1 = self.box
        ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1))
        return self.mesh.node_id(ii.ravel(), jj.ravel())


@dataclass(frozen=True)
class LayoutEdges:
    ids: np.ndarray
    minus: np.ndarray  # local cell on the left/below, -1 outside the box
    plus: np.ndarray
    vertical: np.ndarray
    interior: np.ndarray
    same_patch: np.ndarray


# ---------------------------------------------------------------------------
# Functions on a layout


@dataclass
class SlabFunction:
    layout: DofLayout
    coeffs: np.ndarray
    slab: int = 0

    @property
    def mode(self) -> str:
        return self.layout.mode

    def trace(self, level: int, side: str = "+") -> np.ndarray:
        """(n_cells, 4) cell-vertex values at a fine level."""
        return self.coeffs[self.layout.trace_dofs(level, side)]

    def initial_trace(self) -> np.ndarray:
        return self.trace(0, "+")

    def terminal_trace(self) -> np.ndarray:
        return self.trace(self.layout.n_steps, "-")

    def evaluate_local(self, cell: np.ndarray, step: np.ndarray, s, r, tau) -> np.ndarray:
        """Values at reference point ``(s, r, tau)`` of element ``(cell, step)``."""
        d = self.layout.elem_dofs[cell, step]  # (..., 8)
        N = shape_q1(s, r)
        T = shape_1d(tau)
        c = self.coeffs[d].reshape(*d.shape[:-1], 2, 4)
        return np.einsum("...ba,...a,...b->...", c, N, T)

    def evaluate(self, x, y, t, time_side: str = "-") -> np.ndarray:
        """Pointwise evaluation; points on a fine level use the T^- (or T^+) side."""
        lay, m = self.layout, self.layout.mesh
        x, y, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, t)))
        x0, _, y0, _ = m.config.domain
        fx = (x - x0) / m.hx - lay.box[0]
        fy = (y - y0) / m.hy - lay.box[2]
        ci = np.clip(np.floor(fx), 0, lay.nbx - 1).astype(int)
        cj = np.clip(np.floor(fy), 0, lay.nby - 1).astype(int)
        ft = (t - lay.t_start) / lay.dt
        if time_side == "-":
            k = np.clip(np.ceil(ft) - 1, 0, lay.n_steps - 1).astype(int)
        else:
            k = np.clip(np.floor(ft), 0, lay.n_steps - 1).astype(int)
        cell = cj * lay.nbx + ci
        return self.evaluate_local(cell, k, fx - ci, fy - cj, ft - k)


def to_cell_vertex(mesh: SpaceTimeMesh, cells: np.ndarray, f) -> np.ndarray:
    """Cell-vertex values (n, 4) from a callable f(x, y), nodal vector or (n, 4) array."""
    if callable(f):
        xy = mesh.node_xy[mesh.cell_nodes[cells]]
        return np.asarray(np.broadcast_to(f(xy[..., 0], xy[..., 1]), xy.shape[:2]), dtype=float)
    f = np.asarray(f, dtype=float)
    if np.ndim(f) == 0:
        return np.full((cells.size, 4), float(f))
    if f.shape == (mesh.n_nodes,):
        return f[mesh.cell_nodes[cells]]
    if f.shape == (mesh.n_cells, 4):
        return f[cells]
    if f.shape == (cells.size, 4):
        return f
    raise ValueError(f"cannot interpret initial data of shape {f.shape}")


# ---------------------------------------------------------------------------
# Jump operators


def space_jump(w: SlabFunction, vel: VelocityField, edge: int, step: int, s=GAUSS_PTS, tau=0.0) -> np.ndarray:
    """Vector jump ``[w]`` at parameter points ``s`` along a fine edge.

    The upwind side is the cell out of which ``v`` points; when ``v . n = 0``
    the cell left of/below the edge is taken as upwind.
    """
    lay, m = w.layout, w.layout.mesh
    ec = m.edge_cells[edge]
    vertical = edge < m.n_vertical
    axis = np.array([1.0, 0.0]) if vertical else np.array([0.0, 1.0])
    s = np.atleast_1d(np.asarray(s, dtype=float))
    lm = lay.local_of[ec[0]] if ec[0] >= 0 else -1
    lp = lay.local_of[ec[1]] if ec[1] >= 0 else -1

    def side_value(local_cell, minus_side):
        if local_cell < 0:
            return None
        if vertical:
            ss, rr = (np.ones_like(s), s) if minus_side else (np.zeros_like(s), s)
        else:
            ss, rr = (s, np.ones_like(s)) if minus_side else (s, np.zeros_like(s))
        cell = np.full(s.shape, local_cell)
        return w.evaluate_local(cell, np.full(s.shape, step), ss, rr, np.full(s.shape, tau))

    u_m, u_p = side_value(lm, True), side_value(lp, False)
    flux = vel.flux[edge]
    if flux >= 0:  # minus cell upwind, n+ = +axis
        up, down, n_up = u_m, u_p, axis
    else:
        up, down, n_up = u_p, u_m, -axis
    out = np.zeros((s.size, 2))
    if up is not None:
        out += up[:, None] * n_up
    if down is not None:
        out -= down[:, None] * n_up
    return out


def time_jump(w: SlabFunction, level: int, initial: np.ndarray | None = None) -> np.ndarray:
    """Cell-vertex values of ``[[w]]`` at a fine level of the layout.

    Level 0 returns ``w(T^+)`` minus ``initial`` (the previous slab's terminal
    trace) when given, else ``w(T^+)`` itself.
    """
    plus = w.trace(level, "+")
    if level == 0:
        return plus if initial is None else plus - initial
    return plus - w.trace(level, "-")


# ---------------------------------------------------------------------------
# Assembly helpers


def _scatter(test_dofs, trial_dofs, local):
    """COO triplets from per-block dof arrays and local matrices ``local[..., test, trial]``."""
    test_dofs = np.asarray(test_dofs)
    trial_dofs = np.asarray(trial_dofs)
    local = np.broadcast_to(local, test_dofs.shape[:-1] + (test_dofs.shape[-1], trial_dofs.shape[-1]))
    rows = np.broadcast_to(test_dofs[..., :, None], local.shape)
    cols = np.broadcast_to(trial_dofs[..., None, :], local.shape)
    return rows.ravel(), cols.ravel(), local.ravel()


class _Acc:
    def __init__(self, n_rows, n_cols=None):
        self.shape = (n_rows, n_rows if n_cols is None else n_cols)
        self.parts = []

    def add(self, test_dofs, trial_dofs, local):
        self.parts.append(_scatter(test_dofs, trial_dofs, local))

    def tocsr(self) -> sp.csr_array:
        if not self.parts:
            return sp.csr_array(self.shape)
        r, c, v = (np.concatenate(x) for x in zip(*self.parts))
        return assemble_csr(r, c, v, self.shape)


def _st_local(space: np.ndarray, time: np.ndarray) -> np.ndarray:
    """Element matrix [test(d,c), trial(b,a)] = space[..., a, c] * time[b, d]."""
    E = np.einsum("...ac,bd->...dcba", space, time)
    return E.reshape(*space.shape[:-2], 8, 8)


def _edge_local(weight: np.ndarray, dt: float) -> np.ndarray:
    """[test(d,beta), trial(b,alpha)] = weight * M1[alpha,beta] * dt * M1[b,d]."""
    loc = np.einsum("xy,bd->dybx", M1, dt * M1).reshape(4, 4)
    return weight[:, None, None] * loc[None]


def convection_local(layout: DofLayout, vel: VelocityField) -> np.ndarray:
    """(n_cells, 4, 4) with entry [a, c] = int N_a (v . grad N_c)."""
    m = layout.mesh
    hx, hy = m.hx, m.hy
    S, R = np.meshgrid(GAUSS_PTS, GAUSS_PTS, indexing="ij")
    W = np.outer(GAUSS_WTS, GAUSS_WTS)
    s, r, w = S.ravel(), R.ravel(), W.ravel() * hx * hy
    N = shape_q1(s, r)  # (4q, 4)
    dNs = np.stack([-(1 - r), (1 - r), -r, r], axis=-1) / hx
    dNr = np.stack([-(1 - s), -s, (1 - s), s], axis=-1) / hy
    vx, vy = vel.evaluate(layout.cells[:, None], s[None, :], r[None, :])  # (n, 4q)
    grad_term = vx[..., None] * dNs[None] + vy[..., None] * dNr[None]  # (n, q, c)
    return np.einsum("q,qa,nqc->nac", w, N, grad_term)


# ---------------------------------------------------------------------------
# Forms


def volume_matrix(layout: DofLayout, vel: VelocityField) -> sp.csr_array:
    """int int (du/dt) w - u v . grad w over every element."""
    m = layout.mesh
    Ms = spatial_mass(m.hx, m.hy)
    C = convection_local(layout, vel)
    E = _st_local(Ms[None], TDER[None][0]) - _st_local(C, layout.dt * M1)  # (n_cells, 8, 8)
    acc = _Acc(layout.n_dofs)
    ed = layout.elem_dofs
    acc.add(ed, ed, E[:, None])
    return acc.tocsr()


def material_derivative_matrix(layout: DofLayout, vel: VelocityField) -> sp.csr_array:
    """int int (du/dt + v . grad u) w over every element."""
    m = layout.mesh
    Ms = spatial_mass(m.hx, m.hy)
    C = convection_local(layout, vel).transpose(0, 2, 1)
    E = _st_local(Ms[None], TDER[None][0]) + _st_local(C, layout.dt * M1)
    acc = _Acc(layout.n_dofs)
    ed = layout.elem_dofs
    acc.add(ed, ed, E[:, None])
    return acc.tocsr()


def _upwind_parts(layout: DofLayout, vel: VelocityField, which: str):
    """Interior edges carrying upwind terms: ``active`` (between patches) or ``all``."""
    E = layout.edges
    sel = E.interior & (~E.same_patch if which == "active" else True)
    ids = E.ids[sel]
    flux = vel.flux[ids]
    vert = E.vertical[sel]
    tm = layout.side_trace_dofs(E.minus[sel], vert, True)
    tp = layout.side_trace_dofs(E.plus[sel], vert, False)
    return flux, tm, tp


def _boundary_parts(layout: DofLayout, vel: VelocityField):
    """Box-boundary edges: outward flux and the inside cell's trace dofs."""
    E = layout.edges
    on_minus = (E.minus >= 0) & (E.plus < 0)  # box lies left/below: outward = +normal
    on_plus = (E.plus >= 0) & (E.minus < 0)
    fluxes, traces = [], []
    if on_minus.any():
        fluxes.append(vel.flux[E.ids[on_minus]])
        traces.append(layout.side_trace_dofs(E.minus[on_minus], E.vertical[on_minus], True))
    if on_plus.any():
        fluxes.append(-vel.flux[E.ids[on_plus]])
        traces.append(layout.side_trace_dofs(E.plus[on_plus], E.vertical[on_plus], False))
    ids = np.concatenate([E.ids[on_minus], E.ids[on_plus]])
    if not fluxes:
        return ids, np.zeros(0), np.zeros((0, layout.n_steps, 4), dtype=np.int64)
    return ids, np.concatenate(fluxes), np.concatenate(traces)


def upwind_edge_matrix(layout: DofLayout, vel: VelocityField) -> sp.csr_array:
    """Upwind flux terms on patch interfaces plus the outflow boundary term."""
    acc = _Acc(layout.n_dofs)
    which = "all" if layout.mode == DG else "active"
    flux, tm, tp = _upwind_parts(layout, vel, which)
    # F > 0: minus side upwind; F < 0: plus side upwind; F = 0 contributes nothing
    for sel, up, down in ((flux > 0, tm, tp), (flux < 0, tp, tm)):
        if not sel.any():
            continue
        loc = _edge_local(np.abs(flux[sel]), layout.dt)[:, None]
        acc.add(up[sel], up[sel], loc)
        acc.add(down[sel], up[sel], -loc)
    _, out_flux, traces = _boundary_parts(layout, vel)
    sel = out_flux > 0
    if sel.any():
        acc.add(traces[sel], traces[sel], _edge_local(out_flux[sel], layout.dt)[:, None])
    return acc.tocsr()


def face_mass(layout: DofLayout, level: int, side: str = "+") -> sp.csr_array:
    m = layout.mesh
    d = layout.trace_dofs(level, side)
    acc = _Acc(layout.n_dofs)
    acc.add(d, d, spatial_mass(m.hx, m.hy)[None].transpose(0, 2, 1))
    return acc.tocsr()


def time_break_matrix(layout: DofLayout) -> sp.csr_array:
    """sum over interior break levels of int [[u]] w(T_p^+)."""
    m = layout.mesh
    Ms = spatial_mass(m.hx, m.hy).T[None]
    acc = _Acc(layout.n_dofs)
    for p in layout.breaks:
        plus, minus = layout.trace_dofs(p, "+"), layout.trace_dofs(p, "-")
        acc.add(plus, plus, Ms)
        acc.add(plus, minus, -Ms)
    return acc.tocsr()


def slab_matrix(layout: DofLayout, vel: VelocityField) -> sp.csr_array:
    """Sparse matrix of the per-slab bilinear form ``a(u, w)`` (rows: test)."""
    if vel.flux.size != layout.mesh.n_edges:
        raise ValueError("velocity field does not match the mesh")
    return (volume_matrix(layout, vel) + upwind_edge_matrix(layout, vel)
            + face_mass(layout, 0, "+") + time_break_matrix(layout)).tocsr()


def assemble_slab_form(layout: DofLayout, vel: VelocityField, trial=None, test=None) -> np.ndarray | sp.csr_array:
    """``a(trial_l, test_k)`` restricted to the given column spans (``None`` = full space)."""
    K = slab_matrix(layout, vel)
    return project(K, trial, test)


def project(K, trial=None, test=None):
    if trial is None and test is None:
        return K
    trial_m = sp.identity(K.shape[1], format="csr") if trial is None else trial
    test_m = trial_m if test is None else test
    out = test_m.T @ (K @ trial_m)
    return out.toarray() if sp.issparse(out) else np.asarray(out)


# ---------------------------------------------------------------------------
# Loads


def initial_load(layout: DofLayout) -> sp.csr_array:
    """Maps cell-vertex data (n_cells * 4) to ``int f w(T_start^+)``."""
    m = layout.mesh
    d = layout.trace_dofs(0, "+")
    cols = np.arange(layout.n_cells * 4).reshape(-1, 4)
    acc = _Acc(layout.n_dofs, layout.n_cells * 4)
    acc.add(d, cols, spatial_mass(m.hx, m.hy).T[None])
    return acc.tocsr()


@dataclass(frozen=True)
class InflowLoad:
    """``-int g w v.n`` on inflow box edges as a matrix over nodal g values.

    Columns are ``node_index * (n_steps + 1) + level`` with nodes from
    ``layout.boundary_nodes()``.
    """

    matrix: sp.csr_array
    nodes: np.ndarray
    inflow_nodes: np.ndarray  # subset of ``nodes`` touching an inflow edge
    n_levels: int

    def column(self, node_index, level):
        return np.asarray(node_index) * self.n_levels + np.asarray(level)


def inflow_load(layout: DofLayout, vel: VelocityField) -> InflowLoad:
    m = layout.mesh
    nodes = layout.boundary_nodes()
    pos = np.full(m.n_nodes, -1, dtype=np.int64)
    pos[nodes] = np.arange(nodes.size)
    nl = layout.n_steps + 1
    ids, out_flux, traces = _boundary_parts(layout, vel)
    sel = out_flux < 0
    acc = _Acc(layout.n_dofs, nodes.size * nl)
    inflow_nodes = np.zeros(0, dtype=np.int64)
    if sel.any():
        en = pos[m.edge_nodes[ids[sel]]]  # (ne, 2) boundary-node indices
        inflow_nodes = nodes[np.unique(en)]
        k = np.arange(layout.n_steps)
        # g columns in the same (b, alpha) order as the trace dofs
        cols = (en[:, None, None, :] * nl + (k[None, :, None, None] + np.arange(2)[None, None, :, None]))
        cols = cols.reshape(en.shape[0], layout.n_steps, 4)
        acc.add(traces[sel], cols, _edge_local(-out_flux[sel], layout.dt)[:, None])
    return InflowLoad(acc.tocsr(), nodes, inflow_nodes, nl)


def nodal_inflow_values(layout: DofLayout, g: Callable | float) -> np.ndarray:
    """Nodal values of g at (boundary node, level), flattened in InflowLoad column order."""
    nodes = layout.boundary_nodes()
    xy = layout.mesh.node_xy[nodes]
    t = layout.times()
    if callable(g):
        vals = g(xy[:, 0][:, None], xy[:, 1][:, None], t[None, :])
        vals = np.broadcast_to(np.asarray(vals, dtype=float), (nodes.size, t.size))
    else:
        vals = np.full((nodes.size, t.size), float(g))
    return np.ascontiguousarray(vals).ravel()


def assemble_rhs(layout: DofLayout, vel: VelocityField, f, g) -> np.ndarray:
    """Fine-space vector of ``F(w) = int f w(T^+) - int_{inflow} g w v.n``."""
    fv = to_cell_vertex(layout.mesh, layout.cells, f).ravel()
    F = initial_load(layout) @ fv
    if g is not None:
        F = F + inflow_load(layout, vel).matrix @ nodal_inflow_values(layout, g)
    return F


def assemble_slab_rhs(layout: DofLayout, vel: VelocityField, f, g, test=None) -> np.ndarray:
    F = assemble_rhs(layout, vel, f, g)
    return F if test is None else np.asarray(test.T @ F)


# ---------------------------------------------------------------------------
# Symmetric forms used by the norms and the spectral problems


def spacetime_mass(layout: DofLayout) -> sp.csr_array:
    m = layout.mesh
    E = _st_local(spatial_mass(m.hx, m.hy)[None], layout.dt * M1)
    acc = _Acc(layout.n_dofs)
    acc.add(layout.elem_dofs, layout.elem_dofs, E[:, None])
    return acc.tocsr()


def spacetime_stiffness(layout: DofLayout) -> sp.csr_array:
    """int int grad u . grad w (spatial gradient only)."""
    m = layout.mesh
    E = _st_local(spatial_stiffness(m.hx, m.hy)[None], layout.dt * M1)
    acc = _Acc(layout.n_dofs)
    acc.add(layout.elem_dofs, layout.elem_dofs, E[:, None])
    return acc.tocsr()


def edge_jump_mass(layout: DofLayout, vel: VelocityField, which: str = "active") -> sp.csr_array:
    """sum over interior edges of int |v.n| (u^- - u^+)(w^- - w^+)."""
    flux, tm, tp = _upwind_parts(layout, vel, which)
    acc = _Acc(layout.n_dofs)
    if flux.size:
        loc = _edge_local(np.abs(flux), layout.dt)[:, None]
        acc.add(tm, tm, loc)
        acc.add(tp, tp, loc)
        acc.add(tm, tp, -loc)
        acc.add(tp, tm, -loc)
    return acc.tocsr()


def boundary_abs_mass(layout: DofLayout, vel: VelocityField, kind: str = "all") -> sp.csr_array:
    """int over box-boundary edges of |v.n| u w; ``kind`` in {all, inflow, outflow}."""
    _, out_flux, traces = _boundary_parts(layout, vel)
    sel = {"all": out_flux != 0, "inflow": out_flux < 0, "outflow": out_flux > 0}[kind]
    acc = _Acc(layout.n_dofs)
    if sel.any():
        acc.add(traces[sel], traces[sel], _edge_local(np.abs(out_flux[sel]), layout.dt)[:, None])
    return acc.tocsr()


def downstream_edge_mass(layout: DofLayout, vel: VelocityField, which: str = "active") -> sp.csr_array:
    """sum over interior edges of int |v.n| u w using the downstream trace."""
    flux, tm, tp = _upwind_parts(layout, vel, which)
    acc = _Acc(layout.n_dofs)
    for sel, down in ((flux > 0, tp), (flux < 0, tm)):
        if sel.any():
            acc.add(down[sel], down[sel], _edge_local(np.abs(flux[sel]), layout.dt)[:, None])
    return acc.tocsr()


def patch_boundary_mass(layout: DofLayout, vel: VelocityField) -> sp.csr_array:
    """sum over patches P of int_{dP} |v.n| u w, each patch using its own trace."""
    flux, tm, tp = _upwind_parts(layout, vel, "active")
    acc = _Acc(layout.n_dofs)
    if flux.size:
        loc = _edge_local(np.abs(flux), layout.dt)[:, None]
        acc.add(tm, tm, loc)
        acc.add(tp, tp, loc)
    return (acc.tocsr() + boundary_abs_mass(layout, vel)).tocsr()


def time_jump_mass(layout: DofLayout) -> sp.csr_array:
    """sum over interior break levels of int [[u]] [[w]]."""
    m = layout.mesh
    Ms = spatial_mass(m.hx, m.hy)[None]
    acc = _Acc(layout.n_dofs)
    for p in layout.breaks:
        plus, minus = layout.trace_dofs(p, "+"), layout.trace_dofs(p, "-")
        acc.add(plus, plus, Ms)
        acc.add(minus, minus, Ms)
        acc.add(plus, minus, -Ms)
        acc.add(minus, plus, -Ms)
    return acc.tocsr()


def break_face_mass(layout: DofLayout) -> sp.csr_array:
    """sum over interior break levels of int u(T_p^-) w(T_p^-) + u(T_p^+) w(T_p^+)."""
    out = sp.csr_array((layout.n_dofs, layout.n_dofs))
    for p in layout.breaks:
        out = out + face_mass(layout, p, "+") + face_mass(layout, p, "-")
    return out.tocsr()


def v_norm_matrix(layout: DofLayout, vel: VelocityField) -> sp.csr_array:
    """Matrix of ``||u||_V^2`` for the layout's continuity structure."""
    n = layout.n_steps
    which = "all" if layout.mode == DG else "active"
    N = (face_mass(layout, 0, "+") + face_mass(layout, n, "-")
         + edge_jump_mass(layout, vel, which) + boundary_abs_mass(layout, vel)
         + time_jump_mass(layout))
    return (0.5 * N).tocsr()


def w_norm_matrix(layout: DofLayout, vel: VelocityField) -> sp.csr_array:
    n = layout.n_steps
    N = face_mass(layout, 0, "+") + face_mass(layout, n, "-") + patch_boundary_mass(layout, vel)
    return (0.5 * N).tocsr()


# ---------------------------------------------------------------------------
# Index maps between layouts


def restriction_indices(src: DofLayout, dst: DofLayout, step_offset: int = 0) -> np.ndarray:
    """``idx`` with ``u_dst = u_src[idx]`` for the cells and steps ``dst`` covers.

    ``dst`` step ``k`` corresponds to ``src`` step ``k + step_offset``.  The
    destination must not be coarser in continuity than the source.
    """
    if dst.n_steps + step_offset > src.n_steps:
        raise ValueError("destination window exceeds the source window")
    src_cells = src.local_of[dst.cells]
    if np.any(src_cells < 0):
        raise ValueError("destination cells are not contained in the source box")
    idx = np.full(dst.n_dofs, -1, dtype=np.int64)
    d = dst.elem_dofs
    s = src.elem_dofs[src_cells][:, step_offset:step_offset + dst.n_steps]
    idx[d.ravel()] = s.ravel()
    # a continuous destination dof fed by two different source dofs would be ill-defined
    check = np.full(dst.n_dofs, -1, dtype=np.int64)
    np.maximum.at(check, d.ravel(), s.ravel())
    if np.any(check != idx) or np.any(idx < 0):
        raise ValueError("source layout is discontinuous where the destination is continuous")
    return idx

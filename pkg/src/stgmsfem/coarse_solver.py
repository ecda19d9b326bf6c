"""Coarse spaces built from per-cell local functions and the slab-marching coarse solve."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre

from . import fe_core
from .fe_core import DofLayout, SlabFunction
from .fine_solver import SlabSystem, TransportProblem, solve_in_span, span_basis
from .mesh import SpaceTimeMesh
from .offline import OfflineLibrary
from .spectral import select_offline_basis


@dataclass
class CoarseSpace:
    """Direct sum of per-cell function sets embedded into a global slab layout."""

    slab: int
    layout: DofLayout
    cell_functions: list[np.ndarray]  # per coarse cell, in that cell's target layout
    matrix: sp.csc_array  # (layout.n_dofs, dim)
    offsets: np.ndarray  # column offsets per cell, length n_cells + 1
    label: str = ""

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    def cell_columns(self, cell: int) -> slice:
        return slice(int(self.offsets[cell]), int(self.offsets[cell + 1]))

    @classmethod
    def from_cell_functions(cls, layout: DofLayout, slab: int, functions: Sequence[np.ndarray],
                            targets: Sequence[DofLayout], label: str = "") -> "CoarseSpace":
        rows, cols, vals = [], [], []
        offsets = np.zeros(len(functions) + 1, dtype=np.int64)
        for i, (F, tgt) in enumerate(zip(functions, targets)):
            F = np.asarray(F, dtype=float)
            idx = fe_core.restriction_indices(layout, tgt, 0)
            if F.shape[0] != idx.size:
                raise ValueError(f"cell {i}: function length {F.shape[0]} does not match its layout ({idx.size})")
            k = F.shape[1]
            rows.append(np.repeat(idx, k))
            cols.append(np.tile(np.arange(k), idx.size) + offsets[i])
            vals.append(F.ravel())
            offsets[i + 1] = offsets[i] + k
        n = int(offsets[-1])
        B = sp.csc_array((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(layout.n_dofs, n))
        B.eliminate_zeros()
        return cls(slab, layout, list(functions), B, offsets, label)


def cell_targets(mesh: SpaceTimeMesh, slab: int, mode: str) -> list[DofLayout]:
    return [DofLayout(mesh, mesh.cell_region(c, slab), mode) for c in range(mesh.n_coarse)]


def offline_space(library: OfflineLibrary, slab: int, L: int, layout: DofLayout, pod_tol: float = 1e-8,
                  masses: dict | None = None) -> CoarseSpace:
    """V_H for one slab: the first ``L`` eigenfunctions of every cell after POD."""
    funcs, targets = [], []
    for b in library.bases(slab):
        mass = None if masses is None else masses.get(b.cell)
        ob = select_offline_basis(b, L, pod_tol, mass)
        funcs.append(ob.functions)
        targets.append(b.target)
    return CoarseSpace.from_cell_functions(layout, slab, funcs, targets, label=f"offline L={L}")


def snapshot_space(library: OfflineLibrary, slab: int, layout: DofLayout, tol: float = 1e-12) -> CoarseSpace:
    """V_snap for one slab: the restricted snapshot span of every cell.

    Coefficient directions without measurable s_n content (those cut from the
    local spectrum) are left out, so the span is the part of the restricted
    snapshots that the local spectral problem sees.  Each cell's set is
    orthonormalized independently.
    """
    funcs, targets = [], []
    for e in library.entries(slab):
        if e.snapshots is None:
            raise ValueError("the offline library was built without keep_snapshots")
        funcs.append(span_basis(e.snapshots @ e.basis.vectors, tol))
        targets.append(e.basis.target)
    return CoarseSpace.from_cell_functions(layout, slab, funcs, targets, label="snapshot")


def full_spectrum_space(library: OfflineLibrary, slab: int, layout: DofLayout, pod_tol: float = 1e-8) -> CoarseSpace:
    """Offline space with every computed eigenfunction selected."""
    n = min(b.eigenvalues.size for b in library.bases(slab))
    funcs, targets = [], []
    for b in library.bases(slab):
        funcs.append(select_offline_basis(b, b.eigenvalues.size, pod_tol).functions)
        targets.append(b.target)
    return CoarseSpace.from_cell_functions(layout, slab, funcs, targets, label=f"full spectrum (>= {n})")


def polynomial_functions(target: DofLayout, degree: int) -> np.ndarray:
    """Tensor Legendre polynomials of per-axis degree ``degree`` in (x, y, t) at the layout dofs."""
    if degree < 1:
        raise ValueError("polynomial degree must be >= 1")
    m = target.mesh
    reg = target.region
    i0, i1, j0, j1 = reg.target_box
    x0, y0 = m.x_nodes[i0], m.y_nodes[j0]
    x1, y1 = m.x_nodes[i1], m.y_nodes[j1]
    t = target.times()
    t0, t1 = t[reg.n_pre], t[-1]
    xyt = target.dof_coords
    ref = [2 * (xyt[:, 0] - x0) / (x1 - x0) - 1, 2 * (xyt[:, 1] - y0) / (y1 - y0) - 1,
           2 * (xyt[:, 2] - t0) / (t1 - t0) - 1]
    V = [legendre.legvander(r, degree) for r in ref]
    P = np.einsum("na,nb,nc->nabc", *V).reshape(xyt.shape[0], -1)
    return P


def polynomial_baseline_basis(mesh: SpaceTimeMesh, slab: int, degree: int, layout: DofLayout) -> CoarseSpace:
    """Per-cell Q_s space-time polynomials, (s + 1)^3 functions per cell."""
    targets = cell_targets(mesh, slab, layout.mode)
    funcs = [polynomial_functions(t, degree) for t in targets]
    return CoarseSpace.from_cell_functions(layout, slab, funcs, targets, label=f"Q{degree}")


@dataclass
class CoarseSolution:
    slabs: list[SlabFunction]
    coefficients: list[np.ndarray]
    dims: list[int] = field(default_factory=list)

    def terminal_traces(self) -> list[np.ndarray]:
        return [s.terminal_trace() for s in self.slabs]


def solve_coarse(problem: TransportProblem, spaces: Sequence[CoarseSpace] | Callable[[int], CoarseSpace],
                 system: SlabSystem | None = None) -> CoarseSolution:
    """March the coarse system slab by slab; the terminal trace seeds the next slab."""
    get = spaces if callable(spaces) else spaces.__getitem__
    mats: dict[int, sp.csc_array] = {}
    dims = []

    def span(n):
        V = get(n)
        mats.setdefault(id(V), V.matrix)
        dims.append(V.dim)
        return mats[id(V)]

    sols = solve_in_span(problem, span, system)
    return CoarseSolution(sols, [s.span_coeffs for s in sols], dims)


class SpaceFamily:
    """Slab -> CoarseSpace, built once per group of slabs with identical local problems."""

    def __init__(self, library: OfflineLibrary, layout: DofLayout, builder: Callable[[int], CoarseSpace]):
        self.library = library
        self.layout = layout
        self.builder = builder
        self._by_key: dict[int, CoarseSpace] = {}

    def __call__(self, slab: int) -> CoarseSpace:
        k = self.library.key(0, slab)[1]
        if k not in self._by_key:
            self._by_key[k] = self.builder(slab)
        return self._by_key[k]


@dataclass(frozen=True)
class DimensionRow:
    L: int
    dim: int
    snapshot_ratio: float


def dimension_report(spaces: dict[int, CoarseSpace], snapshot_dim: int) -> list[DimensionRow]:
    """``{L: space}`` -> rows (L, dim V_H, dim V_H / dim V_snap)."""
    if snapshot_dim <= 0:
        raise ValueError("snapshot dimension must be positive")
    return [DimensionRow(L, V.dim, V.dim / snapshot_dim) for L, V in sorted(spaces.items())]

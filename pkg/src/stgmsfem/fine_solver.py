"""Slab-by-slab reference solver on the full fine space and Galerkin solves in
arbitrary per-slab subspaces (snapshot spans, offline spans, polynomial bases)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import fe_core
from .fe_core import CG, DofLayout, SlabFunction
from .field import VelocityField
from .linalg import SingularMatrixError, SparseLU
from .mesh import SpaceTimeMesh


@dataclass
class TransportProblem:
    """``du/dt + v . grad u = 0`` with inflow data ``g`` and initial state ``u0``.

    ``u0`` may be a callable ``f(x, y)``, a scalar, a nodal vector or cell-vertex
    values; ``g`` a callable ``g(x, y, t)`` or a scalar.  ``g`` is only read on
    edges where ``v . n < 0``.
    """

    mesh: SpaceTimeMesh
    velocity: VelocityField
    u0: Callable | float | np.ndarray
    g: Callable | float | None = 0.0
    mode: str = CG

    def __post_init__(self):
        fe_core.check_mode(self.mode)
        if self.velocity.flux.size != self.mesh.n_edges:
            raise ValueError("velocity field does not match the mesh")


class SlabSystem:
    """Fine-space slab operator shared by every slab (the velocity is steady)."""

    def __init__(self, problem: TransportProblem):
        self.problem = problem
        mesh = problem.mesh
        self.layout = DofLayout(mesh, mesh.slab_region(0), problem.mode)
        self.matrix = fe_core.slab_matrix(self.layout, problem.velocity)
        self.init_load = fe_core.initial_load(self.layout)
        self.inflow = fe_core.inflow_load(self.layout, problem.velocity)
        self._lu = None

    def layout_for(self, slab: int) -> DofLayout:
        if slab == 0:
            return self.layout
        return DofLayout(self.problem.mesh, self.problem.mesh.slab_region(slab), self.problem.mode)

    def rhs(self, slab: int, f_cv: np.ndarray) -> np.ndarray:
        mesh = self.problem.mesh
        F = self.init_load @ np.asarray(f_cv, dtype=float).ravel()
        g = self.problem.g
        if g is not None:
            nodes = self.inflow.nodes
            xy = mesh.node_xy[nodes]
            t = mesh.slab_times(slab)
            if callable(g):
                gv = np.broadcast_to(g(xy[:, 0][:, None], xy[:, 1][:, None], t[None, :]), (nodes.size, t.size))
            else:
                gv = np.full((nodes.size, t.size), float(g))
            F = F + self.inflow.matrix @ np.ascontiguousarray(gv, dtype=float).ravel()
        return F

    def initial_data(self) -> np.ndarray:
        return fe_core.to_cell_vertex(self.problem.mesh, self.layout.cells, self.problem.u0)

    @property
    def lu(self) -> SparseLU:
        if self._lu is None:
            self._lu = SparseLU(self.matrix)
        return self._lu


def solve_fine(problem: TransportProblem, system: SlabSystem | None = None) -> list[SlabFunction]:
    """March the full fine space slab by slab; the terminal trace seeds the next slab."""
    system = SlabSystem(problem) if system is None else system
    f = system.initial_data()
    out = []
    for n in range(problem.mesh.n_slabs):
        F = system.rhs(n, f)
        try:
            u = system.lu.solve(F)
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"fine solve failed on slab {n}: {exc}", exc.row) from exc
        sol = SlabFunction(system.layout, u, n)
        out.append(sol)
        f = sol.terminal_trace()
    return out


def span_basis(B, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal columns spanning ``range(B)``; directions below ``tol`` (relative) are dropped."""
    B = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    if B.shape[1] == 0:
        return B
    U, s, _ = sla.svd(B, full_matrices=False)
    keep = s > tol * s[0]
    return U[:, keep]


DENSE_LIMIT = 4000


def _factor_projected(K, B, slab: int):
    """Factor ``B^T K B``: dense LU up to ``DENSE_LIMIT`` columns, sparse LU beyond."""
    if sp.issparse(B) and B.shape[1] > DENSE_LIMIT:
        Kr = (B.T @ (K @ B)).tocsc()
        try:
            return SparseLU(Kr).solve
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"projected system on slab {slab} is singular: {exc}", exc.row) from exc
    Kr = np.asarray(fe_core.project(K, B))
    try:
        with warnings.catch_warnings():  # zero pivots are checked below with a clearer message
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(Kr, check_finite=True)
    except (ValueError, sla.LinAlgError) as exc:
        raise SingularMatrixError(f"projected system on slab {slab} could not be factored: {exc}") from exc
    if np.any(np.abs(np.diag(lu[0])) <= 1e-14 * np.abs(Kr).max(initial=1.0)):
        cond = np.linalg.cond(Kr)
        raise SingularMatrixError(f"projected system on slab {slab} is singular (cond ~ {cond:.2e})")
    return lambda b: sla.lu_solve(lu, b)


def solve_in_span(problem: TransportProblem, spans: Sequence | Callable, system: SlabSystem | None = None,
                  orthonormalize: bool = False) -> list[SlabFunction]:
    """Galerkin solution of every slab problem restricted to a column span.

    ``spans`` is a sequence (one fine-coefficient matrix per slab) or a callable
    ``slab -> matrix``.  Trial and test spaces coincide.  With
    ``orthonormalize`` the columns are first reduced to an orthonormal basis,
    which is needed for linearly dependent sets such as restricted snapshots.
    """
    system = SlabSystem(problem) if system is None else system
    get = spans if callable(spans) else spans.__getitem__
    K = system.matrix
    f = system.initial_data()
    out = []
    cache: dict[int, tuple] = {}
    for n in range(problem.mesh.n_slabs):
        B = get(n)
        key = id(B)
        if key not in cache:
            Bm = span_basis(B) if orthonormalize else B
            cache = {key: (B, Bm, _factor_projected(K, Bm, n))}
        _, Bm, solve = cache[key]
        F = system.rhs(n, f)
        c = solve(np.asarray(Bm.T @ F))
        u = np.asarray(Bm @ c).ravel()
        sol = SlabFunction(system.layout, u, n)
        sol.span_coeffs = c
        out.append(sol)
        f = sol.terminal_trace()
    return out

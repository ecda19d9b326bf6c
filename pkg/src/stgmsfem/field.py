"""Permeability fields and divergence-free velocity fields on the fine grid.

A :class:`VelocityField` stores one normal flux per fine edge (integral of
``v . n`` along the edge, ``n`` the fixed global normal: +x on vertical edges,
+y on horizontal ones).  Inside a cell the field is the lowest-order
Raviart-Thomas interpolant of those fluxes, so ``v_x`` is linear in ``x`` and
``v_y`` linear in ``y``; a cell whose fluxes sum to zero is pointwise
divergence-free.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .linalg import SingularMatrixError, SparseLU, assemble_csr
from .mesh import SpaceTimeMesh


@dataclass(frozen=True)
class PermeabilityField:
    values: np.ndarray  # (ny, nx), row y=0 first
    provenance: str = "array"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("permeability must be a 2-D (ny, nx) array")
        if not np.all(v > 0):
            raise ValueError("permeability must be strictly positive")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def per_cell(self) -> np.ndarray:
        return self.values.ravel()

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()


@dataclass(frozen=True)
class VelocityField:
    mesh: SpaceTimeMesh
    flux: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        f = np.asarray(self.flux, dtype=float)
        if f.shape != (self.mesh.n_edges,):
            raise ValueError(f"expected {self.mesh.n_edges} edge fluxes, got {f.shape}")
        object.__setattr__(self, "flux", f)

    def __neg__(self) -> "VelocityField":
        return VelocityField(self.mesh, -self.flux, f"-({self.provenance})")

    def normal_velocity(self) -> np.ndarray:
        """Constant ``v . n`` (global normal) on each edge."""
        return self.flux / self.mesh.edge_lengths

    def cell_fluxes(self) -> np.ndarray:
        """(n_cells, 4) global-normal fluxes on the left, right, bottom, top edges."""
        return self.flux[self.mesh.cell_edges]

    def divergence(self) -> np.ndarray:
        """Net outflow of every fine cell."""
        F = self.cell_fluxes()
        return F[:, 1] - F[:, 0] + F[:, 3] - F[:, 2]

    def evaluate(self, cells: np.ndarray, s: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Velocity at reference coordinates ``(s, r)`` in [0, 1]^2 of ``cells``."""
        m = self.mesh
        F = self.cell_fluxes()[cells]
        vx = (F[..., 0] * (1 - s) + F[..., 1] * s) / m.hy
        vy = (F[..., 2] * (1 - r) + F[..., 3] * r) / m.hx
        return vx, vy

    def cell_center_velocity(self) -> np.ndarray:
        cells = np.arange(self.mesh.n_cells)
        vx, vy = self.evaluate(cells, np.full(cells.size, 0.5), np.full(cells.size, 0.5))
        return np.column_stack([vx, vy])

    def boundary_normal_flux(self) -> np.ndarray:
        """Outward fluxes on the domain boundary edges (``mesh.boundary_edges`` order)."""
        b = self.mesh.boundary_edges
        return self.flux[b] * self.mesh.boundary_outward_sign[b]

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.flux).tobytes()).hexdigest()


# ---------------------------------------------------------------------------
# Darcy flow


def left_to_right_boundary_flux(mesh: SpaceTimeMesh) -> np.ndarray:
    """Outward normal velocity ``f``: -1 on x = x0, +1 on x = x1, 0 elsewhere."""
    b = mesh.boundary_edges
    mid = mesh.edge_midpoints[b]
    x0, x1 = mesh.config.domain[:2]
    vertical = b < mesh.n_vertical
    f = np.zeros(b.size)
    f[vertical & np.isclose(mid[:, 0], x0)] = -1.0
    f[vertical & np.isclose(mid[:, 0], x1)] = 1.0
    return f


def solve_darcy(mesh: SpaceTimeMesh, kappa: PermeabilityField, boundary_flux: np.ndarray | None = None,
                compat_tol: float = 1e-12) -> VelocityField:
    """Lowest-order mixed (RT0 x P0) solve of ``kappa^-1 v + grad p = 0, div v = 0``.

    ``boundary_flux`` holds the outward normal velocity on each boundary edge in
    ``mesh.boundary_edges`` order; it must integrate to zero.  The pressure is
    fixed by a zero-mean constraint and discarded.
    """
    if kappa.shape != (mesh.ny, mesh.nx):
        raise ValueError(f"permeability shape {kappa.shape} does not match grid {(mesh.ny, mesh.nx)}")
    if boundary_flux is None:
        boundary_flux = left_to_right_boundary_flux(mesh)
    b = mesh.boundary_edges
    boundary_flux = np.asarray(boundary_flux, dtype=float)
    if boundary_flux.shape != b.shape:
        raise ValueError(f"expected {b.size} boundary values, got {boundary_flux.shape}")
    Fb = boundary_flux * mesh.edge_lengths[b]
    net = Fb.sum()
    if abs(net) > compat_tol * max(np.abs(Fb).sum(), 1.0):
        raise ValueError(f"incompatible boundary data: net flux {net:.3e} != 0")

    ne, nc = mesh.n_edges, mesh.n_cells
    inv_k = 1.0 / kappa.per_cell()
    E = mesh.cell_edges
    m1 = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
    rows, cols, vals = [], [], []
    for pair, ratio in (((0, 1), mesh.hx / mesh.hy), ((2, 3), mesh.hy / mesh.hx)):
        for a in range(2):
            for c in range(2):
                rows.append(E[:, pair[a]])
                cols.append(E[:, pair[c]])
                vals.append(inv_k * ratio * m1[a, c])
    M = assemble_csr(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (ne, ne))
    # B[K, e]: net outflow of cell K per unit global-normal flux on e
    sgn = np.array([-1.0, 1.0, -1.0, 1.0])
    B = assemble_csr(np.repeat(np.arange(nc), 4), E.ravel(), np.tile(sgn, nc), (nc, ne))

    Fglob = np.zeros(ne)
    Fglob[b] = Fb * mesh.boundary_outward_sign[b]
    interior = np.setdiff1d(np.arange(ne), b)
    Mii = M[interior][:, interior]
    Mib = M[interior][:, b]
    Bi = B[:, interior]
    Bb = B[:, b]
    area = sp.csr_array(mesh.cell_areas.reshape(-1, 1))
    K = sp.block_array([[Mii, -Bi.T, None], [-Bi, None, area], [None, area.T, None]], format="csc")
    rhs = np.concatenate([-Mib @ Fglob[b], Bb @ Fglob[b], [0.0]])
    try:
        sol = SparseLU(K).solve(rhs)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"Darcy system singular (n_edges={ne}, n_cells={nc}): {exc}", exc.row) from exc
    flux = Fglob.copy()
    flux[interior] = sol[: interior.size]
    return VelocityField(mesh, flux, f"darcy(kappa={kappa.provenance})")


# ---------------------------------------------------------------------------
# Permeability generation


@dataclass(frozen=True)
class Channel:
    """Straight band of high permeability.

    ``orientation`` 'h' runs along x: the band centre moves linearly from
    ``start`` (at x = 0) to ``end`` (at x = 1), as fractions of the domain height.
    'v' swaps the axes.  ``width`` is a fraction of the domain.
    """

    orientation: str = "h"
    start: float = 0.5
    end: float = 0.5
    width: float = 0.05


@dataclass(frozen=True)
class Inclusion:
    x: float
    y: float
    size: float


@dataclass(frozen=True)
class ChannelLayout:
    channels: tuple[Channel, ...] = ()
    inclusions: tuple[Inclusion, ...] = ()
    n_random_channels: int = 0
    n_random_inclusions: int = 0
    channel_width: tuple[float, float] = (0.03, 0.06)
    inclusion_size: tuple[float, float] = (0.03, 0.08)


def default_layout() -> ChannelLayout:
    return ChannelLayout(n_random_channels=4, n_random_inclusions=12)


def _draw_layout(layout: ChannelLayout, rng: np.random.Generator) -> tuple[list[Channel], list[Inclusion]]:
    channels = list(layout.channels)
    for _ in range(layout.n_random_channels):
        start, end = rng.uniform(0.08, 0.92, size=2)
        width = rng.uniform(*layout.channel_width)
        channels.append(Channel("h", float(start), float(end), float(width)))
    inclusions = list(layout.inclusions)
    for _ in range(layout.n_random_inclusions):
        x, y = rng.uniform(0.05, 0.95, size=2)
        inclusions.append(Inclusion(float(x), float(y), float(rng.uniform(*layout.inclusion_size))))
    return channels, inclusions


def generate_permeability(shape: tuple[int, int], seed: int = 0, contrast: float = 1e4,
                          layout: ChannelLayout | None = None) -> PermeabilityField:
    """Binary channelized field: background 1, channels and inclusions ``contrast``.

    ``shape`` is ``(ny, nx)``; positions are in unit-square fractions, so the
    same seed gives the same geometry on any resolution.
    """
    if contrast < 1:
        raise ValueError("contrast must be >= 1")
    layout = default_layout() if layout is None else layout
    rng = np.random.default_rng(seed)
    channels, inclusions = _draw_layout(layout, rng)
    ny, nx = shape
    xc = (np.arange(nx) + 0.5) / nx
    yc = (np.arange(ny) + 0.5) / ny
    X, Y = np.meshgrid(xc, yc)
    mask = np.zeros(shape, dtype=bool)
    for ch in channels:
        along, across = (X, Y) if ch.orientation == "h" else (Y, X)
        centre = ch.start + (ch.end - ch.start) * along
        mask |= np.abs(across - centre) <= 0.5 * ch.width
    for inc in inclusions:
        mask |= (np.abs(X - inc.x) <= 0.5 * inc.size) & (np.abs(Y - inc.y) <= 0.5 * inc.size)
    values = np.where(mask, float(contrast), 1.0)
    return PermeabilityField(values, f"generator(seed={seed}, contrast={contrast:g})")


# ---------------------------------------------------------------------------
# Analytic fields (test oracles)

_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def velocity_from_function(mesh: SpaceTimeMesh, v: Callable[[np.ndarray, np.ndarray], tuple],
                           name: str = "function") -> VelocityField:
    """Edge fluxes by two-point Gauss integration of ``v . n`` (exact for linear ``v``)."""
    xy = mesh.node_xy[mesh.edge_nodes]
    a, b = xy[:, 0], xy[:, 1]
    vertical = np.arange(mesh.n_edges) < mesh.n_vertical
    flux = np.zeros(mesh.n_edges)
    for q in _GAUSS2:
        p = a + q * (b - a)
        vx, vy = v(p[:, 0], p[:, 1])
        vn = np.where(vertical, np.broadcast_to(vx, flux.shape), np.broadcast_to(vy, flux.shape))
        flux += 0.5 * vn * mesh.edge_lengths
    return VelocityField(mesh, flux, name)


def analytic_velocity(mesh: SpaceTimeMesh, kind: str = "uniform", vx: float = 1.0, vy: float = 0.0,
                      omega: float = 1.0, center: Sequence[float] | None = None) -> VelocityField:
    """``uniform`` (vx, vy); ``rotation`` counter-clockwise about ``center``; ``shear`` v = (y, 0)."""
    if kind == "uniform":
        return velocity_from_function(mesh, lambda x, y: (vx + 0 * x, vy + 0 * y), f"uniform({vx:g},{vy:g})")
    if kind == "rotation":
        if center is None:
            x0, x1, y0, y1 = mesh.config.domain
            center = (0.5 * (x0 + x1), 0.5 * (y0 + y1))
        cx, cy = center
        return velocity_from_function(mesh, lambda x, y: (-omega * (y - cy), omega * (x - cx)), "rotation")
    if kind == "shear":
        return velocity_from_function(mesh, lambda x, y: (y, 0 * y), "shear")
    raise ValueError(f"unknown analytic velocity kind {kind!r}")


# ---------------------------------------------------------------------------
# File formats


def read_permeability(path: str | Path) -> PermeabilityField:
    """``nx ny`` header, then ``ny`` rows of ``nx`` values, row y=0 first."""
    lines = Path(path).read_text().split("\n")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"{path}: header must be 'nx ny'")
    nx, ny = int(header[0]), int(header[1])
    data = np.array([float(v) for line in lines[1:] for v in line.split()])
    if data.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {data.size}")
    return PermeabilityField(data.reshape(ny, nx), f"file({Path(path).name})")


def write_permeability(path: str | Path, kappa: PermeabilityField) -> None:
    ny, nx = kappa.shape
    rows = [" ".join(repr(float(v)) for v in row) for row in kappa.values]
    Path(path).write_text(f"{nx} {ny}\n" + "\n".join(rows) + "\n")


def write_velocity(path: str | Path, vel: VelocityField) -> None:
    """Per-edge records ``edge_id flux``."""
    lines = [f"{e} {f!r}" for e, f in enumerate(vel.flux.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_velocity(path: str | Path, mesh: SpaceTimeMesh) -> VelocityField:
    data = np.loadtxt(path, ndmin=2)
    flux = np.zeros(mesh.n_edges)
    flux[data[:, 0].astype(int)] = data[:, 1]
    return VelocityField(mesh, flux, f"file({Path(path).name})")


def write_cell_velocity(path: str | Path, vel: VelocityField) -> None:
    """Structured cell-centre dump: ``nx ny`` header, then ``x y vx vy`` rows."""
    m = vel.mesh
    xy = m.cell_centers
    v = vel.cell_center_velocity()
    body = "\n".join(f"{a!r} {b!r} {c!r} {d!r}" for a, b, c, d in np.column_stack([xy, v]).tolist())
    Path(path).write_text(f"{m.nx} {m.ny}\n{body}\n")

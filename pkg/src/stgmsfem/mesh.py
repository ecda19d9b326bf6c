"""Nested space-time discretization on an axis-aligned rectangle.

Fine and coarse spatial grids are uniform and nested; the time axis is split
into ``n_slabs`` coarse intervals, each refined into ``refine_time`` fine steps.
Numbering is lexicographic in (y, x): node ``(i, j)`` has id ``j * (nx + 1) + i``
and cell ``(i, j)`` has id ``j * nx + i``.  Vertical edges (normal +x) come
first, ``j * (nx + 1) + i``; horizontal edges (normal +y) follow with offset
``n_vertical``, ``j * nx + i``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class MeshConfig:
    nx_coarse: int = 5
    ny_coarse: int = 5
    refine_space: int = 10
    n_slabs: int = 20
    refine_time: int = 5
    t_final: float = 0.08
    domain: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    oversample_layers: int = 1
    oversample_fine_layers: int = 0
    oversample_time: int = 1


@dataclass(frozen=True)
class Region:
    """Box of fine cells times a window of fine time steps.

    ``box`` is ``(i0, i1, j0, j1)`` in fine-cell indices (half open).  The window
    starts ``n_pre`` fine steps before the slab start and ends at the slab end.
    """

    box: tuple[int, int, int, int]
    target_box: tuple[int, int, int, int]
    cell: int
    slab: int
    n_pre: int
    n_steps: int
    t_start: float

    @property
    def shape(self) -> tuple[int, int]:
        i0, i1, j0, j1 = self.box
        return i1 - i0, j1 - j0


class SpaceTimeMesh:
    def __init__(self, config: MeshConfig):
        c = config
        for name in ("nx_coarse", "ny_coarse", "refine_space", "n_slabs", "refine_time"):
            if getattr(c, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(c, name)}")
        if c.oversample_layers < 0 or c.oversample_fine_layers < 0 or c.oversample_time < 0:
            raise ValueError("oversampling sizes must be non-negative")
        x0, x1, y0, y1 = c.domain
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"domain {c.domain} has non-positive area")
        if not c.t_final > 0:
            raise ValueError("t_final must be positive")
        self.config = c
        self.nx = c.nx_coarse * c.refine_space
        self.ny = c.ny_coarse * c.refine_space
        self.hx = (x1 - x0) / self.nx
        self.hy = (y1 - y0) / self.ny
        self.n_cells = self.nx * self.ny
        self.n_nodes = (self.nx + 1) * (self.ny + 1)
        self.n_vertical = (self.nx + 1) * self.ny
        self.n_horizontal = self.nx * (self.ny + 1)
        self.n_edges = self.n_vertical + self.n_horizontal
        self.n_coarse = c.nx_coarse * c.ny_coarse
        self.dt_coarse = c.t_final / c.n_slabs
        self.dt = self.dt_coarse / c.refine_time

    # -- sizes -----------------------------------------------------------
    @property
    def refine_space(self) -> int:
        return self.config.refine_space

    @property
    def refine_time(self) -> int:
        return self.config.refine_time

    @property
    def n_slabs(self) -> int:
        return self.config.n_slabs

    @property
    def area(self) -> float:
        x0, x1, y0, y1 = self.config.domain
        return (x1 - x0) * (y1 - y0)

    @property
    def n_fine_steps(self) -> int:
        return self.n_slabs * self.refine_time

    # -- geometry --------------------------------------------------------
    @cached_property
    def x_nodes(self) -> np.ndarray:
        x0 = self.config.domain[0]
        return x0 + self.hx * np.arange(self.nx + 1)

    @cached_property
    def y_nodes(self) -> np.ndarray:
        y0 = self.config.domain[2]
        return y0 + self.hy * np.arange(self.ny + 1)

    @cached_property
    def node_xy(self) -> np.ndarray:
        X, Y = np.meshgrid(self.x_nodes, self.y_nodes)
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def cell_centers(self) -> np.ndarray:
        xc = 0.5 * (self.x_nodes[:-1] + self.x_nodes[1:])
        yc = 0.5 * (self.y_nodes[:-1] + self.y_nodes[1:])
        X, Y = np.meshgrid(xc, yc)
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def cell_areas(self) -> np.ndarray:
        return np.full(self.n_cells, self.hx * self.hy)

    def slab_times(self, slab: int) -> np.ndarray:
        """Fine time levels of coarse slab ``slab`` (0-based), r + 1 values."""
        self._check_slab(slab)
        return self.dt_coarse * slab + self.dt * np.arange(self.refine_time + 1)

    @cached_property
    def time_levels(self) -> np.ndarray:
        return self.dt * np.arange(self.n_fine_steps + 1)

    # -- connectivity ----------------------------------------------------
    def node_id(self, i, j):
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    def cell_id(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """(n_cells, 4) vertex ids ordered (x0,y0), (x1,y0), (x0,y1), (x1,y1)."""
        j, i = np.divmod(np.arange(self.n_cells), self.nx)
        base = self.node_id(i, j)
        return np.column_stack([base, base + 1, base + self.nx + 1, base + self.nx + 2])

    @cached_property
    def cell_edges(self) -> np.ndarray:
        """(n_cells, 4) edge ids ordered left, right, bottom, top."""
        j, i = np.divmod(np.arange(self.n_cells), self.nx)
        left = j * (self.nx + 1) + i
        bottom = self.n_vertical + j * self.nx + i
        return np.column_stack([left, left + 1, bottom, bottom + self.nx])

    @cached_property
    def edge_cells(self) -> np.ndarray:
        """(n_edges, 2): cell on the minus side (left/below) and plus side; -1 outside."""
        out = np.full((self.n_edges, 2), -1, dtype=np.int64)
        j, i = np.divmod(np.arange(self.n_vertical), self.nx + 1)
        out[: self.n_vertical, 0] = np.where(i > 0, self.cell_id(i - 1, j), -1)
        out[: self.n_vertical, 1] = np.where(i < self.nx, self.cell_id(i, j), -1)
        j, i = np.divmod(np.arange(self.n_horizontal), self.nx)
        out[self.n_vertical :, 0] = np.where(j > 0, self.cell_id(i, j - 1), -1)
        out[self.n_vertical :, 1] = np.where(j < self.ny, self.cell_id(i, j), -1)
        return out

    @cached_property
    def edge_nodes(self) -> np.ndarray:
        out = np.empty((self.n_edges, 2), dtype=np.int64)
        j, i = np.divmod(np.arange(self.n_vertical), self.nx + 1)
        out[: self.n_vertical, 0] = self.node_id(i, j)
        out[: self.n_vertical, 1] = self.node_id(i, j + 1)
        j, i = np.divmod(np.arange(self.n_horizontal), self.nx)
        out[self.n_vertical :, 0] = self.node_id(i, j)
        out[self.n_vertical :, 1] = self.node_id(i + 1, j)
        return out

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.concatenate(
            [np.full(self.n_vertical, self.hy), np.full(self.n_horizontal, self.hx)]
        )

    @cached_property
    def edge_midpoints(self) -> np.ndarray:
        return self.node_xy[self.edge_nodes].mean(axis=1)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero((self.edge_cells < 0).any(axis=1))

    @cached_property
    def boundary_outward_sign(self) -> np.ndarray:
        """Per edge: +1/-1 if the global normal points out of/into the domain, 0 inside."""
        ec = self.edge_cells
        sign = np.zeros(self.n_edges)
        sign[ec[:, 1] < 0] = 1.0
        sign[ec[:, 0] < 0] = -1.0
        return sign

    # -- coarse structure ------------------------------------------------
    @cached_property
    def cell_coarse(self) -> np.ndarray:
        """Coarse block id of every fine cell."""
        j, i = np.divmod(np.arange(self.n_cells), self.nx)
        m = self.refine_space
        return (j // m) * self.config.nx_coarse + (i // m)

    def coarse_box(self, k: int) -> tuple[int, int, int, int]:
        if not 0 <= k < self.n_coarse:
            raise IndexError(f"coarse cell {k} out of range [0, {self.n_coarse})")
        J, I = divmod(k, self.config.nx_coarse)
        m = self.refine_space
        return (I * m, (I + 1) * m, J * m, (J + 1) * m)

    def cells_in_box(self, box) -> np.ndarray:
        i0, i1, j0, j1 = box
        ii, jj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1))
        return self.cell_id(ii.ravel(), jj.ravel())

    def _check_slab(self, slab: int) -> None:
        if not 0 <= slab < self.n_slabs:
            raise IndexError(f"slab {slab} out of range [0, {self.n_slabs})")

    def slab_region(self, slab: int) -> Region:
        """The whole domain over coarse slab ``slab``."""
        self._check_slab(slab)
        box = (0, self.nx, 0, self.ny)
        return Region(box, box, -1, slab, 0, self.refine_time, self.dt_coarse * slab)

    def cell_region(self, cell: int, slab: int) -> Region:
        """K_i times the coarse slab, without oversampling."""
        self._check_slab(slab)
        box = self.coarse_box(cell)
        return Region(box, box, cell, slab, 0, self.refine_time, self.dt_coarse * slab)

    def oversampled_region(self, cell: int, slab: int, layers: int | None = None,
                           fine_layers: int | None = None, time_steps: int | None = None) -> Region:
        """K_i^+ times the window starting ``time_steps`` fine steps before the slab.

        Both the spatial box and the time window are clipped to the domain.
        """
        self._check_slab(slab)
        c = self.config
        layers = c.oversample_layers if layers is None else layers
        fine_layers = c.oversample_fine_layers if fine_layers is None else fine_layers
        time_steps = c.oversample_time if time_steps is None else time_steps
        target = self.coarse_box(cell)
        grow = layers * self.refine_space + fine_layers
        i0, i1, j0, j1 = target
        box = (max(i0 - grow, 0), min(i1 + grow, self.nx), max(j0 - grow, 0), min(j1 + grow, self.ny))
        n_pre = min(time_steps, slab * self.refine_time)
        t_start = self.dt_coarse * slab - n_pre * self.dt
        return Region(box, target, cell, slab, n_pre, n_pre + self.refine_time, t_start)

    def summary(self) -> dict:
        return dataclasses.asdict(self.config) | {
            "nx": self.nx, "ny": self.ny, "n_fine_steps": self.n_fine_steps,
        }


def build_mesh(config: MeshConfig | None = None, **kwargs) -> SpaceTimeMesh:
    if config is None:
        config = MeshConfig(**kwargs)
    elif kwargs:
        config = dataclasses.replace(config, **kwargs)
    return SpaceTimeMesh(config)

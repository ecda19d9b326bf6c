"""Offline stage: snapshot generation and local spectra for every coarse cell.

The velocity is steady and the time steps are uniform, so local problems only
depend on the cell and on how many fine steps of oversampling fit before the
slab (``n_pre``).  Results are computed once per ``(cell, n_pre)`` and shared
by every slab with the same key.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .cache import MatrixCache, cache_key
from .fe_core import CG, DofLayout, check_mode
from .field import VelocityField
from .mesh import SpaceTimeMesh
from .snapshot import generate_snapshots
from .spectral import SpectralBasis, spectral_basis

log = logging.getLogger(__name__)

# bump when snapshot or eigensolver numerics change, so stale disk entries are ignored
CACHE_VERSION = 3


@dataclass(frozen=True)
class OfflineConfig:
    mode: str = CG
    oversampling: bool = True
    eig_cut: float = 1e-10
    keep_snapshots: bool = False

    def __post_init__(self):
        check_mode(self.mode)


@dataclass
class CellOffline:
    cell: int
    n_pre: int
    basis: SpectralBasis
    n_snapshots: int
    snapshots: np.ndarray | None  # restricted to K_i x slab
    residual: float
    partition_error: float
    snapshot_seconds: float = 0.0  # wall time of snapshot generation, 0 when loaded from disk


class OfflineLibrary:
    def __init__(self, mesh: SpaceTimeMesh, vel: VelocityField, config: OfflineConfig | None = None,
                 threads: int = 1, cache_dir=None):
        self.mesh = mesh
        self.vel = vel
        self.config = OfflineConfig() if config is None else config
        self.threads = max(1, int(threads))
        self.cache = MatrixCache(cache_dir) if cache_dir else None
        self._entries: dict[tuple[int, int], CellOffline] = {}

    def key(self, cell: int, slab: int) -> tuple[int, int]:
        if not self.config.oversampling:
            return cell, 0
        return cell, self.mesh.oversampled_region(cell, slab).n_pre

    def _disk_key(self, cell: int, n_pre: int) -> str:
        c = self.mesh.config
        return cache_key(version=CACHE_VERSION, mesh=asdict(c), velocity=self.vel.digest(), cell=cell, n_pre=n_pre,
                         mode=self.config.mode, oversampling=self.config.oversampling,
                         layers=c.oversample_layers, fine_layers=c.oversample_fine_layers,
                         time=c.oversample_time, cut=self.config.eig_cut)

    def _first_slab(self, n_pre: int) -> int:
        for s in range(self.mesh.n_slabs):
            if self.key(0, s)[1] == n_pre:
                return s
        raise KeyError(n_pre)

    def _load(self, cell: int, n_pre: int) -> CellOffline | None:
        if self.cache is None:
            return None
        k = self._disk_key(cell, n_pre)
        meta, lam, vec, modes = (self.cache.get(k, n) for n in ("meta", "eig", "vec", "modes"))
        if meta is None or lam is None or vec is None or modes is None:
            return None
        snaps = None
        if self.config.keep_snapshots:
            snaps = self.cache.get(k, "snap")
            if snaps is None:
                return None
        slab = self._first_slab(n_pre)
        target = DofLayout(self.mesh, self.mesh.cell_region(cell, slab), self.config.mode)
        n_snap, residual, pu = meta.ravel()
        basis = SpectralBasis(cell, slab, lam.ravel(), vec, modes, int(n_snap), target)
        return CellOffline(cell, n_pre, basis, int(n_snap), snaps, float(residual), float(pu))

    def _store(self, e: CellOffline) -> None:
        if self.cache is None:
            return
        k = self._disk_key(e.cell, e.n_pre)
        self.cache.put(k, "eig", e.basis.eigenvalues[:, None])
        self.cache.put(k, "vec", e.basis.vectors)
        self.cache.put(k, "modes", e.basis.modes)
        if e.snapshots is not None:
            self.cache.put(k, "snap", e.snapshots)
        self.cache.put(k, "meta", np.array([[e.n_snapshots, e.residual, e.partition_error]]))

    def _compute(self, cell: int, n_pre: int) -> CellOffline:
        cached = self._load(cell, n_pre)
        if cached is not None:
            return cached
        slab = self._first_slab(n_pre)
        t0 = time.perf_counter()
        space = generate_snapshots(self.mesh, self.vel, cell, slab, self.config.mode,
                                   oversampling=self.config.oversampling)
        seconds = time.perf_counter() - t0
        basis = spectral_basis(space, self.vel, self.config.eig_cut)
        entry = CellOffline(cell, n_pre, basis, len(space),
                            space.restricted if self.config.keep_snapshots else None,
                            space.residual, space.partition_error(), seconds)
        self._store(entry)
        log.debug("cell %d n_pre %d: %d snapshots, %d eigenpairs", cell, n_pre, len(space),
                  basis.eigenvalues.size)
        return entry

    def build(self, slabs=None) -> None:
        """Compute every missing entry needed by ``slabs`` (default: all)."""
        slabs = range(self.mesh.n_slabs) if slabs is None else slabs
        keys = sorted({self.key(c, s) for s in slabs for c in range(self.mesh.n_coarse)})
        todo = [k for k in keys if k not in self._entries]
        if self.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                results = list(pool.map(lambda k: self._compute(*k), todo))
        else:
            results = [self._compute(*k) for k in todo]
        for k, r in zip(todo, results):
            self._entries[k] = r

    def entry(self, cell: int, slab: int) -> CellOffline:
        k = self.key(cell, slab)
        if k not in self._entries:
            self._entries[k] = self._compute(*k)
        return self._entries[k]

    def entries(self, slab: int) -> list[CellOffline]:
        self.build([slab])
        return [self.entry(c, slab) for c in range(self.mesh.n_coarse)]

    def bases(self, slab: int) -> list[SpectralBasis]:
        return [e.basis for e in self.entries(slab)]

    def snapshot_dimension(self, slab: int) -> int:
        """dim V_snap for the slab: total number of snapshot generators over all cells."""
        return sum(e.n_snapshots for e in self.entries(slab))

    def slab_groups(self) -> dict[int, list[int]]:
        """n_pre -> slabs sharing it."""
        out: dict[int, list[int]] = {}
        for s in range(self.mesh.n_slabs):
            out.setdefault(self.key(0, s)[1], []).append(s)
        return out

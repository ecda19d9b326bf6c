"""End-to-end experiment driver: velocity, fine reference, offline stage,
coarse solves over an L sweep, polynomial baselines and report files."""
from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy

from . import __version__, analysis, field
from .analysis import ErrorReport
from .coarse_solver import SpaceFamily, offline_space, polynomial_baseline_basis, solve_coarse
from .config import RunConfig
from .expr import parse_expression
from .fe_core import SlabFunction
from .fine_solver import SlabSystem, TransportProblem, solve_fine
from .mesh import build_mesh
from .offline import OfflineConfig, OfflineLibrary

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def field_at_level(sols: list[SlabFunction], level: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell-vertex values at a global fine time level (``-`` side, ``+`` at t = 0)."""
    r = sols[0].layout.n_steps
    total = r * len(sols)
    if level < 0:
        level += total + 1
    if not 0 <= level <= total:
        raise ValueError(f"time level {level} outside 0..{total}")
    if level == 0:
        return sols[0].initial_trace(), sols[0].layout.times()[0]
    n = (level - 1) // r
    k = level - n * r
    return sols[n].trace(k, "-"), sols[n].layout.mesh.slab_times(n)[k]


def nodal_average(layout, cell_vertex: np.ndarray) -> np.ndarray:
    """Average of the cell-vertex values meeting at each fine node (NaN outside the layout)."""
    m = layout.mesh
    nodes = m.cell_nodes[layout.cells].ravel()
    total = np.bincount(nodes, weights=np.asarray(cell_vertex, dtype=float).ravel(), minlength=m.n_nodes)
    count = np.bincount(nodes, minlength=m.n_nodes)
    out = np.full(m.n_nodes, np.nan)
    np.divide(total, count, out=out, where=count > 0)
    return out


def write_field(path: Path, sols: list[SlabFunction], level: int) -> None:
    """Structured-grid dump: ``nx ny`` node counts, then ``ny`` rows of ``nx`` nodal values (y = 0 first).

    Values that are discontinuous across cells are averaged at shared nodes.
    """
    vals, _ = field_at_level(sols, level)
    m = sols[0].layout.mesh
    u = nodal_average(sols[0].layout, vals).reshape(m.ny + 1, m.nx + 1)
    rows = [" ".join(repr(v) for v in row) for row in u.tolist()]
    path.write_text(f"{m.nx + 1} {m.ny + 1}\n" + "\n".join(rows) + "\n")


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Lazy experiment state; each property is one pipeline stage."""

    def __init__(self, config: RunConfig, out: Path | str | None = None, use_cache: bool | None = None,
                 config_base: Path | None = None):
        self.config = config
        self.out = Path(out if out is not None else config.output.dir)
        self.use_cache = config.output.cache if use_cache is None else use_cache
        self.config_base = config_base
        self.timings: dict[str, float] = {}
        self.written: list[Path] = []
        self.report = ErrorReport(meta={"name": config.name})

    # -- helpers ---------------------------------------------------------
    def _stage(self, name: str, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except StageError:
            raise
        except Exception as exc:  # reported with the stage name, outputs so far are kept
            raise StageError(name, exc) from exc
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0
        return result

    def _write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        p.write_text(text)
        if p not in self.written:
            self.written.append(p)
        return p

    # -- stages ----------------------------------------------------------
    @cached_property
    def mesh(self):
        return self._stage("mesh", lambda: build_mesh(self.config.mesh))

    @cached_property
    def kappa(self) -> field.PermeabilityField | None:
        v = self.config.velocity
        if v.source != "darcy":
            return None

        def make():
            if v.kappa_file:
                p = Path(v.kappa_file)
                if self.config_base is not None and not p.is_absolute():
                    p = self.config_base / p
                k = field.read_permeability(p)
                if k.shape != (self.mesh.ny, self.mesh.nx):
                    raise ValueError(f"kappa shape {k.shape} does not match the fine grid")
                return k
            layout = field.ChannelLayout(n_random_channels=v.n_channels, n_random_inclusions=v.n_inclusions)
            return field.generate_permeability((self.mesh.ny, self.mesh.nx), v.seed, v.contrast, layout)

        return self._stage("kappa", make)

    @cached_property
    def velocity(self) -> field.VelocityField:
        v = self.config.velocity
        if v.source == "darcy":
            return self._stage("velocity", lambda: field.solve_darcy(self.mesh, self.kappa))
        return self._stage("velocity", lambda: field.analytic_velocity(self.mesh, v.kind, v.vx, v.vy, v.omega))

    @cached_property
    def problem(self) -> TransportProblem:
        u0 = parse_expression(self.config.problem.u0)
        g = parse_expression(self.config.problem.g)
        return TransportProblem(self.mesh, self.velocity, u0.spatial(), g, self.config.method.mode)

    @cached_property
    def system(self) -> SlabSystem:
        return self._stage("fine", lambda: SlabSystem(self.problem))

    @cached_property
    def fine(self) -> list[SlabFunction]:
        return self._stage("fine", lambda: solve_fine(self.problem, self.system))

    @cached_property
    def library(self) -> OfflineLibrary:
        m = self.config.method
        cache_dir = None
        if self.use_cache:
            cache_dir = self.config.output.cache_dir or (self.out / "cache")
        lib = OfflineLibrary(self.mesh, self.velocity, OfflineConfig(m.mode, m.oversampling, m.eig_cut),
                             threads=self.config.output.threads, cache_dir=cache_dir)
        self._stage("snapshots", lib.build)
        return lib

    @property
    def generic_slab(self) -> int:
        """A slab representative of the steady regime (the second one when it exists)."""
        return min(1, self.mesh.n_slabs - 1)

    def offline_family(self, L: int) -> SpaceFamily:
        lib, layout, tol = self.library, self.system.layout, self.config.method.pod_tol
        return SpaceFamily(lib, layout, lambda s: offline_space(lib, s, L, layout, tol))

    def coarse(self, L: int):
        fam = self.offline_family(L)
        sol = self._stage("solve", lambda: solve_coarse(self.problem, fam, self.system))
        return sol, fam

    def polynomial(self, degree: int):
        V = self._stage("baseline", lambda: polynomial_baseline_basis(self.mesh, 0, degree, self.system.layout))
        sol = self._stage("baseline", lambda: solve_coarse(self.problem, lambda n: V, self.system))
        return sol, V

    # -- outputs ---------------------------------------------------------
    def dump_fields(self, prefix: str, sols: list[SlabFunction]) -> None:
        total = self.mesh.n_fine_steps
        for lev in self.config.output.dump_levels:
            level = lev + total + 1 if lev < 0 else lev
            p = self.out / f"{prefix}_t{level}.txt"
            self.out.mkdir(parents=True, exist_ok=True)
            write_field(p, sols, level)
            if p not in self.written:
                self.written.append(p)

    def write_velocity(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        if self.kappa is not None:
            field.write_permeability(self.out / "kappa.txt", self.kappa)
            self.written.append(self.out / "kappa.txt")
        field.write_velocity(self.out / "velocity.txt", self.velocity)
        field.write_cell_velocity(self.out / "velocity_cells.txt", self.velocity)
        self.written += [self.out / "velocity.txt", self.out / "velocity_cells.txt"]

    def run_fine(self) -> None:
        self.dump_fields("u_h", self.fine)

    def run_snapshots(self) -> None:
        lib = self.library
        rows = []
        for n_pre, slabs in sorted(lib.slab_groups().items()):
            for e in lib.entries(slabs[0]):
                rows.append((e.cell, n_pre, e.n_snapshots, e.basis.eigenvalues.size, e.residual, e.partition_error))
        self._write("snapshots.csv", analysis.csv_text(
            ("cell", "n_pre", "n_snapshots", "n_eigenpairs", "residual", "partition_error"), rows))

    def run_basis(self) -> None:
        lib = self.library
        by_slab = {slabs[0]: lib.bases(slabs[0]) for _, slabs in sorted(lib.slab_groups().items())}
        self._write("spectrum.csv", analysis.spectrum_csv(by_slab))
        Ls = range(1, self.config.method.lambda_L_max + 1)
        self.report.lambda_rows = analysis.lambda_star_curve(lib.bases(self.generic_slab), Ls)
        self._write("lambda_star.csv", analysis.lambda_star_csv(self.report))

    def run_solve(self) -> None:
        uh = self.fine
        n_snap = self.library.snapshot_dimension(self.generic_slab)
        rows, best = [], None
        for L in self.config.method.L:
            sol, fam = self.coarse(L)
            e1, e2 = analysis.compute_errors(sol.slabs, uh)
            dim = fam(self.generic_slab).dim
            rows.append({"L": L, "dim": dim, "snapshot_ratio": dim / n_snap, "e1": e1, "e2": e2})
            self.report.v_errors[L] = analysis.v_norm_errors(sol.slabs, uh, self.velocity)
            best = sol
        self.report.rows = rows
        self._write("table1.csv", analysis.table1_csv(self.report))
        if best is not None:
            self.dump_fields("u_H", best.slabs)

    def run_baseline(self) -> None:
        uh = self.fine
        rows = []
        for L in self.config.method.compare_L:
            sol, fam = self.coarse(L)
            e1, e2 = analysis.compute_errors(sol.slabs, uh)
            rows.append({"basis": f"L={L}", "dim": fam(self.generic_slab).dim, "e1": e1, "e2": e2})
        for s in self.config.method.poly_degrees:
            sol, V = self.polynomial(s)
            e1, e2 = analysis.compute_errors(sol.slabs, uh)
            rows.append({"basis": f"Q{s}", "dim": V.dim, "e1": e1, "e2": e2})
        self.report.poly_rows = rows
        self._write("compare_poly.csv", analysis.compare_poly_csv(self.report))

    def write_manifest(self) -> Path:
        files = {p.name: _sha(p) for p in sorted(set(self.written)) if p.exists()}
        manifest = {
            "name": self.config.name,
            "config": self.config.to_dict(),
            "mesh": self.mesh.summary(),
            "velocity_sha256": self.velocity.digest(),
            "kappa_sha256": self.kappa.digest() if self.kappa is not None else None,
            "outputs_sha256": files,
            "timings_s": {k: round(v, 3) for k, v in self.timings.items()},
            "versions": {"stgmsfem": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
        }
        p = self.out / "run.json"
        self.out.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
        return p

    def reproduce(self) -> ErrorReport:
        self.write_velocity()
        self.run_fine()
        self.run_snapshots()
        self.run_basis()
        self.run_solve()
        self.run_baseline()
        self.write_manifest()
        return self.report


def format_report(out: Path) -> str:
    """Human-readable summary of the CSV files present in ``out``."""
    import csv

    parts = []
    for name, title in (("table1.csv", "Errors against the fine solution"),
                        ("compare_poly.csv", "Multiscale against polynomial bases"),
                        ("lambda_star.csv", "1 / Lambda_* by number of basis functions")):
        p = out / name
        if not p.exists():
            continue
        with open(p, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        cells = [[_pretty(h, v) for h, v in zip(header, r)] for r in body]
        widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h) for i, h in enumerate(header)]
        parts.append(title)
        parts.append("  ".join(h.rjust(w) for h, w in zip(header, widths)))
        parts += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
        parts.append("")
    if not parts:
        raise FileNotFoundError(f"no result tables in {out}")
    return "\n".join(parts)


def _pretty(header: str, value: str) -> str:
    if header in ("e1", "e2", "snapshot_ratio"):
        return f"{100 * float(value):.2f}%"
    if header == "inv_lambda_star":
        return f"{float(value):.4g}"
    return value

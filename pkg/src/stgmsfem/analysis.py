"""Slab norms, relative errors, eigenvalue diagnostics and table emitters."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import fe_core
from .fe_core import SlabFunction
from .field import VelocityField
from .spectral import SpectralBasis


def _quad(M, u: np.ndarray) -> float:
    return float(u @ (M @ u))


def v_norm(u: SlabFunction, vel: VelocityField) -> float:
    return float(np.sqrt(max(_quad(fe_core.v_norm_matrix(u.layout, vel), u.coeffs), 0.0)))


def w_norm(u: SlabFunction, vel: VelocityField) -> float:
    return float(np.sqrt(max(_quad(fe_core.w_norm_matrix(u.layout, vel), u.coeffs), 0.0)))


@dataclass(frozen=True)
class WBalance:
    """Terms of ``||u||_W^2 = inflow terms + residual``.

    ``inflow`` is the initial-face mass plus the |v.n|-weighted squared
    downstream traces on patch interfaces and on the inflow boundary;
    ``residual`` collects ``sum_K int (u_t + v . grad u) u`` and, for layouts
    with interior time breaks, half the squared-trace differences across them.
    The identity ``w2 = inflow + residual`` holds for every discrete function;
    ``residual`` vanishes for exact local transport solutions.
    """

    w2: float
    inflow: float
    residual: float

    @property
    def mismatch(self) -> float:
        return abs(self.w2 - self.inflow - self.residual)


def w_balance(u: SlabFunction, vel: VelocityField) -> WBalance:
    L, c = u.layout, u.coeffs
    which = "all" if L.mode == fe_core.DG else "active"
    inflow = (_quad(fe_core.face_mass(L, 0, "+"), c) + _quad(fe_core.downstream_edge_mass(L, vel, which), c)
              + _quad(fe_core.boundary_abs_mass(L, vel, "inflow"), c))
    res = _quad(fe_core.material_derivative_matrix(L, vel), c)
    for p in L.breaks:
        res -= 0.5 * (_quad(fe_core.face_mass(L, p, "-"), c) - _quad(fe_core.face_mass(L, p, "+"), c))
    return WBalance(w_norm(u, vel) ** 2, inflow, res)


def _check_pair(u_H: Sequence[SlabFunction], u_h: Sequence[SlabFunction]):
    if len(u_H) != len(u_h) or not u_h:
        raise ValueError("solutions must cover the same, non-empty set of slabs")
    for a, b in zip(u_H, u_h):
        if a.layout.n_dofs != b.layout.n_dofs or a.layout.mesh is not b.layout.mesh:
            raise ValueError("solutions live on different layouts")


def slab_sq_norms(u_H: Sequence[SlabFunction], u_h: Sequence[SlabFunction]) -> tuple[np.ndarray, np.ndarray]:
    """Per slab: (squared L2 error, squared L2 reference) over space-time."""
    _check_pair(u_H, u_h)
    M = fe_core.spacetime_mass(u_h[0].layout)
    err = np.array([_quad(M, a.coeffs - b.coeffs) for a, b in zip(u_H, u_h)])
    ref = np.array([_quad(M, b.coeffs) for b in u_h])
    return err, ref


def compute_errors(u_H: Sequence[SlabFunction], u_h: Sequence[SlabFunction]) -> tuple[float, float]:
    """(e1, e2): relative space-time L2 error and relative L2 error at the final time."""
    err, ref = slab_sq_norms(u_H, u_h)
    if ref.sum() <= 0:
        raise ValueError("reference solution has zero norm")
    Mf = fe_core.face_mass(u_h[-1].layout, u_h[-1].layout.n_steps, "-")
    d = u_H[-1].coeffs - u_h[-1].coeffs
    r2 = _quad(Mf, u_h[-1].coeffs)
    if r2 <= 0:
        raise ValueError("reference solution vanishes at the final time")
    e1 = float(np.sqrt(max(err.sum(), 0.0) / ref.sum()))
    e2 = float(np.sqrt(max(_quad(Mf, d), 0.0) / r2))
    return e1, e2


def v_norm_errors(u_H: Sequence[SlabFunction], u_h: Sequence[SlabFunction], vel: VelocityField) -> np.ndarray:
    _check_pair(u_H, u_h)
    N = fe_core.v_norm_matrix(u_h[0].layout, vel)
    return np.sqrt(np.maximum([_quad(N, a.coeffs - b.coeffs) for a, b in zip(u_H, u_h)], 0.0))


def terminal_l2_error(u: SlabFunction, exact, t: float | None = None, n_gauss: int = 3) -> float:
    """L2 distance at the slab end between the terminal trace and ``exact(x, y, t)``.

    Integrated cell by cell with a tensor Gauss rule of ``n_gauss`` points per
    axis, so smooth reference functions are not interpolated first.
    """
    lay, m = u.layout, u.layout.mesh
    t = float(lay.times()[-1]) if t is None else t
    pts, wts = np.polynomial.legendre.leggauss(n_gauss)
    pts, wts = 0.5 * (pts + 1), 0.5 * wts
    cells = lay.cells
    ci, cj = cells % m.nx, cells // m.nx
    x0, _, y0, _ = m.config.domain
    trace = u.terminal_trace().reshape(-1, 4)
    total = 0.0
    for s, ws in zip(pts, wts):
        for r, wr in zip(pts, wts):
            N = fe_core.shape_q1(np.array([s]), np.array([r]))[0]
            x = x0 + (ci + s) * m.hx
            y = y0 + (cj + r) * m.hy
            d = trace @ N - exact(x, y, t)
            total += ws * wr * m.hx * m.hy * float(np.sum(d * d))
    return float(np.sqrt(total))


def lambda_star_curve(bases: Sequence[SpectralBasis], Ls: Iterable[int]) -> list[tuple[int, float]]:
    """Rows ``(L, 1 / Lambda_*)`` with ``Lambda_* = min_i lambda_{L+1}``; 0 once exhausted."""
    rows = []
    for L in Ls:
        lam = min(b.lambda_after(L) for b in bases)
        if not np.isfinite(lam):
            inv = 0.0
        else:
            inv = 1.0 / lam if lam > 0 else np.inf
        rows.append((int(L), inv))
    return rows


def coercivity_audit(layout: fe_core.DofLayout, vel: VelocityField, n_samples: int = 50, span=None,
                     rng: np.random.Generator | None = None) -> float:
    """Largest relative gap ``|a(u,u) - ||u||_V^2| / ||u||_V^2`` over random ``u``."""
    rng = np.random.default_rng(0) if rng is None else rng
    K = fe_core.slab_matrix(layout, vel)
    N = fe_core.v_norm_matrix(layout, vel)
    worst = 0.0
    for _ in range(n_samples):
        if span is None:
            u = rng.standard_normal(layout.n_dofs)
        else:
            u = span @ rng.standard_normal(span.shape[1])
        a, v = _quad(K, u), _quad(N, u)
        worst = max(worst, abs(a - v) / v)
    return worst


@dataclass
class ErrorReport:
    rows: list[dict] = field(default_factory=list)  # L, dim, snapshot_ratio, e1, e2
    poly_rows: list[dict] = field(default_factory=list)  # basis, dim, e1, e2
    lambda_rows: list[tuple[int, float]] = field(default_factory=list)
    v_errors: dict = field(default_factory=dict)  # L -> per-slab V-norm errors
    meta: dict = field(default_factory=dict)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def table1_csv(report: ErrorReport) -> str:
    keys = ("L", "dim", "snapshot_ratio", "e1", "e2")
    return csv_text(keys, ([r[k] for k in keys] for r in report.rows))


def compare_poly_csv(report: ErrorReport) -> str:
    keys = ("basis", "dim", "e1", "e2")
    return csv_text(keys, ([r[k] for k in keys] for r in report.poly_rows))


def lambda_star_csv(report: ErrorReport) -> str:
    return csv_text(("L", "inv_lambda_star"), report.lambda_rows)


def spectrum_csv(bases_by_slab: dict[int, Sequence[SpectralBasis]]) -> str:
    rows = ((b.cell, slab, k + 1, lam) for slab, bases in sorted(bases_by_slab.items())
            for b in bases for k, lam in enumerate(b.eigenvalues))
    return csv_text(("cell", "slab", "k", "lambda"), rows)

"""Local spectral problems on snapshot spaces and offline basis selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import fe_core
from .fe_core import CG, DG, DofLayout
from .field import VelocityField
from .linalg import sym_eig
from .snapshot import SnapshotSpace


class DegenerateCellError(ValueError):
    pass


def _sym(A):
    A = np.asarray(A)
    return 0.5 * (A + A.T)


def spectral_matrices(target: DofLayout, vel: VelocityField, region: DofLayout | None = None):
    """Sparse matrices of a_n and s_n in fine coordinates.

    In ``cg`` mode a_n lives on the oversampled region (``region`` layout) and
    s_n on the target cell; in ``dg`` mode both live on the target cell.
    """
    n = target.n_steps
    if target.mode == CG:
        if region is None:
            raise ValueError("cg mode needs the region layout for a_n")
        A = fe_core.spacetime_stiffness(region)
        S = 0.5 * (fe_core.face_mass(target, 0, "+") + fe_core.face_mass(target, n, "-")
                   + fe_core.boundary_abs_mass(target, vel))
    else:
        A = 0.5 * (fe_core.time_jump_mass(target) + fe_core.edge_jump_mass(target, vel, "all"))
        S = 0.5 * (fe_core.face_mass(target, 0, "+") + fe_core.face_mass(target, n, "-")
                   + fe_core.break_face_mass(target) + fe_core.patch_boundary_mass(target, vel))
    return A.tocsr(), S.tocsr()


def assemble_spectral_forms(space: SnapshotSpace, vel: VelocityField, mode: str | None = None):
    """(A, S): a_n and s_n over the snapshot coefficients."""
    mode = space.target.mode if mode is None else mode
    if mode != space.target.mode:
        raise ValueError(f"snapshot space was built in {space.target.mode!r} mode, not {mode!r}")
    if len(space) == 0:
        raise DegenerateCellError(f"cell {space.cell}: empty snapshot space")
    A_f, S_f = spectral_matrices(space.target, vel, space.layout)
    psi = space.restricted
    if mode == CG:
        if space.full is None:
            raise ValueError("cg spectral forms need the unrestricted snapshots")
        psi_full = space.full
        A = psi_full.T @ (A_f @ psi_full)
    else:
        A = psi.T @ (A_f @ psi)
    S = psi.T @ (S_f @ psi)
    return _sym(A), _sym(S)


@dataclass
class EigenPairs:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # columns, S-orthonormal
    n_cut: int = 0  # directions discarded as S-null


def solve_generalized_eig(A: np.ndarray, S: np.ndarray, cut: float = 1e-10) -> EigenPairs:
    """Ascending solutions of ``A c = lambda S c`` with ``S c != 0``.

    The pencil is normalized by ``B = A + S``: directions where ``B`` is below
    ``cut * max(diag B)`` carry no content and are discarded, and on the rest
    ``S y = mu B y`` is solved (directly when ``B`` admits a Cholesky factor) with ``lambda = (1 - mu) / mu``.  Directions with
    ``mu <= cut`` lie (numerically) in the null space of ``S`` and are excluded.
    Working with ``mu`` keeps the small eigenvalues accurate in absolute terms,
    which a reduction on the range of ``S`` alone does not.
    Eigenvectors are returned s-orthonormal.
    """
    A, S = np.asarray(A, dtype=float), np.asarray(S, dtype=float)
    if A.shape != S.shape or A.shape[0] != A.shape[1]:
        raise ValueError("A and S must be square and of equal size")
    n = S.shape[0]
    if n == 0:
        raise DegenerateCellError("empty spectral problem")
    if not np.any(np.diag(S) > 0):
        raise DegenerateCellError("s_n is numerically zero")
    B = _sym(A + S)
    try:
        # B-orthonormal eigenvectors directly when B is numerically definite
        mu, X = sla.eigh(_sym(S), B)
    except sla.LinAlgError:
        d, U = sym_eig(B, symmetry_tol=1e-8)
        keep = d > cut * np.abs(np.diag(B)).max()
        Z = U[:, keep] / np.sqrt(d[keep])
        mu, Y = sym_eig(_sym(Z.T @ S @ Z), symmetry_tol=1e-6)
        X = Z @ Y
    mu, X = mu[::-1], X[:, ::-1]
    ok = mu > cut
    if not ok.any():
        raise DegenerateCellError("s_n is numerically zero")
    mu, X = np.minimum(mu[ok], 1.0), X[:, ok]
    lam = (1.0 - mu) / mu
    C = X / np.sqrt(mu)
    # Directions near the cut lose s-orthonormality to roundoff (about eps / mu).
    # Gram-Schmidt in ascending order (a Cholesky factor of the s-Gram matrix)
    # repairs them while leaving the well-resolved low modes untouched.
    G = _sym(C.T @ S @ C)
    if np.abs(G - np.eye(G.shape[0])).max() > 1e-12:
        R = sla.cholesky(G, lower=False)
        C = sla.solve_triangular(R, C.T, trans="T", lower=False).T
    # reproducible signs: largest-magnitude entry positive
    piv = np.abs(C).argmax(axis=0)
    C *= np.where(C[piv, np.arange(C.shape[1])] < 0, -1.0, 1.0)
    return EigenPairs(lam, C, int(n - ok.sum()))


@dataclass
class SpectralBasis:
    cell: int
    slab: int
    eigenvalues: np.ndarray
    vectors: np.ndarray  # snapshot coordinates
    modes: np.ndarray  # eigenfunctions restricted to K_i x slab, target coordinates
    n_snapshots: int
    target: DofLayout

    def lambda_after(self, L: int) -> float:
        """lambda_{L+1} (1-based), +inf once the spectrum is exhausted."""
        return float(self.eigenvalues[L]) if L < self.eigenvalues.size else np.inf


def spectral_basis(space: SnapshotSpace, vel: VelocityField, cut: float = 1e-10) -> SpectralBasis:
    """Ascending spectrum of the local problem and the restricted eigenfunctions."""
    A, S = assemble_spectral_forms(space, vel)
    eig = solve_generalized_eig(A, S, cut)
    modes = space.restricted @ eig.vectors
    return SpectralBasis(space.cell, space.slab, eig.values, eig.vectors, modes, len(space), space.target)


@dataclass
class OfflineBasis:
    cell: int
    functions: np.ndarray  # (target.n_dofs, n_kept), L2-orthonormal on K_i x slab
    requested: int
    lambda_next: float
    target: DofLayout

    @property
    def size(self) -> int:
        return self.functions.shape[1]


def pod(functions: np.ndarray, mass, tol: float = 1e-8) -> np.ndarray:
    """Orthonormalize columns in the mass-matrix inner product, dropping directions
    whose singular value is below ``tol`` times the largest."""
    if functions.shape[1] == 0:
        return functions
    G = _sym(functions.T @ (mass @ functions))
    w, V = sym_eig(G, symmetry_tol=1e-8)
    w, V = w[::-1], V[:, ::-1]
    sv = np.sqrt(np.maximum(w, 0.0))
    keep = sv > tol * sv[0]
    return functions @ (V[:, keep] / sv[keep])


def select_offline_basis(basis: SpectralBasis, L: int, pod_tol: float = 1e-8, mass=None) -> OfflineBasis:
    """First ``L`` eigenfunctions on ``K_i x slab`` after POD."""
    if L < 1:
        raise ValueError("L must be >= 1")
    mass = fe_core.spacetime_mass(basis.target) if mass is None else mass
    phi = pod(basis.modes[:, :L], mass, pod_tol)
    if phi.shape[1] == 0:
        raise DegenerateCellError(f"cell {basis.cell}: every offline direction was dropped")
    return OfflineBasis(basis.cell, phi, L, basis.lambda_after(L), basis.target)


def lambda_star(bases: list[SpectralBasis], L: int) -> float:
    return min(b.lambda_after(L) for b in bases)

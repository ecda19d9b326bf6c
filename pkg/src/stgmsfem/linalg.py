"""Numerical kernels: CSR assembly, sparse direct solves, dense symmetric
eigendecomposition and SVD.

Backed by SciPy's SuperLU and LAPACK.  The wrappers pin down the contracts the
rest of the package relies on (sorted CSR without explicit zeros, ascending
eigenpairs, descending singular values, residual-checked solves).
"""
from __future__ import annotations

import graphlib

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import csgraph


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


def assemble_csr(rows, cols, vals, shape) -> sp.csr_array:
    """Sum duplicate COO triplets into canonical CSR (sorted, no explicit zeros)."""
    A = sp.coo_array((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=shape).tocsr()
    return finalize(A)


def finalize(A) -> sp.csr_array:
    A = sp.csr_array(A)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def _residual_ok(A, x, b, rtol, normA=None):
    """Per-column pass flags and the per-column max-norm residuals."""
    r = np.abs(A @ x - b).max(axis=0)
    if normA is None:
        normA = spla.norm(A, np.inf) if sp.issparse(A) else np.linalg.norm(A, np.inf)
    scale = normA * np.abs(x).max(axis=0) + np.abs(b).max(axis=0)
    return r <= rtol * np.maximum(scale, np.finfo(float).tiny), r


class SparseLU:
    """Reusable LU factorization of a square sparse matrix.

    ``solve`` checks the residual and falls back to GMRES (tolerance 1e-12)
    on columns the direct solve leaves inaccurate.  The max-norm residual of
    the returned solution is kept in ``last_residual``.
    """

    def __init__(self, A, rtol: float = 1e-12):
        A = sp.csc_array(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.A = A
        self.rtol = rtol
        self.norm = spla.norm(A, np.inf)
        self.last_residual = np.nan
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            row = _first_empty_row(A)
            raise SingularMatrixError(f"sparse LU failed: {exc}", row=row) from exc
        if not np.all(np.isfinite(self._lu.U.diagonal())) or np.any(self._lu.U.diagonal() == 0):
            row = int(np.flatnonzero(self._lu.U.diagonal() == 0)[0])
            raise SingularMatrixError(f"zero pivot at row {row}", row=row)

    @property
    def shape(self):
        return self.A.shape

    def solve(self, b: np.ndarray, check: bool = True) -> np.ndarray:
        """``check=False`` skips the residual check (and the GMRES fallback)."""
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        if not check:
            return x
        ok, res = _residual_ok(self.A, x, b, self.rtol, self.norm)
        self.last_residual = float(np.max(res, initial=0.0))
        if np.all(ok):
            return x
        x = np.array(x, copy=True)
        cols = [None] if x.ndim == 1 else list(np.flatnonzero(~ok))
        for c in cols:
            bc = b if c is None else b[:, c]
            x0 = x if c is None else x[:, c]
            xc, info = spla.gmres(self.A, bc, x0=x0, rtol=1e-12, atol=0.0, maxiter=200)
            if info != 0:
                raise SingularMatrixError(f"iterative refinement did not converge (info={info})")
            if c is None:
                x = xc
            else:
                x[:, c] = xc
        self.last_residual = float(np.abs(self.A @ x - b).max(initial=0.0))
        return x


class BlockTriangularLU:
    """Forward substitution over the blocks of a block-triangular sparse matrix.

    ``groups`` labels every unknown with its block; by default the blocks are
    the strongly connected components of the matrix digraph, which is the
    finest block-triangular form.  Blocks are eliminated in a topological
    order of the block dependency graph, each with its own :class:`SparseLU`;
    consecutive blocks in that order are merged until they hold at least
    ``min_block`` unknowns, which keeps the form triangular.  Raises ``ValueError`` when the given groups depend on each other
    cyclically.  The residual of the assembled solution is checked as in
    :class:`SparseLU`.
    """

    def __init__(self, A, groups=None, rtol: float = 1e-12, min_block: int = 256):
        A = sp.csr_array(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        if groups is None:
            _, groups = csgraph.connected_components(A, directed=True, connection="strong")
        groups = np.asarray(groups)
        if groups.shape != (A.shape[0],):
            raise ValueError("expected one group label per unknown")
        rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
        gr, gc = groups[rows], groups[A.indices]
        deps = {g: set() for g in np.unique(groups).tolist()}
        for a, b in set(zip(gr[gr != gc].tolist(), gc[gr != gc].tolist())):
            deps[a].add(b)
        try:
            order = list(graphlib.TopologicalSorter(deps).static_order())
        except graphlib.CycleError as exc:
            raise ValueError("matrix is not block triangular for these groups") from exc
        self.A = A
        self.rtol = rtol
        self.norm = spla.norm(A, np.inf)
        self.last_residual = np.nan
        self.blocks = []
        members = {g: np.flatnonzero(groups == g) for g in order}
        chunks, cur = [], []
        for g in order:
            cur.append(g)
            if sum(members[h].size for h in cur) >= min_block:
                chunks.append(cur)
                cur = []
        if cur:
            chunks.append(cur)
        for chunk in chunks:
            idx = np.concatenate([members[g] for g in chunk])
            outside = set().union(*(deps[g] for g in chunk)) - set(chunk)
            rows_g = A[idx]
            # unknowns of this and later blocks are still zero when it is solved,
            # so the full row block can serve as the coupling to earlier blocks
            self.blocks.append((idx, rows_g if outside else None, SparseLU(rows_g[:, idx], rtol)))

    @property
    def shape(self):
        return self.A.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = np.zeros_like(b, order="C")  # sparse @ dense wants C order
        for idx, coupling, lu in self.blocks:
            rhs = b[idx] if coupling is None else b[idx] - coupling @ x
            x[idx] = lu.solve(rhs, check=False)
        ok, res = _residual_ok(self.A, x, b, self.rtol, self.norm)
        self.last_residual = float(np.max(res, initial=0.0))
        if not np.all(ok):
            # fall back to one global factorization (refined by GMRES if needed)
            full = SparseLU(self.A, self.rtol)
            x = full.solve(b)
            self.last_residual = full.last_residual
        return x


def _first_empty_row(A) -> int | None:
    counts = np.diff(sp.csr_array(A).indptr)
    empty = np.flatnonzero(counts == 0)
    return int(empty[0]) if empty.size else None


def sparse_solve(A, b) -> np.ndarray:
    return SparseLU(A).solve(b)


def sym_eig(A: np.ndarray, symmetry_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenpairs of a real symmetric matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.abs(A).max(initial=0.0), 1.0)
    if np.abs(A - A.T).max(initial=0.0) > symmetry_tol * scale:
        raise ValueError("matrix is not symmetric")
    w, Q = sla.eigh(0.5 * (A + A.T))
    return w, Q


def svd(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD with singular values in descending order."""
    U, s, Vt = sla.svd(np.asarray(A, dtype=float), full_matrices=False, lapack_driver="gesdd")
    return U, s, Vt

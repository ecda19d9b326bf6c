import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from test_fe_core import random_velocity
from stgmsfem import fe_core
from stgmsfem.fe_core import CG, DG
from stgmsfem.mesh import build_mesh
from stgmsfem.snapshot import generate_snapshots
from stgmsfem.spectral import (DegenerateCellError, SpectralBasis, assemble_spectral_forms, pod,
                               select_offline_basis, solve_generalized_eig, spectral_basis)


def spd(rng, n, cond=1e3):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ np.diag(np.geomspace(1.0, cond, n)) @ Q.T


def test_equal_forms_give_unit_spectrum(rng):
    S = spd(rng, 12)
    assert np.allclose(solve_generalized_eig(S, S).values, 1.0, atol=1e-10)


def test_zero_a_gives_zero_spectrum(rng):
    S = spd(rng, 12)
    assert np.allclose(solve_generalized_eig(np.zeros_like(S), S).values, 0.0, atol=1e-12)


def test_random_spd_pair_against_dense_reference(rng):
    A, S = spd(rng, 20), spd(rng, 20, 1e2)
    eig = solve_generalized_eig(A, S)
    ref = np.sort(np.linalg.eigvals(np.linalg.solve(S, A)).real)
    assert np.allclose(eig.values, ref, rtol=1e-9)
    C = eig.vectors
    assert np.abs(A @ C - (S @ C) * eig.values).max() <= 1e-9 * np.abs(A).max()
    assert np.allclose(C.T @ S @ C, np.eye(20), atol=1e-8)


def test_sign_convention(rng):
    A, S = spd(rng, 8), spd(rng, 8)
    C = solve_generalized_eig(A, S).vectors
    piv = np.abs(C).argmax(axis=0)
    assert np.all(C[piv, np.arange(8)] > 0)


def test_zero_s_is_degenerate(rng):
    with pytest.raises(DegenerateCellError):
        solve_generalized_eig(spd(rng, 5), np.zeros((5, 5)))


def test_semidefinite_s_excludes_null_directions(rng):
    X = rng.standard_normal((10, 4))
    S = X @ X.T  # rank 4
    eig = solve_generalized_eig(spd(rng, 10), S)
    assert eig.values.size == 4 and eig.n_cut == 6


def test_pod_drops_duplicate(rng):
    f = rng.standard_normal(15)
    out = pod(np.column_stack([f, f]), np.eye(15))
    assert out.shape[1] == 1
    assert np.isclose(np.linalg.norm(out), 1.0)


def test_pod_never_increases_dimension(rng):
    F = rng.standard_normal((20, 6)) @ rng.standard_normal((6, 9))
    assert pod(F, np.eye(20)).shape[1] == 6


@pytest.fixture(scope="module")
def cg_space(small_mesh, small_darcy):
    return generate_snapshots(small_mesh, small_darcy, 5, 1, CG)


@pytest.fixture(scope="module")
def cg_basis(cg_space, small_darcy):
    return spectral_basis(cg_space, small_darcy)


def test_constant_direction_has_zero_eigenvalue(cg_space, cg_basis, small_darcy):
    A, S = assemble_spectral_forms(cg_space, small_darcy)
    ones = np.ones(len(cg_space))  # sum of all snapshots is the constant one
    assert np.abs(A @ ones).max() <= 1e-10 * np.abs(A).max()
    assert ones @ S @ ones > 0
    assert abs(cg_basis.eigenvalues[0]) <= 1e-10
    mode = cg_basis.modes[:, 0]
    assert np.ptp(mode) <= 1e-10 * np.abs(mode).max()


def test_spectral_basis_structure(cg_space, cg_basis, small_darcy):
    lam = cg_basis.eigenvalues
    assert np.all(np.diff(lam) >= 0) and lam[0] >= -1e-12
    _, S = assemble_spectral_forms(cg_space, small_darcy)
    C = cg_basis.vectors
    assert np.allclose(C.T @ S @ C, np.eye(C.shape[1]), atol=1e-8)
    assert cg_basis.lambda_after(lam.size) == np.inf
    assert cg_basis.lambda_after(2) == lam[2]


def test_offline_basis_is_independent_and_nested(cg_basis):
    mass = fe_core.spacetime_mass(cg_basis.target)
    prev = None
    for L in range(1, 12):
        ob = select_offline_basis(cg_basis, L, mass=mass)
        G = ob.functions.T @ (mass @ ob.functions)
        assert np.linalg.svd(G, compute_uv=False).min() >= 1e-8
        assert ob.size <= L
        if prev is not None:  # span(L-1) lies inside span(L)
            P = ob.functions @ (ob.functions.T @ (mass @ prev))
            assert np.allclose(P, prev, atol=1e-8)
        prev = ob.functions


def test_full_spectrum_spans_restricted_modes(cg_basis):
    mass = fe_core.spacetime_mass(cg_basis.target)
    ob = select_offline_basis(cg_basis, cg_basis.eigenvalues.size, pod_tol=1e-12, mass=mass)
    F = cg_basis.modes
    P = ob.functions @ (ob.functions.T @ (mass @ F))
    assert np.abs(P - F).max() <= 1e-6 * np.abs(F).max()


def test_select_rejects_nonpositive_L(cg_basis):
    with pytest.raises(ValueError):
        select_offline_basis(cg_basis, 0)


def test_all_directions_dropped(cg_basis):
    zero = SpectralBasis(0, 0, np.zeros(2), np.zeros((3, 2)), np.zeros((cg_basis.target.n_dofs, 2)), 3,
                         cg_basis.target)
    with pytest.raises(DegenerateCellError):
        select_offline_basis(zero, 2)


@given(st.integers(0, 10_000), st.sampled_from([CG, DG]))
def test_local_spectra_invariants(seed, mode):
    m = build_mesh(nx_coarse=3, ny_coarse=3, refine_space=3, n_slabs=2, refine_time=2)
    vel = random_velocity(m, seed)
    s = generate_snapshots(m, vel, seed % 9, seed % 2, mode)
    b = spectral_basis(s, vel)
    assert np.all(np.diff(b.eigenvalues) >= 0)
    assert b.eigenvalues[0] >= -1e-12
    if mode == CG:
        assert b.eigenvalues[0] <= 1e-10

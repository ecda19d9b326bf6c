import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stgmsfem import field
from stgmsfem.field import Channel, ChannelLayout, PermeabilityField
from stgmsfem.mesh import build_mesh

# frozen after the first verified run (desk mesh, seed 0, contrast 1e4)
CHANNEL_TO_BACKGROUND_FLUX_RATIO = 12.551698271372446
DESK_KAPPA_SHA256 = "4df4d500f36af0825e1b45680fd3237a586a5c6b58b1f441f860c5186005b2d5"


def _divergence_ok(vel):
    scale = max(np.abs(vel.flux).max(), 1.0)
    return np.abs(vel.divergence()).max() <= 1e-10 * scale


def test_homogeneous_darcy_is_uniform_flow():
    m = build_mesh(nx_coarse=2, ny_coarse=3, refine_space=3)
    vel = field.solve_darcy(m, PermeabilityField(np.ones((m.ny, m.nx))))
    vert = np.arange(m.n_edges) < m.n_vertical
    assert np.allclose(vel.flux[vert], m.edge_lengths[vert], atol=1e-12)
    assert np.allclose(vel.flux[~vert], 0.0, atol=1e-12)


def test_uniform_analytic_matches_homogeneous_darcy():
    m = build_mesh(nx_coarse=3, ny_coarse=2, refine_space=2)
    darcy = field.solve_darcy(m, PermeabilityField(np.ones((m.ny, m.nx))))
    assert np.allclose(field.analytic_velocity(m, "uniform", 1.0, 0.0).flux, darcy.flux, atol=1e-12)


def test_inflow_equals_outflow_equals_one(small_mesh, small_darcy):
    out = small_darcy.boundary_normal_flux()
    assert np.isclose(-out[out < 0].sum(), 1.0, atol=1e-12)
    assert np.isclose(out[out > 0].sum(), 1.0, atol=1e-12)


def test_boundary_flux_matches_data(small_mesh, small_darcy):
    f = field.left_to_right_boundary_flux(small_mesh)
    b = small_mesh.boundary_edges
    assert np.allclose(small_darcy.boundary_normal_flux(), f * small_mesh.edge_lengths[b], atol=1e-13)


def test_incompatible_boundary_data_rejected(small_mesh, small_kappa):
    f = np.abs(field.left_to_right_boundary_flux(small_mesh))
    with pytest.raises(ValueError, match="incompatible"):
        field.solve_darcy(small_mesh, small_kappa, f)


def test_channel_flux_ratio_regression():
    m = build_mesh()
    kappa = field.generate_permeability((m.ny, m.nx), seed=0, contrast=1e4)
    assert kappa.digest() == DESK_KAPPA_SHA256
    vel = field.solve_darcy(m, kappa)
    kc = kappa.per_cell()
    ec = m.edge_cells
    interior = (ec >= 0).all(axis=1)
    side = np.where(ec >= 0, kc[np.maximum(ec, 0)], 0.0)
    channel = interior & (side[:, 0] > 1) & (side[:, 1] > 1)
    background = interior & (side[:, 0] == 1) & (side[:, 1] == 1)
    a = np.abs(vel.flux)
    assert a[channel].max() / a[background].max() == pytest.approx(CHANNEL_TO_BACKGROUND_FLUX_RATIO, rel=1e-8)


def test_contrast_one_is_uniform():
    k = field.generate_permeability((20, 20), seed=5, contrast=1.0)
    assert np.all(k.values == 1.0)


def test_generator_is_deterministic():
    a = field.generate_permeability((30, 30), seed=7)
    b = field.generate_permeability((30, 30), seed=7)
    assert a.digest() == b.digest()
    assert a.digest() != field.generate_permeability((30, 30), seed=8).digest()


def test_single_horizontal_channel():
    layout = ChannelLayout(channels=(Channel("h", 0.5, 0.5, 0.2),))
    k = field.generate_permeability((10, 10), seed=0, contrast=50.0, layout=layout)
    rows = np.flatnonzero((k.values == 50.0).all(axis=1))
    assert rows.tolist() == [4, 5]
    assert np.all(np.delete(k.values, rows, axis=0) == 1.0)


def test_permeability_must_be_positive():
    with pytest.raises(ValueError):
        PermeabilityField(np.array([[1.0, 0.0]]))


def test_rotation_is_incompressible():
    m = build_mesh(nx_coarse=3, ny_coarse=3, refine_space=4)
    vel = field.analytic_velocity(m, "rotation", omega=2.0)
    assert np.abs(vel.divergence()).max() <= 1e-14


def test_shear_horizontal_fluxes_zero():
    m = build_mesh(nx_coarse=2, ny_coarse=2, refine_space=3)
    vel = field.analytic_velocity(m, "shear")
    assert np.all(vel.flux[m.n_vertical:] == 0.0)
    assert _divergence_ok(vel)


def test_unknown_kind():
    with pytest.raises(ValueError):
        field.analytic_velocity(build_mesh(), "vortex")


def test_file_round_trips(tmp_path, small_mesh, small_kappa, small_darcy):
    field.write_permeability(tmp_path / "k.txt", small_kappa)
    assert np.array_equal(field.read_permeability(tmp_path / "k.txt").values, small_kappa.values)
    header = (tmp_path / "k.txt").read_text().split("\n")[0]
    assert header == f"{small_mesh.nx} {small_mesh.ny}"
    field.write_velocity(tmp_path / "v.txt", small_darcy)
    back = field.read_velocity(tmp_path / "v.txt", small_mesh)
    assert np.array_equal(back.flux, small_darcy.flux)
    field.write_cell_velocity(tmp_path / "vc.txt", small_darcy)
    lines = (tmp_path / "vc.txt").read_text().strip().split("\n")
    assert len(lines) == 1 + small_mesh.n_cells


def test_bad_kappa_file(tmp_path):
    (tmp_path / "k.txt").write_text("3 2\n1 2 3\n4 5\n")
    with pytest.raises(ValueError):
        field.read_permeability(tmp_path / "k.txt")


kappa_grids = st.integers(0, 2 ** 31 - 1).map(
    lambda s: np.exp(np.random.default_rng(s).uniform(-3, 3, size=(8, 8))))


@given(kappa_grids)
def test_darcy_divergence_free_for_any_kappa(values):
    m = build_mesh(nx_coarse=2, ny_coarse=2, refine_space=4)
    assert _divergence_ok(field.solve_darcy(m, PermeabilityField(values)))


@given(kappa_grids, st.floats(1e-3, 1e3))
def test_darcy_invariant_under_kappa_scaling(values, c):
    m = build_mesh(nx_coarse=2, ny_coarse=2, refine_space=4)
    a = field.solve_darcy(m, PermeabilityField(values))
    b = field.solve_darcy(m, PermeabilityField(c * values))
    assert np.allclose(a.flux, b.flux, atol=1e-10, rtol=0)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stgmsfem import field
from stgmsfem.mesh import build_mesh

settings.register_profile("stgmsfem", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("stgmsfem")


@pytest.fixture(scope="session")
def small_mesh():
    """4 x 4 coarse blocks of 5 x 5 fine cells, three slabs of three steps."""
    return build_mesh(nx_coarse=4, ny_coarse=4, refine_space=5, n_slabs=3, refine_time=3, t_final=0.06)


@pytest.fixture(scope="session")
def small_kappa(small_mesh):
    return field.generate_permeability((small_mesh.ny, small_mesh.nx), seed=3, contrast=1e3)


@pytest.fixture(scope="session")
def small_darcy(small_mesh, small_kappa):
    return field.solve_darcy(small_mesh, small_kappa)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

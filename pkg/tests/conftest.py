import pytest

from kornshell.mesh import build_shell_mesh, tag_dirichlet
from kornshell.operators import assemble_forms
from kornshell.surface import make_surface

TINY = (2, 2, 1)


@pytest.fixture(scope="session")
def sphere_band():
    return make_surface("sphere-cap", {"radius": 1.0, "band": [0.2, 0.8]})


@pytest.fixture(scope="session")
def sphere_polar():
    return make_surface("sphere-cap", {"radius": 1.0, "band": [0.0, 1.5]})


@pytest.fixture(scope="session")
def quartic():
    return make_surface("quartic-cap", {"scale": 1.0})


@pytest.fixture(scope="session")
def quartic_run():
    """Geometry used by the acceptance sweeps."""
    return make_surface("quartic-cap", {"scale": 0.2, "radius": 1.6})


@pytest.fixture(scope="session")
def cylinder():
    return make_surface("cylinder-strip", {"radius": 1.0})


def small_problem(surface, h=0.1, res=(8, 8, 2), **kw):
    mesh = build_shell_mesh(surface, h, res, min_resolution=(1, 1, 1), **kw)
    dofs = tag_dirichlet(mesh)
    return mesh, dofs, assemble_forms(mesh, dofs)

import numpy as np
import pytest
from numpy.testing import assert_allclose

from kornshell.errors import ValidationError
from kornshell.mesh import build_shell_mesh, gauss_points, graded_nodes, shape_functions, subdomain, tag_dirichlet
from kornshell.surface import make_surface


def test_shape_functions_partition_of_unity():
    xi = np.random.default_rng(0).uniform(-1, 1, (20, 3))
    N, dN = shape_functions(xi)
    assert_allclose(N.sum(-1), 1.0, atol=1e-14)
    assert_allclose(dN.sum(-2), 0.0, atol=1e-14)


def test_sphere_band_volume(sphere_band):
    # unit sphere, outward normal: dV = (1 + t)^2 dA dt
    h = 0.1
    mesh = build_shell_mesh(sphere_band, h, (32, 32, 4))
    area = 2 * np.pi * (np.cos(0.2) - np.cos(0.8))
    exact = area * (h + h**3 / 12)
    assert abs(mesh.volume - exact) / exact < 1e-3


@pytest.mark.parametrize("kind", ["sphere-cap", "quartic-cap", "cylinder-strip"])
def test_cell_count(kind):
    mesh = build_shell_mesh(make_surface(kind, {}), 0.05, (8, 8, 2))
    assert mesh.n_cells == 8 * 8 * 2
    assert mesh.cells.shape == (128, 8)


def test_thickness_above_curvature_bound():
    surf = make_surface("quartic-cap", {"scale": 1.0})
    with pytest.raises(ValidationError):
        build_shell_mesh(surf, 3.0, (8, 8, 2))


def test_resolution_floor(sphere_band):
    with pytest.raises(ValidationError):
        build_shell_mesh(sphere_band, 0.1, (4, 4, 1))


def test_dirichlet_count_open_strip(cylinder):
    mesh = build_shell_mesh(cylinder, 0.05, (8, 8, 2))
    dofs = tag_dirichlet(mesh)
    assert mesh.node_shape == (3, 9, 9)
    assert dofs.masked.sum() == (9 * 9 - 7 * 7) * 3
    assert dofs.n_free == 3 * 7 * 7 * 3


def test_dirichlet_periodic_band(sphere_band):
    mesh = build_shell_mesh(sphere_band, 0.05, (8, 8, 2))
    dofs = tag_dirichlet(mesh)
    nt, nz, nth = mesh.node_shape
    assert nth == 8
    assert dofs.masked.sum() == 2 * nth * nt
    j = (np.arange(mesh.n_nodes) // nth) % nz
    assert np.all(dofs.masked == ((j == 0) | (j == nz - 1)))


def test_dirichlet_never_masks_interior_faces(sphere_band):
    mesh = build_shell_mesh(sphere_band, 0.05, (8, 8, 2))
    dofs = tag_dirichlet(mesh)
    p = mesh.node_param
    top = np.isclose(p[:, 2], 0.025) & (p[:, 1] > 0.2 + 1e-9) & (p[:, 1] < 0.8 - 1e-9)
    assert top.any() and not dofs.masked[top].any()


def test_polar_nodes_share_dofs(sphere_polar):
    mesh = build_shell_mesh(sphere_polar, 0.05, (8, 8, 2))
    dofs = tag_dirichlet(mesh)
    nt, nz, nth = mesh.node_shape
    for k in range(nt):
        ids = mesh.node_id(np.arange(nth), 0, k)
        assert len({tuple(dofs.index[i]) for i in ids}) == 1
        assert_allclose(mesh.node_xyz[ids], mesh.node_xyz[ids[:1]].repeat(nth, 0), atol=1e-6)  # guard offset


def test_graded_nodes_refine_near_start():
    z = graded_nodes(0.0, 1.0, 20, 0.3, 2.0)
    assert z[0] == 0.0 and z[-1] == 1.0 and np.all(np.diff(z) > 0)
    inner = np.diff(z)[z[:-1] < 0.3 - 1e-12]
    outer = np.diff(z)[z[1:] > 0.3 + 1e-12]
    assert_allclose(outer.mean() / inner.mean(), 2.0, rtol=0.2)


def test_subdomain_all_and_one(sphere_band):
    mesh = build_shell_mesh(sphere_band, 0.05, (16, 16, 2))
    assert subdomain(mesh, (0.5, 0.5), 10.0).cells.size == mesh.n_cells
    c = mesh.cell_centers[37]
    assert subdomain(mesh, tuple(c[:2]), 1e-4).cells.size == 2  # one per thickness layer


def test_subdomain_disc_count(quartic):
    # polar chart: cells in a tangent disc around the apex, one per layer
    h, c = 0.05, 1.0
    mesh = build_shell_mesh(quartic, h, (32, 32, 2))
    r = c * h**0.25
    n = subdomain(mesh, (0.0, 0.0), r).cells.size / 2
    # uniform z spacing: the disc holds a fraction r of the rings, +-1 ring
    expected = mesh.n_cells / 2 * r
    ring = 32
    assert abs(n - expected) <= ring


def test_export_text(tmp_path, cylinder):
    mesh = build_shell_mesh(cylinder, 0.05, (8, 8, 2))
    path = tmp_path / "mesh.txt"
    mesh.export_text(path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3 + mesh.n_nodes + mesh.n_cells
    node = lines[2].split()
    assert_allclose([float(v) for v in node[4:]], mesh.node_xyz[0], rtol=0, atol=0)


def test_gauss_rule_exactness():
    x, w = gauss_points(2)
    assert_allclose(w.sum(), 8.0)
    assert_allclose(np.sum(w * x[:, 0] ** 2 * x[:, 1] ** 2), 8 / 9)

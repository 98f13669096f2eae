"""Structured hexahedral discretization of the shell over E x (-h/2, h/2).

Nodes sit on a tensor grid in the chart parameters ``(theta, z, t)`` and are
embedded exactly at ``r(theta, z) + t n(theta, z)``.  Cells are trilinear
hexahedra; shape-function gradients come from the isoparametric map (so
rigid motions are reproduced exactly) while the quadrature weights carry the
exact volume factor ``A_theta A_z (1 + t kappa_theta)(1 + t kappa_z)``.

On a polar chart the nodes of the line ``z = z1`` coincide physically in each
thickness layer; :func:`tag_dirichlet` merges their degrees of freedom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .surface import FrameSample, SurfacePatch

CORNERS = np.array([(-1, -1, -1), (1, -1, -1), (1, 1, -1), (-1, 1, -1),
                    (-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1)], dtype=float)
GAUSS2 = np.array([-1.0, 1.0]) / math.sqrt(3.0)


def shape_functions(xi: np.ndarray):
    """Trilinear shape values (..., 8) and local gradients (..., 8, 3) at ``xi`` (..., 3)."""
    xi = np.asarray(xi, float)
    f = 1.0 + CORNERS * xi[..., None, :]           # (..., 8, 3)
    N = np.prod(f, axis=-1) / 8.0
    dN = np.empty(f.shape)
    dN[..., 0] = CORNERS[:, 0] * f[..., 1] * f[..., 2] / 8.0
    dN[..., 1] = CORNERS[:, 1] * f[..., 0] * f[..., 2] / 8.0
    dN[..., 2] = CORNERS[:, 2] * f[..., 0] * f[..., 1] / 8.0
    return N, dN


def gauss_points(order: int = 2):
    """Tensor Gauss-Legendre points (m, 3) and weights (m,) on [-1, 1]^3."""
    if order == 2:
        x1, w1 = GAUSS2, np.ones(2)
    else:
        x1, w1 = np.polynomial.legendre.leggauss(order)
    X = np.array(np.meshgrid(x1, x1, x1, indexing="ij")).reshape(3, -1).T
    W = np.prod(np.array(np.meshgrid(w1, w1, w1, indexing="ij")).reshape(3, -1), axis=0)
    return X, W


def graded_nodes(lo: float, hi: float, n: int, refine_to: float | None = None,
                 factor: float = 2.0) -> np.ndarray:
    """``n`` cells on [lo, hi], ``factor`` times denser on [lo, refine_to]."""
    if refine_to is None or refine_to <= lo or refine_to >= hi or factor == 1.0:
        return np.linspace(lo, hi, n + 1)
    inner = factor * (refine_to - lo)
    outer = hi - refine_to
    n_in = min(n - 1, max(1, int(round(n * inner / (inner + outer)))))
    return np.concatenate([np.linspace(lo, refine_to, n_in + 1),
                           np.linspace(refine_to, hi, n - n_in + 1)[1:]])


@dataclass(frozen=True)
class ShellMesh:
    """Structured (theta, z, t) hexahedral mesh of the shell of thickness ``h``.

    ``s_nodes`` are fractions in [0, 1] of the local z-extent, so variable
    bounds ``z1(theta), z2(theta)`` are supported.
    """

    surface: SurfacePatch
    h: float
    resolution: tuple
    theta_nodes: np.ndarray
    s_nodes: np.ndarray
    t_nodes: np.ndarray
    quad_order: int = 2
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- topology ---------------------------------------------------------
    @property
    def node_shape(self) -> tuple:
        return (self.t_nodes.size, self.s_nodes.size, self.theta_nodes.size)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_shape))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.resolution))

    def node_id(self, i, j, k):
        nt, nz, nth = self.node_shape
        return (np.asarray(k) * nz + np.asarray(j)) * nth + np.asarray(i) % nth

    @cached_property
    def node_param(self) -> np.ndarray:
        """(n_nodes, 3) chart coordinates ``(theta, z, t)``."""
        K, J, I = np.meshgrid(np.arange(self.node_shape[0]), np.arange(self.node_shape[1]),
                              np.arange(self.node_shape[2]), indexing="ij")
        th = self.theta_nodes[I.ravel()]
        lo, hi = self.surface.z_bounds(th)
        z = lo + self.s_nodes[J.ravel()] * (hi - lo)
        return np.column_stack([th, z, self.t_nodes[K.ravel()]])

    @cached_property
    def node_xyz(self) -> np.ndarray:
        p = self.node_param
        fr = self.node_frames
        return fr.position + p[:, 2:3] * fr.normal

    @cached_property
    def node_frames(self) -> FrameSample:
        """Frames at the nodes; polar-line nodes use the limiting frame along their theta."""
        p = self.node_param
        z = p[:, 1]
        if self.surface.polar:
            lo, _ = self.surface.z_bounds(p[:, 0])
            z = np.maximum(z, lo + self.surface.guard)
            fr = self.surface.frames(p[:, 0], z, check=False)
            pos = self.surface.position(p[:, 0], p[:, 1])
            return _with_position(fr, pos)
        return self.surface.frames(p[:, 0], z, check=False)

    @cached_property
    def cells(self) -> np.ndarray:
        """(n_cells, 8) node ids; local order follows :data:`CORNERS`."""
        n_th, n_z, n_t = self.resolution
        K, J, I = np.meshgrid(np.arange(n_t), np.arange(n_z), np.arange(n_th), indexing="ij")
        I, J, K = I.ravel(), J.ravel(), K.ravel()
        ids = [self.node_id(I + (c[0] > 0), J + (c[1] > 0), K + (c[2] > 0)) for c in CORNERS]
        return np.column_stack(ids)

    @cached_property
    def cell_param(self) -> np.ndarray:
        """(n_cells, 8, 3) chart coordinates with theta unwrapped across the seam."""
        p = self.node_param[self.cells].copy()
        if self.surface.periodic:
            th = p[..., 0]
            wrap = th[:, [1, 2, 5, 6]] < th[:, [0, 3, 4, 7]]
            th[:, [1, 2, 5, 6]] += wrap
        return p

    @cached_property
    def cell_centers(self) -> np.ndarray:
        return self.cell_param.mean(axis=1)

    # -- quadrature -------------------------------------------------------
    @cached_property
    def quadrature(self) -> "CellQuadrature":
        return CellQuadrature.build(self, self.quad_order)

    @property
    def volume(self) -> float:
        return float(self.quadrature.weights.sum())

    @cached_property
    def aspect_ratios(self) -> np.ndarray:
        """Per-cell longest mid-surface edge divided by the thickness ``h``."""
        x = self.node_xyz[self.cells]
        edges = [(0, 1), (1, 2), (2, 3), (3, 0)]
        lengths = np.stack([np.linalg.norm(x[:, a] - x[:, b], axis=-1) for a, b in edges], -1)
        return lengths.max(axis=-1) / self.h

    def export_text(self, path: str | Path) -> None:
        """Write ``# nodes: id theta z t x y z`` then ``# cells: id n0 .. n7``."""
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            fh.write(f"# kornshell mesh h={self.h!r} resolution={tuple(self.resolution)}\n")
            fh.write("# nodes: id theta z t x y z\n")
            for i, (p, x) in enumerate(zip(self.node_param.tolist(), self.node_xyz.tolist())):
                fh.write(f"{i} " + " ".join(repr(v) for v in p + x) + "\n")
            fh.write("# cells: id n0 n1 n2 n3 n4 n5 n6 n7\n")
            for c, ids in enumerate(self.cells):
                fh.write(f"{c} " + " ".join(str(int(v)) for v in ids) + "\n")


def _with_position(fr: FrameSample, pos: np.ndarray) -> FrameSample:
    from dataclasses import replace

    return replace(fr, position=pos)


@dataclass(frozen=True)
class CellQuadrature:
    """Per-cell Gauss data: chart coordinates, frames, weights, shape gradients."""

    param: np.ndarray        # (nc, ng, 3)
    weights: np.ndarray      # (nc, ng)
    N: np.ndarray            # (ng, 8)
    grad: np.ndarray         # (nc, ng, 8, 3) Cartesian gradients of shape functions
    frames: FrameSample      # arrays of shape (nc, ng)

    @classmethod
    def build(cls, mesh: ShellMesh, order: int = 2) -> "CellQuadrature":
        X, W = gauss_points(order)
        N, dN = shape_functions(X)                              # (ng, 8), (ng, 8, 3)
        cp = mesh.cell_param                                    # (nc, 8, 3)
        param = np.einsum("ga,cai->cgi", N, cp)
        jac_p = np.einsum("gak,cai->cgik", dN, cp)              # d(param_i)/d(xi_k)
        det_p = np.abs(np.linalg.det(jac_p))
        fr = mesh.surface.frames(param[..., 0], param[..., 1], check=False)
        t = param[..., 2]
        shift = (1 + t * fr.kappa_theta) * (1 + t * fr.kappa_z)
        weights = fr.A_theta * fr.A_z * shift * det_p * W
        xyz = mesh.node_xyz[mesh.cells]                         # (nc, 8, 3)
        jac = np.einsum("gak,cai->cgik", dN, xyz)               # dx_i/dxi_k
        inv = np.linalg.inv(jac)                                # dxi_k/dx_i
        grad = np.einsum("gak,cgki->cgai", dN, inv)
        return cls(param=param, weights=weights, N=N, grad=grad, frames=fr)


def build_shell_mesh(surface: SurfacePatch, h: float, resolution, *,
                     grading: dict | None = None,
                     min_resolution=(8, 8, 2)) -> ShellMesh:
    """Mesh the shell of thickness ``h`` with ``resolution = (n_theta, n_z, n_t)`` cells.

    ``grading = {"radius": r, "factor": 2}`` makes the z spacing ``factor``
    times finer within chart distance ``r`` of the first flat point (polar
    charts: ``z - z1 < r``; regular charts: ``|z - z0| < r``).
    ``min_resolution`` may be lowered for oracle checks on tiny meshes.
    """
    n_th, n_z, n_t = (int(v) for v in resolution)
    if any(n < m for n, m in zip((n_th, n_z, n_t), min_resolution)) or min(n_th, n_z, n_t) < 1:
        raise ValidationError(f"resolution must be at least {tuple(min_resolution)}")
    if not h > 0:
        raise ValidationError("thickness must be positive")
    if surface.periodic and n_th < 3:
        raise ValidationError("periodic charts need at least 3 cells around")
    theta_nodes = (np.arange(n_th) / n_th) if surface.periodic else np.linspace(0, 1, n_th + 1)
    s_nodes = np.linspace(0.0, 1.0, n_z + 1)
    if grading and surface.flat_points and surface.constant_bounds():
        lo, hi = (float(v) for v in surface.z_bounds(0.0))
        r = float(grading.get("radius", 0.0))
        fac = float(grading.get("factor", 2.0))
        z0 = surface.flat_points[0][1]
        if surface.is_polar_point(surface.flat_points[0]):
            zs = graded_nodes(lo, hi, n_z, lo + r, fac)
        else:
            zs = _graded_around(lo, hi, n_z, z0 - r, z0 + r, fac)
        s_nodes = (zs - lo) / (hi - lo)
    t_nodes = np.linspace(-h / 2, h / 2, n_t + 1)

    mesh = ShellMesh(surface, float(h), (n_th, n_z, n_t), theta_nodes, s_nodes, t_nodes)
    fr = mesh.node_frames
    kmax = float(np.max(np.maximum(np.abs(fr.kappa_theta), np.abs(fr.kappa_z))))
    if h * kmax >= 2.0:
        raise ValidationError(f"h = {h} exceeds the self-intersection bound 2/max(kappa) = {2 / kmax:.4g}")
    return mesh


def _graded_around(lo, hi, n, a, b, factor):
    a, b = max(lo, a), min(hi, b)
    if b <= a:
        return np.linspace(lo, hi, n + 1)
    lens = np.array([a - lo, factor * (b - a), hi - b])
    counts = np.maximum(np.round(n * lens / lens.sum()).astype(int), [0, 1, 0])
    counts[1] = n - counts[0] - counts[2]
    pieces = [np.linspace(lo, a, counts[0] + 1)] if counts[0] else [np.array([lo])]
    pieces.append(np.linspace(a, b, counts[1] + 1)[1:])
    if counts[2]:
        pieces.append(np.linspace(b, hi, counts[2] + 1)[1:])
    return np.concatenate(pieces)


@dataclass(frozen=True)
class DofMap:
    """Free-dof numbering: ``index[node, comp]`` is -1 on masked nodes.

    ``rep[node]`` is the representative node whose dofs a node shares (polar
    line nodes of a layer all share one representative).
    """

    index: np.ndarray
    masked: np.ndarray
    rep: np.ndarray
    n_free: int

    def restrict(self, nodal: np.ndarray) -> np.ndarray:
        """Free-dof vector from nodal (n_nodes, 3) values (representatives win)."""
        x = np.zeros(self.n_free)
        ok = self.index >= 0
        x[self.index[ok]] = nodal[ok]
        return x

    def expand(self, x: np.ndarray) -> np.ndarray:
        """Nodal (n_nodes, 3) values from a free-dof vector; masked nodes get 0."""
        out = np.zeros(self.index.shape)
        ok = self.index >= 0
        out[ok] = x[self.index[ok]]
        return out


def tag_dirichlet(mesh: ShellMesh) -> DofMap:
    """Clamp every node whose (theta, z) lies on the lateral boundary of E."""
    nt, nz, nth = mesh.node_shape
    K, J, I = np.meshgrid(np.arange(nt), np.arange(nz), np.arange(nth), indexing="ij")
    K, J, I = K.ravel(), J.ravel(), I.ravel()
    surf = mesh.surface
    masked = J == nz - 1
    if not surf.polar:
        masked |= J == 0
    if not surf.periodic:
        masked |= (I == 0) | (I == nth - 1)
    rep = np.arange(mesh.n_nodes)
    if surf.polar:
        pole = J == 0
        rep[pole] = mesh.node_id(0, 0, K[pole])
    is_rep = (rep == np.arange(mesh.n_nodes)) & ~masked
    order = np.cumsum(is_rep) - 1
    base = np.where(is_rep, order, -1)
    base = base[rep]
    base = np.where(masked, -1, base)
    index = np.where(base[:, None] >= 0, 3 * base[:, None] + np.arange(3), -1)
    return DofMap(index=index, masked=masked, rep=rep, n_free=3 * int(is_rep.sum()))


@dataclass(frozen=True)
class CellSet:
    """Cells whose chart-space center lies in the closed disc ``D_radius(center)``."""

    cells: np.ndarray
    center: tuple
    radius: float


def subdomain(mesh: ShellMesh, center, radius: float) -> CellSet:
    """Cells with center in the chart disc of ``radius`` around ``center``.

    Distances use :meth:`SurfacePatch.local_map`: parameter offsets on regular
    charts, tangent-plane Cartesian radius around a polar point.
    """
    if not radius > 0:
        raise ValidationError("radius must be positive")
    c = mesh.cell_centers
    P, _, _ = mesh.surface.local_map(c[:, 0], c[:, 1], center)
    dist = np.linalg.norm(P, axis=-1)
    return CellSet(cells=np.flatnonzero(dist <= radius), center=tuple(center), radius=float(radius))

"""Localized Kirchhoff Ansatz around a flat point.

The normal displacement is a bump ``F = f(P / (c h^alpha))`` where ``P`` are
local coordinates around the center (parameter offsets on a regular chart,
tangent-plane Cartesian coordinates around a polar apex).  The tangential
components follow the Kirchhoff rule ``u = F n - t grad_S F``, i.e.

    u_t = F,  u_theta = -t F_theta / A_theta,  u_z = -t F_z / A_z,

which makes the normal-tangential shear of the simplified gradient vanish.
All norms here use exact derivatives of ``f``; :func:`build_ansatz` gives the
nodal interpolant for the eigen-solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .mesh import ShellMesh
from .operators import CurvilinearJet, DisplacementField, curvilinear_gradient, simplified_gradient, sym
from .surface import SurfacePatch

# Quantities in the order of the scaling table: gradient entries, then totals,
# then displacement components.
QUANTITIES = ("grad_11", "grad_22", "grad_23", "grad_32", "grad_33",
              "grad_12", "grad_13", "grad_21", "grad_31",
              "grad", "e", "u_t", "u_theta", "u_z")
EXPECTED_EXPONENTS = {"grad_11": None, "grad_22": 2.0, "grad_23": 2.0, "grad_32": 2.0, "grad_33": 2.0,
                   "grad_12": 0.5, "grad_13": 0.5, "grad_21": 0.5, "grad_31": 0.5,
                   "grad": 0.5, "e": 2.0, "u_t": 1.0, "u_theta": 2.0, "u_z": 2.0}


@dataclass(frozen=True)
class BumpProfile:
    """Tensor bump ``(1 - xi^2)^p (1 - eta^2)^p`` on [-1, 1]^2, zero outside.

    ``p = 2`` is C^1 across the boundary of the square; ``p = 3`` is C^2.
    """

    power: int = 2

    def _g(self, s):
        p = self.power
        inside = np.abs(s) < 1
        q = np.where(inside, 1 - s * s, 0.0)
        g0 = q**p
        g1 = -2 * p * s * q ** (p - 1)
        g2 = -2 * p * q ** (p - 1) + 4 * p * (p - 1) * s * s * q ** (p - 2)
        return g0 * inside, g1 * inside, g2 * inside

    def derivatives(self, xi, eta):
        """``f``, gradient (..., 2) and Hessian (..., 2, 2)."""
        a0, a1, a2 = self._g(np.asarray(xi, float))
        b0, b1, b2 = self._g(np.asarray(eta, float))
        f = a0 * b0
        df = np.stack([a1 * b0, a0 * b1], -1)
        d2 = np.empty(f.shape + (2, 2))
        d2[..., 0, 0] = a2 * b0
        d2[..., 1, 1] = a0 * b2
        d2[..., 0, 1] = d2[..., 1, 0] = a1 * b1
        return f, df, d2

    def norms(self, order: int = 16) -> tuple:
        """``(||f||, ||grad f||, ||D^2 f||)`` in L2([-1, 1]^2)."""
        x, w = np.polynomial.legendre.leggauss(order)
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w)
        f, df, d2 = self.derivatives(X, Y)
        return (float(np.sqrt(np.sum(W * f**2))),
                float(np.sqrt(np.sum(W * np.sum(df**2, -1)))),
                float(np.sqrt(np.sum(W * np.sum(d2**2, (-1, -2))))))


PROFILES = {"bump": BumpProfile(2), "bump-c2": BumpProfile(3)}


@dataclass(frozen=True)
class AnsatzSpec:
    """Ansatz centered at ``center`` with support half-width ``c h^alpha``."""

    center: tuple
    h: float
    alpha: float = 0.25
    c: float = 1.0
    profile: str = "bump"
    amplitude: float = 1.0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValidationError(f"unknown bump profile {self.profile!r}")
        if not (self.h > 0 and self.c > 0 and self.alpha > 0):
            raise ValidationError("h, c and alpha must be positive")

    @property
    def scale(self) -> float:
        return self.c * self.h**self.alpha

    @property
    def bump(self) -> BumpProfile:
        return PROFILES[self.profile]

    def with_h(self, h: float) -> "AnsatzSpec":
        return AnsatzSpec(self.center, h, self.alpha, self.c, self.profile, self.amplitude)


def _normal_jet(surface: SurfacePatch, spec: AnsatzSpec, theta, z):
    """``F`` with first (..., 2) and second (..., 2, 2) chart derivatives."""
    P, dP, d2P = surface.local_map(theta, z, spec.center, spec.scale)
    f, df, d2f = spec.bump.derivatives(P[..., 0], P[..., 1])
    F1 = np.einsum("...k,...ka->...a", df, dP)
    F2 = np.einsum("...kl,...ka,...lb->...ab", d2f, dP, dP) + np.einsum("...k,...kab->...ab", df, d2P)
    A = spec.amplitude
    return A * f, A * F1, A * F2


def ansatz_jet(surface: SurfacePatch, spec: AnsatzSpec, theta, z, t):
    """Exact curvilinear jet of the Ansatz and the frame at ``(theta, z, t)``."""
    theta, z, t = np.broadcast_arrays(*(np.asarray(v, float) for v in (theta, z, t)))
    fr = surface.frames(theta, z, check=False)
    F, dF, d2F = _normal_jet(surface, spec, theta, z)
    At, Az = fr.A_theta, fr.A_z
    u = np.stack([F, -t * dF[..., 0] / At, -t * dF[..., 1] / Az], -1)
    du = np.zeros(F.shape + (3, 3))
    du[..., 0, 1] = dF[..., 0]
    du[..., 0, 2] = dF[..., 1]
    du[..., 1, 0] = -dF[..., 0] / At
    du[..., 2, 0] = -dF[..., 1] / Az
    for b in range(2):
        du[..., 1, 1 + b] = -t * (d2F[..., 0, b] / At - dF[..., 0] * fr.dA_theta[..., b] / At**2)
        du[..., 2, 1 + b] = -t * (d2F[..., 1, b] / Az - dF[..., 1] * fr.dA_z[..., b] / Az**2)
    return CurvilinearJet(u, du), fr


def check_support(surface: SurfacePatch, spec: AnsatzSpec, n: int = 64) -> None:
    """Raise unless the closed support square lies inside E (away from its boundary)."""
    s = np.linspace(-1, 1, n)
    one = np.ones_like(s)
    xi = np.concatenate([s, one, s[::-1], -one])
    eta = np.concatenate([-one, s, one, s[::-1]])
    th, zz = surface.local_inverse(xi, eta, spec.center, spec.scale)
    lo, hi = surface.z_bounds(th)
    ok = (zz > lo) & (zz < hi)
    if not surface.periodic:
        ok &= (th > 0) & (th < 1)
    if not np.all(ok):
        raise ValidationError("Ansatz support exits the parameter domain E")


def support_quadrature(surface: SurfacePatch, spec: AnsatzSpec, n_xy: int = 32, n_t: int = 8):
    """Gauss points ``(theta, z, t)`` and weights for integrals over the shell
    restricted to the Ansatz support, with the full volume factor."""
    check_support(surface, spec)
    x, w = np.polynomial.legendre.leggauss(n_xy)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    th, zz = surface.local_inverse(X, Y, spec.center, spec.scale)
    _, dP, _ = surface.local_map(th, zz, spec.center, spec.scale)
    jac = 1.0 / np.abs(np.linalg.det(dP))
    fr = surface.frames(th, zz, check=False)
    xt, wt = np.polynomial.legendre.leggauss(n_t)
    tt = 0.5 * spec.h * xt
    shift = (1 + tt[:, None, None] * fr.kappa_theta) * (1 + tt[:, None, None] * fr.kappa_z)
    weights = (0.5 * spec.h * wt)[:, None, None] * (fr.A_theta * fr.A_z * jac * W) * shift
    T = np.broadcast_to(tt[:, None, None], weights.shape)
    TH = np.broadcast_to(th, weights.shape)
    ZZ = np.broadcast_to(zz, weights.shape)
    return TH, ZZ, T, weights


def exact_norms(surface: SurfacePatch, spec: AnsatzSpec, n_xy: int = 32, n_t: int = 8) -> dict:
    """Squared weighted L2 norms of every scaling-table quantity, exact derivatives."""
    th, zz, t, w = support_quadrature(surface, spec, n_xy, n_t)
    jet, fr = ansatz_jet(surface, spec, th, zz, t)
    G = curvilinear_gradient(jet, fr, t)
    e = sym(G)
    out = {}
    for i in range(3):
        for j in range(3):
            key = f"grad_{i + 1}{j + 1}"
            if key in QUANTITIES:
                out[key] = float(np.sum(w * G[..., i, j] ** 2))
    out["grad"] = float(np.sum(w * np.sum(G**2, (-1, -2))))
    out["e"] = float(np.sum(w * np.sum(e**2, (-1, -2))))
    for k, name in enumerate(("u_t", "u_theta", "u_z")):
        out[name] = float(np.sum(w * jet.u[..., k] ** 2))
    F = simplified_gradient(jet, fr, "F")
    out["F_gap"] = float(np.sum(w * np.sum((F - G) ** 2, (-1, -2))))
    F1s = sym(simplified_gradient(jet, fr, "F1"))
    out["F1_row1"] = float(np.sum(w * np.sum(F1s[..., 0, :] ** 2, -1)))
    out["F1_sym"] = float(np.sum(w * np.sum(F1s**2, (-1, -2))))
    out["grad_11_max"] = float(np.max(np.abs(G[..., 0, 0])))
    return {k: out[k] for k in QUANTITIES} | {k: v for k, v in out.items() if k not in QUANTITIES}


def ansatz_quotient(surface: SurfacePatch, spec: AnsatzSpec, **kw) -> float:
    """``||e(u)||^2 / ||grad u||^2`` for the exact Ansatz."""
    n = exact_norms(surface, spec, **kw)
    return n["e"] / n["grad"]


def support_curvature_max(surface: SurfacePatch, spec: AnsatzSpec, n: int = 41) -> float:
    """Largest principal curvature over the support square."""
    s = np.linspace(-1, 1, n)
    X, Y = np.meshgrid(s, s, indexing="ij")
    th, zz = surface.local_inverse(X, Y, spec.center, spec.scale)
    lo, _ = surface.z_bounds(th)
    zz = np.maximum(zz, lo + surface.guard) if surface.polar else zz
    fr = surface.frames(th, zz, check=False)
    return float(np.max(np.maximum(fr.kappa_theta, fr.kappa_z)))


def build_ansatz(surface: SurfacePatch, spec: AnsatzSpec, mesh: ShellMesh) -> DisplacementField:
    """Nodal interpolant of ``u = F n - t grad_S F`` on ``mesh`` (Cartesian components)."""
    check_support(surface, spec)
    p = mesh.node_param
    th, zz, t = p[:, 0], p[:, 1], p[:, 2]
    if surface.polar:
        lo, _ = surface.z_bounds(th)
        zz = np.maximum(zz, lo + surface.guard)
    P, _, _ = surface.local_map(th, zz, spec.center, spec.scale)
    inside = np.all(np.abs(P) < 1, axis=-1) & (t == 0)
    along = _resolved_lines(mesh, P, inside)
    if along < 3:
        raise ValidationError(f"support of width {2 * spec.scale:.3g} is under-resolved by the mesh")
    fr = mesh.node_frames
    F, dF, _ = _normal_jet(surface, spec, th, zz)
    grad_s = (dF[:, 0] / fr.A_theta)[:, None] * fr.e_theta + (dF[:, 1] / fr.A_z)[:, None] * fr.e_z
    vals = F[:, None] * fr.normal - t[:, None] * grad_s
    nt, nz, nth = mesh.node_shape
    outside = ~np.all(np.abs(P) < 1, axis=-1)
    vals[outside] = 0.0
    if surface.polar:
        k = np.arange(nt)
        for kk in k:
            ids = mesh.node_id(np.arange(nth), 0, kk)
            vals[ids] = vals[mesh.node_id(0, 0, kk)]
    return DisplacementField(mesh, vals, label="ansatz")


def _resolved_lines(mesh: ShellMesh, P, inside) -> int:
    """Number of distinct node rows crossing the support along the coarser direction."""
    p = mesh.node_param
    rows_z = np.unique(np.round(p[inside, 1], 12)).size
    if mesh.surface.polar:
        return rows_z
    rows_t = np.unique(np.round(p[inside, 0], 12)).size
    return min(rows_z, rows_t)

"""Gradients in curvilinear coordinates and sparse quadratic forms on the shell mesh.

Energies are assembled from Cartesian displacement components, so nothing
depends on a chart near the polar apex.  The curvilinear evaluators
(full gradient, simplified gradients F and F1) act on pointwise jets and are
used for identity audits and the Ansatz.

Matrix and gradient index convention: ``G[..., i, j]`` is the ``i``-th
component of the derivative in direction ``j``, both ordered ``(t, theta, z)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import MemoryBudgetError, ValidationError
from .mesh import DofMap, ShellMesh
from .surface import FrameSample

FORM_IDS = ("N", "D", "M", "M_t", "M_theta", "M_z")
DEFAULT_MEMORY_BUDGET = 2 * 1024**3


# -- pointwise jets -------------------------------------------------------

@dataclass(frozen=True)
class CurvilinearJet:
    """Curvilinear components ``u[..., i]`` and partials ``du[..., i, j] = d_j u_i``.

    Components and derivative directions are both ordered ``(t, theta, z)``.
    """

    u: np.ndarray
    du: np.ndarray


def frame_derivatives(fr: FrameSample) -> np.ndarray:
    """``dE[..., i, j, :]``: derivative of frame vector ``i`` along chart direction ``j``.

    Frame order ``(n, e_theta, e_z)``; directions ``(t, theta, z)`` (the frame
    does not depend on ``t``).
    """
    n, et, ez = fr.normal, fr.e_theta, fr.e_z
    At, Az = fr.A_theta[..., None], fr.A_z[..., None]
    At_z = fr.dA_theta[..., 1][..., None]
    Az_t = fr.dA_z[..., 0][..., None]
    kt, kz = fr.kappa_theta[..., None], fr.kappa_z[..., None]
    dE = np.zeros(n.shape[:-1] + (3, 3, 3))
    dE[..., 0, 1, :] = At * kt * et
    dE[..., 0, 2, :] = Az * kz * ez
    dE[..., 1, 1, :] = -(At_z / Az) * ez - At * kt * n
    dE[..., 1, 2, :] = (Az_t / At) * ez
    dE[..., 2, 1, :] = (At_z / Az) * et
    dE[..., 2, 2, :] = -(Az_t / At) * et - Az * kz * n
    return dE


def tangent_vectors(fr: FrameSample, t) -> np.ndarray:
    """``T[..., j, :] = d(r + t n)/d(t, theta, z)_j`` in Cartesian components."""
    t = np.asarray(t, float)[..., None]
    T = np.empty(fr.normal.shape[:-1] + (3, 3))
    T[..., 0, :] = fr.normal
    T[..., 1, :] = (fr.A_theta[..., None] * (1 + t * fr.kappa_theta[..., None])) * fr.e_theta
    T[..., 2, :] = (fr.A_z[..., None] * (1 + t * fr.kappa_z[..., None])) * fr.e_z
    return T


def jet_from_cartesian(u: np.ndarray, grad: np.ndarray, fr: FrameSample, t) -> CurvilinearJet:
    """Curvilinear jet of a field known by Cartesian value and Cartesian gradient.

    ``grad[..., i, k] = du_i/dx_k``.
    """
    Q = fr.frame_matrix()                                  # (..., 3 frame, 3 cart)
    T = tangent_vectors(fr, t)                             # (..., 3 dir, 3 cart)
    dE = frame_derivatives(fr)
    comps = np.einsum("...ic,...c->...i", Q, u)
    du_dir = np.einsum("...ck,...jk->...cj", grad, T)      # d_j u (Cartesian c)
    d = np.einsum("...ic,...cj->...ij", Q, du_dir) + np.einsum("...ijc,...c->...ij", dE, u)
    return CurvilinearJet(comps, d)


def curvilinear_gradient(jet: CurvilinearJet, fr: FrameSample, t) -> np.ndarray:
    """Gradient matrix of a field in the orthonormal frame ``(n, e_theta, e_z)``.

    Includes the thickness-shift denominators ``1 + t kappa``.
    """
    t = np.asarray(t, float)
    st = 1 + t * fr.kappa_theta
    sz = 1 + t * fr.kappa_z
    if np.any(st <= 0) or np.any(sz <= 0):
        raise ValidationError("1 + t*kappa must be positive")
    G = _frozen_gradient(jet, fr)
    G[..., :, 1] /= st[..., None]
    G[..., :, 2] /= sz[..., None]
    return G


def _frozen_gradient(jet: CurvilinearJet, fr: FrameSample) -> np.ndarray:
    u, d = jet.u, jet.du
    ut, uth, uz = u[..., 0], u[..., 1], u[..., 2]
    At, Az = fr.A_theta, fr.A_z
    At_z, Az_t = fr.dA_theta[..., 1], fr.dA_z[..., 0]
    kt, kz = fr.kappa_theta, fr.kappa_z
    G = np.empty(u.shape[:-1] + (3, 3))
    G[..., :, 0] = d[..., :, 0]
    G[..., 0, 1] = (d[..., 0, 1] - At * kt * uth) / At
    G[..., 0, 2] = (d[..., 0, 2] - Az * kz * uz) / Az
    G[..., 1, 1] = (Az * d[..., 1, 1] + Az * At * kt * ut + At_z * uz) / (Az * At)
    G[..., 1, 2] = (At * d[..., 1, 2] - Az_t * uz) / (Az * At)
    G[..., 2, 1] = (Az * d[..., 2, 1] - At_z * uth) / (Az * At)
    G[..., 2, 2] = (At * d[..., 2, 2] + Az * At * kz * ut + Az_t * uth) / (Az * At)
    return G


def simplified_gradient(jet: CurvilinearJet, fr: FrameSample, variant: str = "F") -> np.ndarray:
    """Simplified gradient ``F`` (shift denominators frozen at t = 0) or ``F1``.

    ``F1`` keeps only differentiated terms plus the ``kappa u_t`` diagonal.
    """
    if variant == "F":
        return _frozen_gradient(jet, fr)
    if variant != "F1":
        raise ValidationError(f"unknown variant {variant!r}")
    u, d = jet.u, jet.du
    At, Az = fr.A_theta[..., None], fr.A_z[..., None]
    G = np.empty(u.shape[:-1] + (3, 3))
    G[..., :, 0] = d[..., :, 0]
    G[..., :, 1] = d[..., :, 1] / At
    G[..., :, 2] = d[..., :, 2] / Az
    G[..., 1, 1] += fr.kappa_theta * u[..., 0]
    G[..., 2, 2] += fr.kappa_z * u[..., 0]
    return G


def sym(G: np.ndarray) -> np.ndarray:
    return 0.5 * (G + np.swapaxes(G, -1, -2))


# -- fields ----------------------------------------------------------------

@dataclass(frozen=True)
class DisplacementField:
    """Nodal displacement in Cartesian components, shape ``(n_nodes, 3)``."""

    mesh: ShellMesh
    values: np.ndarray
    label: str = ""

    @classmethod
    def from_free(cls, mesh: ShellMesh, dofs: DofMap, x: np.ndarray, label: str = ""):
        return cls(mesh, dofs.expand(np.asarray(x, float)), label)

    @classmethod
    def from_curvilinear(cls, mesh: ShellMesh, comps: np.ndarray, label: str = ""):
        Q = mesh.node_frames.frame_matrix()
        return cls(mesh, np.einsum("nic,ni->nc", Q, comps), label)

    @classmethod
    def from_function(cls, mesh: ShellMesh, fn, label: str = ""):
        """Interpolate a Cartesian field ``fn(xyz) -> (n, 3)`` at the nodes."""
        return cls(mesh, np.asarray(fn(mesh.node_xyz), float), label)

    def curvilinear(self) -> np.ndarray:
        """``(u_t, u_theta, u_z)`` per node by projection on the node frame."""
        Q = self.mesh.node_frames.frame_matrix()
        return np.einsum("nic,nc->ni", Q, self.values)

    def to_free(self, dofs: DofMap) -> np.ndarray:
        return dofs.restrict(self.values)

    def in_vh(self, dofs: DofMap) -> bool:
        """True when the field vanishes on masked nodes and respects shared dofs."""
        if np.any(self.values[dofs.masked] != 0):
            return False
        return bool(np.array_equal(self.values, self.values[dofs.rep]))

    def scaled(self, s: float) -> "DisplacementField":
        return DisplacementField(self.mesh, s * self.values, self.label)

    def at_quadrature(self):
        """Cartesian values ``(nc, ng, 3)`` and gradients ``(nc, ng, 3, 3)``."""
        q = self.mesh.quadrature
        U = self.values[self.mesh.cells]                  # (nc, 8, 3)
        u = np.einsum("ga,cai->cgi", q.N, U)
        grad = np.einsum("cgak,cai->cgik", q.grad, U)
        return u, grad

    def jets(self) -> CurvilinearJet:
        """Curvilinear jets of the nodal interpolant at every quadrature point."""
        q = self.mesh.quadrature
        u, grad = self.at_quadrature()
        return jet_from_cartesian(u, grad, q.frames, q.param[..., 2])


def field_norms(field: DisplacementField) -> dict:
    """Squared weighted L2 norms of the interpolant computed by quadrature."""
    q = field.mesh.quadrature
    u, grad = field.at_quadrature()
    w = q.weights
    Q = q.frames.frame_matrix()
    comps = np.einsum("cgik,cgk->cgi", Q, u)
    e = sym(grad)
    return {
        "u": float(np.sum(w * np.sum(u**2, -1))),
        "u_t": float(np.sum(w * comps[..., 0] ** 2)),
        "u_theta": float(np.sum(w * comps[..., 1] ** 2)),
        "u_z": float(np.sum(w * comps[..., 2] ** 2)),
        "grad": float(np.sum(w * np.sum(grad**2, (-1, -2)))),
        "e": float(np.sum(w * np.sum(e**2, (-1, -2)))),
    }


def gradient_consistency_gap(field: DisplacementField, mesh: ShellMesh | None = None):
    """``(||F - grad u||, h ||grad u||)`` in the weighted L2 norm of the shell.

    The ratio of the two entries is the empirical constant of the bound
    ``||F - grad u|| <= C h ||grad u||``; with curvatures bounded by ``K``
    one expects ``C <= K / 2``.
    """
    mesh = mesh or field.mesh
    q = mesh.quadrature
    jet = field.jets()
    t = q.param[..., 2]
    G = curvilinear_gradient(jet, q.frames, t)
    F = simplified_gradient(jet, q.frames, "F")
    w = q.weights
    gap = np.sqrt(np.sum(w * np.sum((F - G) ** 2, (-1, -2))))
    ref = mesh.h * np.sqrt(np.sum(w * np.sum(G**2, (-1, -2))))
    return float(gap), float(ref)


# -- assembly --------------------------------------------------------------

@dataclass(frozen=True)
class FormPencil:
    """Sparse symmetric forms over the free dofs of one mesh."""

    matrices: dict
    n_free: int
    quad_order: int
    mesh_id: str
    weight: str = "volume"
    extra: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> sp.csr_matrix:
        if key in self.matrices:
            return self.matrices[key]
        if key in self.extra:
            return self.extra[key]
        raise KeyError(f"unknown form {key!r}")

    def with_form(self, key: str, mat) -> "FormPencil":
        extra = dict(self.extra)
        extra[key] = sp.csr_matrix(mat)
        return FormPencil(self.matrices, self.n_free, self.quad_order, self.mesh_id, self.weight, extra)

    def quadratic(self, key: str, x: np.ndarray) -> float:
        return float(x @ (self[key] @ x))

    def export_coo(self, key: str, path: str | Path) -> None:
        """Write ``row col value`` lines (0-based) after a size header."""
        A = sp.coo_matrix(self[key])
        order = np.lexsort((A.col, A.row))
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write(f"# {key} {A.shape[0]} {A.shape[1]} {A.nnz}\n")
            for r, c, v in zip(A.row[order].tolist(), A.col[order].tolist(), A.data[order].tolist()):
                fh.write(f"{r} {c} {v!r}\n")


def mesh_id(mesh: ShellMesh) -> str:
    s = mesh.surface
    key = f"{s.kind}|{sorted(s.params.items())!r}|{mesh.h!r}|{mesh.resolution}|"
    key += mesh.s_nodes.tobytes().hex()
    return hashlib.sha1(key.encode()).hexdigest()[:12]


def quadrature_weights(mesh: ShellMesh, weight: str = "volume") -> np.ndarray:
    """Quadrature weights with (``volume``) or without (``midsurface``) the shift factor."""
    q = mesh.quadrature
    if weight == "volume":
        return q.weights
    if weight == "midsurface":
        t = q.param[..., 2]
        shift = (1 + t * q.frames.kappa_theta) * (1 + t * q.frames.kappa_z)
        return q.weights / shift
    raise ValidationError(f"unknown weight {weight!r}")


class _Assembler:
    """Scatter 24x24 cell blocks into a CSR matrix over free dofs."""

    def __init__(self, mesh: ShellMesh, dofs: DofMap, budget: int):
        self.n = dofs.n_free
        nc = mesh.n_cells
        need = nc * 24 * 24 * (8 + 8 + 8) * 2
        if need > budget:
            raise MemoryBudgetError(f"assembly needs ~{need / 2**20:.0f} MiB, budget {budget / 2**20:.0f} MiB")
        idx = dofs.index[mesh.cells].reshape(nc, 24)      # (cell, node*3 + comp)
        self.rows = np.repeat(idx, 24, axis=1).ravel()
        self.cols = np.tile(idx, (1, 24)).ravel()
        self.keep = (self.rows >= 0) & (self.cols >= 0)
        self.rows = self.rows[self.keep]
        self.cols = self.cols[self.keep]

    def __call__(self, blocks: np.ndarray) -> sp.csr_matrix:
        vals = blocks.reshape(blocks.shape[0], -1).ravel()[self.keep]
        A = sp.coo_matrix((vals, (self.rows, self.cols)), shape=(self.n, self.n)).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return A


def _kron_eye(S: np.ndarray) -> np.ndarray:
    """Cell blocks ``S[a, b] * delta_ij`` laid out as (nc, 8, 3, 8, 3)."""
    out = np.zeros(S.shape[:1] + (8, 3, 8, 3))
    for i in range(3):
        out[:, :, i, :, i] = S
    return out


def assemble_forms(mesh: ShellMesh, dofs: DofMap, *, weight: str = "volume",
                   memory_budget: int = DEFAULT_MEMORY_BUDGET) -> FormPencil:
    """Assemble N (strain energy), D (gradient energy), M and component masses."""
    q = mesh.quadrature
    w = quadrature_weights(mesh, weight)
    B = q.grad
    asm = _Assembler(mesh, dofs, memory_budget)
    lap = np.einsum("cg,cgak,cgbk->cab", w, B, B)
    D = _kron_eye(lap)
    K2 = np.einsum("cg,cgaj,cgbi->caibj", w, B, B)
    N = 0.5 * (D + K2)
    mass = np.einsum("cg,ga,gb->cab", w, q.N, q.N)
    Q = q.frames.frame_matrix()                          # (nc, ng, 3, 3)
    mats = {"N": asm(N), "D": asm(D), "M": asm(_kron_eye(mass))}
    for k, name in enumerate(("M_t", "M_theta", "M_z")):
        v = Q[..., k, :]
        blk = np.einsum("cg,ga,gb,cgi,cgj->caibj", w, q.N, q.N, v, v)
        mats[name] = asm(blk)
    return FormPencil(mats, dofs.n_free, mesh.quad_order, mesh_id(mesh), weight)


def assemble_divdiv(mesh: ShellMesh, dofs: DofMap, weight: str = "volume") -> sp.csr_matrix:
    """``int div(u) div(v)`` over the shell."""
    q = mesh.quadrature
    w = quadrature_weights(mesh, weight)
    blk = np.einsum("cg,cgai,cgbj->caibj", w, q.grad, q.grad)
    return _Assembler(mesh, dofs, DEFAULT_MEMORY_BUDGET)(blk)


def assemble_geometric(mesh: ShellMesh, dofs: DofMap, sigma: np.ndarray,
                       weight: str = "volume") -> sp.csr_matrix:
    """``int <sigma, grad(u)^T grad(v)>`` for a stress ``sigma`` of shape (nc, ng, 3, 3)."""
    q = mesh.quadrature
    w = quadrature_weights(mesh, weight)
    sigma = np.broadcast_to(sigma, q.weights.shape + (3, 3))
    S = np.einsum("cg,cgap,cgpq,cgbq->cab", w, q.grad, sigma, q.grad)
    return _Assembler(mesh, dofs, DEFAULT_MEMORY_BUDGET)(_kron_eye(S))

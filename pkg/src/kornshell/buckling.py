"""Constitutively linearized buckling load for a prescribed stress field.

``lambda_cl = -inf <L0 e(u), e(u)> / <sigma, grad(u)^T grad(u)>`` over fields
with a negative geometric term.  With ``A`` the elastic energy and ``B``
minus the geometric form, the infimum is ``1 / mu_max`` of ``B x = mu A x``;
eigenvectors with ``mu > 0`` are exactly the destabilizing extremals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .mesh import DofMap, ShellMesh
from .operators import (DisplacementField, FormPencil, assemble_divdiv, assemble_geometric,
                        field_norms, quadrature_weights, sym)
from .solver import DEFAULT_SEED, QuotientResult, SolverOptions, dense_oracle, largest_pencil_eig, pencil_residual

CONE_TOL = 1e-10


class EmptyConeError(ValidationError):
    """No admissible field makes the geometric term negative."""


@dataclass(frozen=True)
class ElasticTensor:
    """Isotropic ``L0 xi = 2 mu xi + lam tr(xi) I``."""

    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if not (self.mu > 0 and 3 * self.lam + 2 * self.mu > 0):
            raise ValidationError("need mu > 0 and 3 lam + 2 mu > 0")

    def apply(self, xi: np.ndarray) -> np.ndarray:
        tr = np.trace(xi, axis1=-2, axis2=-1)
        return 2 * self.mu * xi + self.lam * tr[..., None, None] * np.eye(3)

    @property
    def coercivity(self) -> float:
        """Smallest eigenvalue of ``L0`` on symmetric matrices."""
        return min(2 * self.mu, 2 * self.mu + 3 * self.lam)


@dataclass(frozen=True)
class StressField:
    """Symmetric stress per quadrature point, shape ``(n_cells, n_gauss, 3, 3)``."""

    values: np.ndarray
    provenance: str = "config"

    def __post_init__(self):
        v = self.values
        if v.shape[-2:] != (3, 3):
            raise ValidationError("stress must be 3x3 per point")
        scale = max(1.0, float(np.abs(v).max()))
        if np.abs(v - np.swapaxes(v, -1, -2)).max() > 1e-12 * scale:
            raise ValidationError("stress must be symmetric")

    def scaled(self, s: float) -> "StressField":
        return StressField(s * self.values, self.provenance)

    @classmethod
    def uniform(cls, mesh: ShellMesh, sigma) -> "StressField":
        shape = mesh.quadrature.weights.shape + (3, 3)
        return cls(np.broadcast_to(np.asarray(sigma, float), shape).copy(), "config")

    @classmethod
    def hydrostatic(cls, mesh: ShellMesh, p: float) -> "StressField":
        return cls.uniform(mesh, p * np.eye(3))

    @classmethod
    def uniaxial(cls, mesh: ShellMesh, direction, magnitude: float) -> "StressField":
        """``magnitude * d d^T`` for the unit vector along ``direction`` (negative = compression)."""
        d = np.asarray(direction, float)
        d = d / np.linalg.norm(d)
        return cls.uniform(mesh, magnitude * np.outer(d, d))

    @classmethod
    def meridional(cls, mesh: ShellMesh, magnitude: float) -> "StressField":
        """``magnitude * e_z e_z^T`` along the local meridian direction."""
        ez = mesh.quadrature.frames.e_z
        return cls(magnitude * np.einsum("...i,...j->...ij", ez, ez), "config")

    @classmethod
    def from_displacement(cls, field: DisplacementField, L0: ElasticTensor) -> "StressField":
        _, grad = field.at_quadrature()
        return cls(L0.apply(sym(grad)), "derived-from-displacement")


def stress_from_config(mesh: ShellMesh, block: dict, L0: ElasticTensor, dofs: DofMap | None = None) -> StressField:
    """Stress from a config block ``{type, ...}``."""
    kind = block.get("type", "meridional")
    mag = float(block.get("magnitude", -1.0))
    if kind == "uniaxial":
        return StressField.uniaxial(mesh, block.get("direction", [0.0, 0.0, 1.0]), mag)
    if kind == "meridional":
        return StressField.meridional(mesh, mag)
    if kind == "hydrostatic":
        return StressField.hydrostatic(mesh, mag)
    if kind == "from-displacement":
        path = block.get("field-file")
        if not path:
            raise ValidationError("from-displacement stress needs field-file")
        vals = np.loadtxt(path, ndmin=2)
        if vals.shape != (mesh.n_nodes, 3):
            raise ValidationError(f"field-file must hold {mesh.n_nodes} rows of 3 Cartesian components")
        return StressField.from_displacement(DisplacementField(mesh, vals), L0)
    raise ValidationError(f"unknown stress type {kind!r}")


def geometric_term(field: DisplacementField, sigma: StressField, weight: str = "volume") -> float:
    """``int <sigma, grad(u)^T grad(u)>``."""
    _, grad = field.at_quadrature()
    gram = np.einsum("cgip,cgiq->cgpq", grad, grad)
    w = quadrature_weights(field.mesh, weight)
    return float(np.sum(w * np.einsum("cgpq,cgpq->cg", sigma.values, gram)))


def is_destabilizing(field: DisplacementField, sigma: StressField, mesh: ShellMesh | None = None):
    """``(flag, value)`` with ``flag`` true when the geometric term is negative.

    Values within ``CONE_TOL * max|sigma| * ||grad u||^2`` of zero count as zero.
    """
    value = geometric_term(field, sigma)
    _, grad = field.at_quadrature()
    w = quadrature_weights(field.mesh, "volume")
    scale = float(np.abs(sigma.values).max()) * float(np.sum(w * np.sum(grad**2, (-1, -2))))
    return bool(value < -CONE_TOL * scale), value


def elastic_form(pencil: FormPencil, mesh: ShellMesh, dofs: DofMap, L0: ElasticTensor):
    """``<L0 e(u), e(u)> = 2 mu |e|^2 + lam (div u)^2`` over free dofs."""
    return 2 * L0.mu * pencil["N"] + L0.lam * assemble_divdiv(mesh, dofs, pencil.weight)


@dataclass(frozen=True)
class BucklingResult:
    value: float
    vector: np.ndarray
    denominator: float
    residual: float
    iterations: int
    solver: str = "iterative"

    def validity_ratio(self, korn: QuotientResult) -> float:
        return validity_ratio(self, korn)


def buckling_pencil(pencil: FormPencil, sigma: StressField, L0: ElasticTensor,
                    mesh: ShellMesh, dofs: DofMap) -> FormPencil:
    """Pencil extended by ``L0`` (elastic energy) and ``negG`` (minus geometric form)."""
    A = elastic_form(pencil, mesh, dofs, L0)
    G = assemble_geometric(mesh, dofs, sigma.values, pencil.weight)
    return pencil.with_form("L0", A).with_form("negG", -G)


def lambda_cl(pencil: FormPencil, sigma: StressField, L0: ElasticTensor, mesh: ShellMesh,
              dofs: DofMap, options: SolverOptions = SolverOptions(), dense: bool = False) -> BucklingResult:
    """Smallest positive buckling load ``lambda_cl`` and its minimizing variation."""
    bp = buckling_pencil(pencil, sigma, L0, mesh, dofs)
    A, B = bp["L0"], bp["negG"]
    if dense:
        try:
            q = dense_oracle(bp, "L0", "negG")
        except ValidationError as exc:
            raise EmptyConeError("no buckling at this stress direction") from exc
        mu, x, iters, tag = 1.0 / q.value, q.vector, 1, "dense-oracle"
    else:
        mus, X, iters = largest_pencil_eig(A, B, options)
        mu, x, tag = float(mus[0]), X[:, 0], "iterative"
    x = x / np.linalg.norm(x)
    a_val = float(x @ (A @ x))
    b_val = float(x @ (B @ x))
    if not mu > 0 or b_val <= CONE_TOL * a_val:
        raise EmptyConeError("no buckling at this stress direction")
    value = 1.0 / mu
    return BucklingResult(value, x, -b_val, pencil_residual(A, B, value, x), iters, tag)


def validity_ratio(result: BucklingResult, korn: QuotientResult) -> float:
    """``lambda_cl^2 / K(V^h)``."""
    if korn.value <= 0:
        raise ValidationError("Korn quotient must be positive")
    return result.value**2 / korn.value


@dataclass(frozen=True)
class HypothesisReport:
    h: np.ndarray
    ratios: np.ndarray          # ||e(u)|| / ||u_t||
    slope: float
    deviation: float
    flagged: bool


def localization_hypothesis_check(fields, target: float = 0.5, tol: float = 0.1) -> HypothesisReport:
    """Fit ``log(||e(u)|| / ||u_t||)`` against ``log h`` over a family of fields."""
    from .analysis import fit_scaling_exponent

    if len(fields) < 3:
        raise ValidationError("need at least 3 values of h")
    hs = np.array([f.mesh.h for f in fields])
    ratios = []
    for f in fields:
        n = field_norms(f)
        ratios.append(np.sqrt(n["e"] / n["u_t"]))
    fit = fit_scaling_exponent(hs, ratios)
    dev = fit.slope - target
    return HypothesisReport(hs, np.array(ratios), fit.slope, dev, abs(dev) > tol)

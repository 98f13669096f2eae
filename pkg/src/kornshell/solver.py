"""Minimal Rayleigh quotients over the discrete space V^h.

Every quotient ``min x^T A x / x^T B x`` with ``A`` positive definite is
computed as ``1 / mu_max`` of the pencil ``B x = mu A x``.  The largest
``mu`` is found by a thick-restart Lanczos iteration on ``S = A^{-1} B``
(shift-invert at zero) in the ``A`` inner product, with full
reorthogonalization and an explicit Rayleigh-Ritz step on ``V^T B V``.
Zero eigenvalues of ``B`` (directions the denominator does not see) sit at
the bottom of the spectrum of ``S`` and never compete with the extremal pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, ValidationError
from .operators import DisplacementField, FormPencil

DEFAULT_SEED = 20240917
DENSE_CAP = 2000


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 500
    subspace: int = 40
    keep: int = 8
    seed: int = DEFAULT_SEED


@dataclass(frozen=True)
class QuotientResult:
    """Minimum of ``x^T A x / x^T B x`` and its minimizer over free dofs.

    ``constant`` is the reciprocal ``1 / value`` (the Korn constant ``C1``
    when the pencil is ``(N, D)``).  ``null_witness`` marks a numerically
    singular numerator, in which case ``value`` is 0 and ``vector`` spans the
    offending direction.
    """

    value: float
    vector: np.ndarray
    residual: float
    iterations: int
    solver: str
    numerator: str = ""
    denominator: str = ""
    null_witness: bool = False

    @property
    def constant(self) -> float:
        return float("inf") if self.value == 0 else 1.0 / self.value


def pencil_residual(A, B, lam: float, x: np.ndarray) -> float:
    """``||A x - lam B x|| / ||B x||``."""
    Bx = B @ x
    return float(np.linalg.norm(A @ x - lam * Bx) / np.linalg.norm(Bx))


def _a_orthonormalize(w, V, AV, A, passes: int = 2):
    for _ in range(passes):
        if V.shape[1]:
            w = w - V @ (AV.T @ w)
    Aw = A @ w
    nrm = np.sqrt(max(float(w @ Aw), 0.0))
    return w, Aw, nrm


def largest_pencil_eig(A, B, options: SolverOptions = SolverOptions(), nev: int = 1):
    """Largest algebraic eigenpairs of ``B x = mu A x`` for sparse SPD ``A``.

    Returns ``(mu, X, iterations)`` with ``X`` ``A``-orthonormal, ``mu``
    sorted descending.  Raises :class:`ConvergenceError` after
    ``options.max_iter`` operator applications.
    """
    A = sp.csc_matrix(A)
    B = sp.csr_matrix(B)
    n = A.shape[0]
    if n == 0:
        raise ValidationError("empty pencil")
    lu = _factor(A)

    def op(x):
        return lu.solve(B @ x)

    m = min(options.subspace, n)
    keep = min(max(options.keep, nev + 2), m - 1) if m > 1 else 0
    rng = np.random.default_rng(options.seed)
    w = rng.standard_normal(n)
    V = np.zeros((n, 0))
    AV = np.zeros((n, 0))
    iters = 0
    mu = X = None
    while True:
        while V.shape[1] < m:
            w, Aw, nrm = _a_orthonormalize(w, V, AV, A)
            if nrm <= 1e-14 * max(1.0, np.linalg.norm(w)):
                # invariant subspace: restart direction with fresh randomness
                w = rng.standard_normal(n)
                w, Aw, nrm = _a_orthonormalize(w, V, AV, A)
                if nrm <= 1e-14 * np.linalg.norm(w):
                    break
            V = np.column_stack([V, w / nrm])
            AV = np.column_stack([AV, Aw / nrm])
            w = op(V[:, -1])
            iters += 1
        H = V.T @ (B @ V)
        H = 0.5 * (H + H.T)
        theta, Y = np.linalg.eigh(H)
        order = np.argsort(theta)[::-1]
        theta, Y = theta[order], Y[:, order]
        X = V @ Y[:, :nev]
        mu = theta[:nev]
        SX = np.column_stack([op(X[:, k]) for k in range(nev)])
        iters += nev
        R = SX - X * mu
        res = np.sqrt(np.abs(np.einsum("ik,ik->k", R, A @ R)))
        scale = np.maximum(np.abs(mu), np.abs(theta).max() * 1e-300 + 1e-300)
        if np.all(res <= options.tol * scale) or V.shape[1] >= n:
            return mu, X, iters
        if iters >= options.max_iter:
            raise ConvergenceError(
                f"Lanczos did not converge in {iters} iterations (residual {res.max():.3e})")
        Vk = V @ Y[:, :keep]
        V = Vk
        AV = A @ Vk
        w = SX[:, 0]


SINGULAR_PIVOT = 1e-12


class SingularFormError(np.linalg.LinAlgError):
    """Numerator numerically singular; ``witness`` spans a near-null direction."""

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


def _factor(A):
    """Sparse LU of ``A``; numerically singular factors raise :class:`SingularFormError`."""
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:  # exactly singular factor
        raise SingularFormError(str(exc)) from exc
    piv = np.abs(lu.U.diagonal())
    if piv.min() <= SINGULAR_PIVOT * piv.max():
        # inverse iteration through the factor amplifies the null direction
        x = np.random.default_rng(0).standard_normal(A.shape[0])
        for _ in range(3):
            x = lu.solve(x)
            x /= np.linalg.norm(x)
        raise SingularFormError("form is numerically singular", x)
    return lu


def _forms(pencil: FormPencil, numerator: str, denominator: str):
    try:
        return pencil[numerator], pencil[denominator]
    except KeyError as exc:
        raise ValidationError(str(exc)) from exc


def min_quotient(pencil: FormPencil, numerator: str = "N", denominator: str = "D",
                 options: SolverOptions = SolverOptions()) -> QuotientResult:
    """Minimum of ``x^T Num x / x^T Den x`` over free dofs by shift-invert Lanczos."""
    A, B = _forms(pencil, numerator, denominator)
    try:
        mu, X, iters = largest_pencil_eig(A, B, options)
    except SingularFormError as exc:
        return _null_witness(A, exc.witness, numerator, denominator)
    x = X[:, 0]
    if mu[0] <= 0:
        raise ValidationError(f"denominator {denominator} vanishes on the space")
    value = 1.0 / mu[0]
    if value <= 1e-14 * _scale(A, B):
        x = x / np.linalg.norm(x)
        return QuotientResult(0.0, x, 0.0, iters, "iterative", numerator, denominator, True)
    x = x / np.linalg.norm(x)
    return QuotientResult(float(value), x, pencil_residual(A, B, value, x), iters,
                          "iterative", numerator, denominator)


def _scale(A, B) -> float:
    d_a = np.abs(A.diagonal()).max()
    d_b = np.abs(B.diagonal()).max()
    return float(d_a / d_b) if d_b > 0 else 1.0


def _null_witness(A, x, numerator, denominator) -> QuotientResult:
    if x is None:
        if A.shape[0] > DENSE_CAP:
            raise ValidationError("numerator exactly singular; no witness on large meshes")
        A = A.toarray() if sp.issparse(A) else np.asarray(A)
        x = np.linalg.eigh(A)[1][:, 0]
    return QuotientResult(0.0, x, 0.0, 0, "iterative", numerator, denominator, True)


def dense_oracle(pencil: FormPencil, numerator: str = "N", denominator: str = "D") -> QuotientResult:
    """Smallest quotient by a full dense generalized symmetric eigensolve."""
    A, B = _forms(pencil, numerator, denominator)
    n = A.shape[0]
    if n > DENSE_CAP:
        raise ValidationError(f"dense oracle limited to {DENSE_CAP} free dofs, got {n}")
    Ad = A.toarray()
    Bd = B.toarray()
    mu, Y = la.eigh(Bd, Ad)
    x = Y[:, -1]
    if mu[-1] <= 0:
        raise ValidationError(f"denominator {denominator} vanishes on the space")
    value = 1.0 / mu[-1]
    x = x / np.linalg.norm(x)
    return QuotientResult(float(value), x, pencil_residual(A, B, value, x), 1,
                          "dense-oracle", numerator, denominator)


def quotient_of(pencil: FormPencil, x: np.ndarray, numerator: str = "N", denominator: str = "D") -> float:
    den = pencil.quadratic(denominator, x)
    if den == 0:
        raise ValidationError("zero denominator")
    return pencil.quadratic(numerator, x) / den


def korn_poincare_ratios(pencil: FormPencil, field, dofs=None):
    """``(||u_theta||^2 / ||e(u)||^2, ||u_z||^2 / ||e(u)||^2)`` for a nonzero field."""
    if isinstance(field, DisplacementField):
        if dofs is None:
            raise ValidationError("a DofMap is needed to restrict a nodal field")
        x = field.to_free(dofs)
    else:
        x = np.asarray(field, float)
    e2 = pencil.quadratic("N", x)
    if not np.any(x) or e2 == 0:
        raise ValidationError("zero field")
    return pencil.quadratic("M_theta", x) / e2, pencil.quadratic("M_z", x) / e2

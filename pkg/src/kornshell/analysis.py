"""Power-law fits, localization of minimizers and an audit of exact integral identities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ValidationError
from .mesh import ShellMesh, subdomain
from .operators import CurvilinearJet, DisplacementField, simplified_gradient, sym
from .surface import SurfacePatch


# -- scaling fits ----------------------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    """Least-squares fit ``log(value) = slope * log(h) + intercept``."""

    h: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float
    r2: float
    residuals: np.ndarray

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "h": self.h.tolist(), "values": self.values.tolist()}


def fit_scaling_exponent(h_list, values) -> ScalingFit:
    h = np.asarray(h_list, float)
    v = np.asarray(values, float)
    if h.shape != v.shape or h.size < 3:
        raise ValidationError("need at least 3 (h, value) pairs")
    if np.any(h <= 0) or np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValidationError("h and values must be strictly positive")
    x, y = np.log(h), np.log(v)
    fit = stats.linregress(x, y)
    res = y - (fit.slope * x + fit.intercept)
    r2 = float(np.clip(fit.rvalue**2, 0.0, 1.0)) if np.ptp(y) > 0 else 1.0
    return ScalingFit(h, v, float(fit.slope), float(fit.intercept), r2, res)


# -- localization ----------------------------------------------------------

@dataclass(frozen=True)
class LocalizationReport:
    """Mass fraction inside ``c h^{1/4}`` of the flat point per h."""

    h: np.ndarray
    ratios: np.ndarray
    c: float

    @property
    def trend(self) -> np.ndarray:
        return np.diff(self.ratios)

    @property
    def tail(self) -> np.ndarray:
        return 1.0 - self.ratios

    def nondecreasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.trend >= -tol))


def cell_masses(field: DisplacementField) -> np.ndarray:
    """Weighted L2 mass of the interpolant per cell."""
    u, _ = field.at_quadrature()
    return np.sum(field.mesh.quadrature.weights * np.sum(u**2, -1), axis=1)


def localization_ratio(field: DisplacementField, mesh: ShellMesh | None, center, c: float,
                       alpha: float = 0.25) -> float:
    """Fraction of ``||u||^2`` carried by cells within ``c h^alpha`` of ``center``."""
    mesh = mesh or field.mesh
    masses = cell_masses(field)
    total = masses.sum()
    if total == 0:
        raise ValidationError("zero field")
    cells = subdomain(mesh, center, c * mesh.h**alpha).cells
    return float(masses[cells].sum() / total)


def localization_report(fields, center, c: float) -> LocalizationReport:
    hs = np.array([f.mesh.h for f in fields])
    ratios = np.array([localization_ratio(f, None, center, c) for f in fields])
    return LocalizationReport(hs, ratios, float(c))


# -- interpolation inequality probe ------------------------------------------

def interpolation_constant_probe(pencil, fields, h: float) -> float:
    """Max over fields of ``||grad u||^2 / (||u_t|| ||e|| / h + ||u||^2 + ||e||^2)``."""
    xs = [np.asarray(x, float) for x in fields]
    if len(xs) < 10:
        raise ValidationError("need at least 10 fields")
    best = 0.0
    for x in xs:
        if not np.any(x):
            raise ValidationError("zero field in probe set")
        g = pencil.quadratic("D", x)
        e = pencil.quadratic("N", x)
        ut = pencil.quadratic("M_t", x)
        u = pencil.quadratic("M", x)
        best = max(best, g / (np.sqrt(ut * e) / h + u + e))
    return float(best)


# -- identity audit ----------------------------------------------------------

@dataclass(frozen=True)
class TrialField:
    """Mid-surface field ``B(theta, z) * (c0 + c1 (theta - theta0) + c2 (z - z0))``
    per component, with ``B`` the C^2 bump ``(1 - s^2)^3`` in both directions on
    the box ``|theta - theta0| < r_theta, |z - z0| < r_z``."""

    center: tuple
    half_widths: tuple
    coeffs: np.ndarray      # (3 components, 3)

    def box(self):
        (t0, z0), (rt, rz) = self.center, self.half_widths
        return (t0 - rt, t0 + rt), (z0 - rz, z0 + rz)

    def jet(self, theta, z):
        """Values ``u`` (..., 3) and chart partials ``du`` (..., 3, 2)."""
        (t0, z0), (rt, rz) = self.center, self.half_widths
        s, r = (theta - t0) / rt, (z - z0) / rz
        qs, qr = np.clip(1 - s * s, 0, None), np.clip(1 - r * r, 0, None)
        bs, br = qs**3, qr**3
        dbs = -6 * s * qs**2 / rt
        dbr = -6 * r * qr**2 / rz
        c = np.asarray(self.coeffs, float)
        lin = c[:, 0] + c[:, 1] * (theta - t0)[..., None] + c[:, 2] * (z - z0)[..., None]
        B = (bs * br)[..., None]
        u = B * lin
        du = np.empty(u.shape + (2,))
        du[..., 0] = (dbs * br)[..., None] * lin + B * c[:, 1]
        du[..., 1] = (bs * dbr)[..., None] * lin + B * c[:, 2]
        return u, du


def random_trial_fields(surface: SurfacePatch, n: int, seed: int = 0, margin: float = 0.05):
    """``n`` random compactly supported trial fields strictly inside E.

    Boxes stay clear of the polar line and of the flat points, where the
    ratio of principal curvatures is undefined.
    """
    rng = np.random.default_rng(seed)
    lo, hi = (float(v) for v in surface.z_bounds(0.5))
    if not surface.constant_bounds():
        lo, hi = float(np.max(surface.z_bounds(np.linspace(0, 1, 65))[0])), \
            float(np.min(surface.z_bounds(np.linspace(0, 1, 65))[1]))
    zlo = lo + (0.15 * (hi - lo) if surface.polar else 0.0)
    span_z = hi - zlo
    out = []
    while len(out) < n:
        rt = rng.uniform(0.05, 0.15)
        rz = rng.uniform(0.1, 0.3) * span_z
        t0 = rng.uniform(margin + rt, 1 - margin - rt)
        z0 = rng.uniform(zlo + margin * span_z + rz, hi - margin * span_z - rz)
        tf = TrialField((t0, z0), (rt, rz), rng.uniform(-1, 1, (3, 3)))
        if _touches_flat_point(surface, tf):
            continue
        out.append(tf)
    return out


def _touches_flat_point(surface, tf: TrialField) -> bool:
    (a, b), (c, d) = tf.box()
    for p in surface.flat_points:
        if a <= p[0] <= b and c <= p[1] <= d:
            return True
    return False


def _check_box(surface: SurfacePatch, tf: TrialField) -> None:
    (a, b), (c, d) = tf.box()
    th = np.linspace(a, b, 33)
    lo, hi = surface.z_bounds(th)
    inside = np.all(lo < c) and np.all(hi > d)
    if not surface.periodic:
        inside = inside and a > 0 and b < 1
    if surface.polar and not np.all(c - lo > surface.guard):
        inside = False
    if not inside:
        raise ValidationError("trial field support touches the boundary of E")


def _box_quadrature(tf: TrialField, order: int, subdivisions: int = 1):
    x, w = np.polynomial.legendre.leggauss(order)
    (a, b), (c, d) = tf.box()

    def axis(lo, hi):
        edges = np.linspace(lo, hi, subdivisions + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()

    th, wt = axis(a, b)
    zz, wz = axis(c, d)
    TH, ZZ = np.meshgrid(th, zz, indexing="ij")
    return TH, ZZ, np.outer(wt, wz)


IDENTITIES = ("weighted_tangential", "diagonal_product", "shear_product", "codazzi_gauss")


def identity_terms(surface: SurfacePatch, tf: TrialField, lam: float, order: int = 8,
                   subdivisions: int = 1) -> dict:
    """Both sides of each identity for one trial field (plain d theta d z integrals)."""
    _check_box(surface, tf)
    th, zz, W = _box_quadrature(tf, order, subdivisions)
    fr = surface.frames(th, zz)
    u, du = tf.jet(th, zz)
    ut, uth, uz = u[..., 0], u[..., 1], u[..., 2]
    jet_du = np.zeros(u.shape + (3,))
    jet_du[..., 1:] = du
    F = simplified_gradient(CurvilinearJet(u, jet_du), fr, "F")
    Fs = sym(F)
    At, Az = fr.A_theta, fr.A_z
    At_t, At_z = fr.dA_theta[..., 0], fr.dA_theta[..., 1]
    Az_t, Az_z = fr.dA_z[..., 0], fr.dA_z[..., 1]
    At_zz, Az_tt = fr.d2A_theta[..., 1, 1], fr.d2A_z[..., 0, 0]
    kt, kz = fr.kappa_theta, fr.kappa_z
    rho = kz / kt
    rho_t = (fr.dkappa_z[..., 0] * kt - kz * fr.dkappa_theta[..., 0]) / kt**2
    rho_z = (fr.dkappa_z[..., 1] * kt - kz * fr.dkappa_theta[..., 1]) / kt**2
    phi = np.exp(lam * zz)
    phi_z = lam * phi
    E = lambda f, g: float(np.sum(W * At * Az * f * g))
    I = lambda f: float(np.sum(W * f))

    out = {}
    lhs = E(rho * F[..., 1, 1] - F[..., 2, 2], phi * uz) + E(2 * rho * Fs[..., 1, 2], phi * uth)
    d_phiAt = phi_z * At + phi * At_z
    d_AtPhiRho = d_phiAt * rho + At * phi * rho_z
    d_phiAzRho = phi * (Az_t * rho + Az * rho_t)
    rhs = (I((phi * At_z * rho + 0.5 * d_phiAt) * uz**2)
           - I((0.5 * d_AtPhiRho + At_z * phi * rho) * uth**2)
           - I((d_phiAzRho + (1 + rho) * phi * Az_t) * uth * uz))
    out["weighted_tangential"] = (lhs, rhs)

    dz_ratio = At_zz / Az - At_z * Az_z / Az**2          # d_z (A_theta,z / A_z)
    dt_ratio = Az_tt / At - Az_t * At_t / At**2          # d_theta (A_z,theta / A_theta)
    cross = At_z * Az_t / (At * Az)
    uth_z, uz_t = du[..., 1, 1], du[..., 2, 0]
    lhs = E(F[..., 1, 1] - kt * ut, F[..., 2, 2] - kz * ut)
    rhs = I(uth_z * uz_t) + I(cross * uth * uz) - 0.5 * I(dz_ratio * uz**2) - 0.5 * I(dt_ratio * uth**2)
    out["diagonal_product"] = (lhs, rhs)

    lhs = E(F[..., 1, 2], F[..., 2, 1])
    rhs = I(uth_z * uz_t) + I(cross * uth * uz) + 0.5 * I(dz_ratio * uth**2) + 0.5 * I(dt_ratio * uz**2)
    out["shear_product"] = (lhs, rhs)

    lhs = out["diagonal_product"][0] - 2 * E(Fs[..., 1, 2], F[..., 1, 2]) + E(F[..., 1, 2], F[..., 1, 2])
    rhs = 0.5 * E(kt * kz, uth**2 + uz**2)
    out["codazzi_gauss"] = (lhs, rhs)
    # magnitude of the individual terms, used as a floor when both sides vanish
    out["_scale"] = E(np.ones_like(ut), np.sum(u**2, -1) + np.sum(F**2, (-1, -2)))
    return out


def relative_residual(lhs: float, rhs: float, floor: float = 0.0) -> float:
    """``|lhs - rhs| / (|lhs| + |rhs|)``; ``floor`` guards identities whose sides vanish."""
    den = max(abs(lhs) + abs(rhs), floor)
    return 0.0 if den == 0 else abs(lhs - rhs) / den


def identity_audit(surface: SurfacePatch, trial_fields, lam: float = 1.0, order: int = 8,
                   subdivisions: int = 2) -> dict:
    """``{identity: [{lhs, rhs, relative_residual}, ...]}`` over the trial fields.

    Integrals use a composite Gauss-Legendre rule of ``order`` points per
    direction on each of ``subdivisions**2`` panels of the support box.
    """
    report = {k: [] for k in IDENTITIES}
    for tf in trial_fields:
        terms = identity_terms(surface, tf, lam, order, subdivisions)
        floor = 1e-8 * terms.pop("_scale")
        for k, (l, r) in terms.items():
            report[k].append({"lhs": l, "rhs": r,
                              "relative_residual": relative_residual(l, r, floor)})
    return report


def carleman_constants(surface: SurfacePatch, trial_fields, order: int = 8) -> dict:
    """Empirical constants of the auxiliary bounds on the mid-surface (report only).

    ``k_ut``: ``||sqrt(K_G) u_t||^2 / (||sqrt(K_G) u_theta||^2 + ||sqrt(K_G) u_z||^2 + ||F^sym||^2)``;
    ``k_uz``: ``||u_z||^2 / (L^2 (||F^sym||^2 + ||sqrt(K_G) u_t||^2 + ||u_theta||^2))``;
    ``k_tang``: ``(||u_theta|| + ||u_z||) / ||F^sym||``.  Maxima over the fields.
    """
    lo, hi = surface.z_bounds(np.linspace(0, 1, 65))
    L = float(np.max(hi - lo))
    best = {"k_ut": 0.0, "k_uz": 0.0, "k_tang": 0.0}
    for tf in trial_fields:
        _check_box(surface, tf)
        th, zz, W = _box_quadrature(tf, order)
        fr = surface.frames(th, zz)
        u, du = tf.jet(th, zz)
        jd = np.zeros(u.shape + (3,))
        jd[..., 1:] = du
        Fs = sym(simplified_gradient(CurvilinearJet(u, jd), fr, "F"))
        n2 = lambda f: float(np.sum(W * fr.A_theta * fr.A_z * f**2))
        kg = fr.kappa_theta * fr.kappa_z
        fs = float(np.sum(W * fr.A_theta * fr.A_z * np.sum(Fs**2, (-1, -2))))
        ut_k, uth_k, uz_k = (n2(np.sqrt(kg) * u[..., i]) for i in range(3))
        uth, uz = n2(u[..., 1]), n2(u[..., 2])
        best["k_ut"] = max(best["k_ut"], ut_k / (uth_k + uz_k + fs))
        best["k_uz"] = max(best["k_uz"], uz / (L**2 * (fs + ut_k + uth)))
        best["k_tang"] = max(best["k_tang"], (np.sqrt(uth) + np.sqrt(uz)) / np.sqrt(fs))
    return best

"""Mid-surfaces in principal coordinates.

A :class:`SurfacePatch` is a single chart ``r(theta, z)`` over

    E = {(theta, z) : theta in (0, 1), z in (z1(theta), z2(theta))}

whose coordinate lines are lines of curvature.  Everything downstream
(metric factors, principal curvatures and their gradients, Codazzi-Gauss
data) is computed from the derivative jet of ``r`` up to third order.
Catalog surfaces are surfaces of revolution and ship closed-form jets;
``custom-analytic`` surfaces get their jets from central finite differences.

Sign conventions: the unit normal is oriented so that ``dn/dtheta =
kappa_theta * dr/dtheta`` and ``dn/dz = kappa_z * dr/dz`` with nonnegative
curvatures on the elliptic catalog surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ValidationError

KINDS = ("sphere-cap", "quartic-cap", "cylinder-strip", "custom-analytic")

TWO_PI = 2.0 * np.pi
JET_KEYS = [(a, b) for a in range(4) for b in range(4) if a + b <= 3]

# Finite-difference steps by derivative order for custom-analytic charts.
# First derivatives use 1e-4; higher orders need larger steps to keep
# round-off (eps / step**k) below the truncation error.
FD_STEPS = {1: 1e-4, 2: 1e-3, 3: 2e-3}


def _fd_weights(order: int, accuracy: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Central finite-difference offsets and weights (unit step)."""
    if order == 0:
        return np.zeros(1), np.ones(1)
    half = (order + accuracy - 1) // 2
    offsets = np.arange(-half, half + 1, dtype=float)
    n = offsets.size
    vander = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return offsets, np.linalg.solve(vander, rhs)


_FD = {k: _fd_weights(k) for k in range(4)}


@dataclass(frozen=True)
class FrameSample:
    """Differential-geometric data at one or many chart points.

    Array-valued fields broadcast over the sample shape; vectors carry a
    trailing axis of length 3, gradients a trailing axis ``(d_theta, d_z)``.
    """

    theta: np.ndarray
    z: np.ndarray
    position: np.ndarray
    normal: np.ndarray
    e_theta: np.ndarray
    e_z: np.ndarray
    A_theta: np.ndarray
    A_z: np.ndarray
    kappa_theta: np.ndarray
    kappa_z: np.ndarray
    dA_theta: np.ndarray
    dA_z: np.ndarray
    dkappa_theta: np.ndarray
    dkappa_z: np.ndarray
    d2A_theta: np.ndarray
    d2A_z: np.ndarray
    mixed_curvature: np.ndarray
    metric_skew: np.ndarray

    @property
    def gaussian_curvature(self) -> np.ndarray:
        return self.kappa_theta * self.kappa_z

    def frame_matrix(self) -> np.ndarray:
        """Rows ``(n, e_theta, e_z)``; the curvilinear component order is (t, theta, z)."""
        return np.stack([self.normal, self.e_theta, self.e_z], axis=-2)


@dataclass(frozen=True)
class SurfacePatch:
    """A principal-coordinate chart of a mid-surface.

    ``jet(theta, z)`` returns a mapping ``(a, b) -> d^a_theta d^b_z r`` for
    all ``a + b <= 3``, each of shape ``theta.shape + (3,)``.
    """

    kind: str
    params: Mapping[str, object]
    jet: Callable[[np.ndarray, np.ndarray], dict]
    z1: Callable[[np.ndarray], np.ndarray]
    z2: Callable[[np.ndarray], np.ndarray]
    periodic: bool = False
    polar: bool = False
    flat_points: tuple = ()
    guard: float = 1e-6
    normal_sign: float = 1.0
    analytic: bool = True
    curvature_ratio: Callable | None = field(default=None, repr=False)

    # -- domain -----------------------------------------------------------
    def wrap(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.mod(theta, 1.0) if self.periodic else theta

    def z_bounds(self, theta):
        theta = self.wrap(theta)
        return (np.broadcast_to(self.z1(theta), np.shape(theta)).astype(float),
                np.broadcast_to(self.z2(theta), np.shape(theta)).astype(float))

    def constant_bounds(self) -> bool:
        ts = np.linspace(0.0, 1.0, 17)
        lo, hi = self.z_bounds(ts)
        return bool(np.ptp(lo) == 0.0 and np.ptp(hi) == 0.0)

    def contains(self, theta, z, tol: float = 1e-12):
        theta = np.asarray(theta, dtype=float)
        z = np.asarray(z, dtype=float)
        lo, hi = self.z_bounds(theta)
        inside = (z >= lo - tol) & (z <= hi + tol)
        if not self.periodic:
            inside &= (theta >= -tol) & (theta <= 1.0 + tol)
        return inside

    def in_guard(self, theta, z):
        """True where the point lies inside the guard radius of the polar line."""
        if not self.polar:
            return np.zeros(np.broadcast(np.asarray(theta), np.asarray(z)).shape, bool)
        lo, _ = self.z_bounds(theta)
        return np.asarray(z) - lo < self.guard

    # -- geometry ---------------------------------------------------------
    def position(self, theta, z) -> np.ndarray:
        theta, z = np.broadcast_arrays(np.asarray(theta, float), np.asarray(z, float))
        return self.jet(theta, z)[(0, 0)]

    def frames(self, theta, z, check: bool = True) -> FrameSample:
        """Vectorized frame evaluation; ``check`` enforces domain and guard."""
        theta, z = np.broadcast_arrays(np.asarray(theta, float), np.asarray(z, float))
        if check:
            if not np.all(self.contains(theta, z)):
                raise ValidationError("point outside the parameter domain E")
            if np.any(self.in_guard(theta, z)):
                raise ValidationError("point inside the guard radius of a coordinate singularity")
        return _frame_from_jet(self.jet(theta, z), theta, z, self.normal_sign)

    def chord_distance(self, theta, z, point) -> np.ndarray:
        x = self.position(theta, z)
        x0 = self.position(point[0], point[1])
        return np.linalg.norm(x - x0, axis=-1)

    # -- local coordinates around a center --------------------------------
    def is_polar_point(self, center) -> bool:
        if not self.polar:
            return False
        lo, _ = self.z_bounds(center[0])
        return bool(abs(center[1] - float(lo)) <= self.guard)

    def local_map(self, theta, z, center, scale: float = 1.0):
        """Local coordinates ``P = (xi, eta)`` around ``center`` and their
        first and second chart derivatives.

        Regular centers use parameter offsets ``((theta - theta0), (z - z0))``
        (theta wrapped to the nearest image when periodic).  A center on the
        polar line uses tangent-plane Cartesian coordinates
        ``(rho cos phi, rho sin phi)`` with ``rho = z - z1`` and ``phi = 2 pi theta``,
        smooth through the pole.

        Returns ``P`` (..., 2), ``dP`` (..., 2, 2) with ``dP[..., k, a] = dP_k/dx_a``
        and ``d2P`` (..., 2, 2, 2) with ``d2P[..., k, a, b]``; ``x = (theta, z)``.
        """
        theta, z = np.broadcast_arrays(np.asarray(theta, float), np.asarray(z, float))
        shape = theta.shape
        P = np.zeros(shape + (2,))
        dP = np.zeros(shape + (2, 2))
        d2P = np.zeros(shape + (2, 2, 2))
        if self.is_polar_point(center):
            lo, _ = self.z_bounds(theta)
            rho = z - lo
            w = TWO_PI * float(self.params.get("angle_span", 1.0))
            c, s = np.cos(w * theta), np.sin(w * theta)
            P[..., 0], P[..., 1] = rho * c, rho * s
            dP[..., 0, 0], dP[..., 0, 1] = -w * rho * s, c
            dP[..., 1, 0], dP[..., 1, 1] = w * rho * c, s
            d2P[..., 0, 0, 0] = -w * w * rho * c
            d2P[..., 0, 0, 1] = d2P[..., 0, 1, 0] = -w * s
            d2P[..., 1, 0, 0] = -w * w * rho * s
            d2P[..., 1, 0, 1] = d2P[..., 1, 1, 0] = w * c
        else:
            dth = theta - center[0]
            if self.periodic:
                dth = dth - np.round(dth)
            P[..., 0], P[..., 1] = dth, z - center[1]
            dP[..., 0, 0] = dP[..., 1, 1] = 1.0
        return P / scale, dP / scale, d2P / scale

    def local_inverse(self, xi, eta, center, scale: float = 1.0):
        """Chart point ``(theta, z)`` with local coordinates ``(xi, eta)``."""
        xi = np.asarray(xi, float) * scale
        eta = np.asarray(eta, float) * scale
        if self.is_polar_point(center):
            w = TWO_PI * float(self.params.get("angle_span", 1.0))
            theta = np.mod(np.arctan2(eta, xi), TWO_PI) / w
            lo, _ = self.z_bounds(theta)
            return theta, lo + np.hypot(xi, eta)
        return center[0] + xi, center[1] + eta


def _frame_from_jet(j: dict, theta, z, sign: float) -> FrameSample:
    dot = lambda a, b: np.einsum("...i,...i->...", a, b)
    r_t, r_z = j[(1, 0)], j[(0, 1)]
    r_tt, r_tz, r_zz = j[(2, 0)], j[(1, 1)], j[(0, 2)]
    r_ttt, r_ttz, r_tzz, r_zzz = j[(3, 0)], j[(2, 1)], j[(1, 2)], j[(0, 3)]

    A_t = np.linalg.norm(r_t, axis=-1)
    A_z = np.linalg.norm(r_z, axis=-1)
    e_t = r_t / A_t[..., None]
    e_z = r_z / A_z[..., None]
    c = sign * np.cross(r_t, r_z)
    cn = np.linalg.norm(c, axis=-1)
    n = c / cn[..., None]

    At_t, At_z = dot(e_t, r_tt), dot(e_t, r_tz)
    Az_t, Az_z = dot(e_z, r_tz), dot(e_z, r_zz)
    At_tt = (dot(r_tt, r_tt) - At_t**2) / A_t + dot(e_t, r_ttt)
    At_tz = (dot(r_tt, r_tz) - At_t * At_z) / A_t + dot(e_t, r_ttz)
    At_zz = (dot(r_tz, r_tz) - At_z**2) / A_t + dot(e_t, r_tzz)
    Az_tt = (dot(r_tz, r_tz) - Az_t**2) / A_z + dot(e_z, r_ttz)
    Az_tz = (dot(r_tz, r_zz) - Az_t * Az_z) / A_z + dot(e_z, r_tzz)
    Az_zz = (dot(r_zz, r_zz) - Az_z**2) / A_z + dot(e_z, r_zzz)

    # second fundamental form coefficients with the Weingarten sign above
    L_tt, L_zz = -dot(n, r_tt), -dot(n, r_zz)
    k_t = L_tt / A_t**2
    k_z = L_zz / A_z**2

    # derivatives of the unit normal from the (unnormalized) cross product
    def dn(dc):
        return (dc - n * dot(n, dc)[..., None]) / cn[..., None]

    n_t = dn(sign * (np.cross(r_tt, r_z) + np.cross(r_t, r_tz)))
    n_z = dn(sign * (np.cross(r_tz, r_z) + np.cross(r_t, r_zz)))
    dL_tt = (-dot(n_t, r_tt) - dot(n, r_ttt), -dot(n_z, r_tt) - dot(n, r_ttz))
    dL_zz = (-dot(n_t, r_zz) - dot(n, r_tzz), -dot(n_z, r_zz) - dot(n, r_zzz))
    dk_t = np.stack([dL_tt[0] / A_t**2 - 2 * L_tt * At_t / A_t**3,
                     dL_tt[1] / A_t**2 - 2 * L_tt * At_z / A_t**3], axis=-1)
    dk_z = np.stack([dL_zz[0] / A_z**2 - 2 * L_zz * Az_t / A_z**3,
                     dL_zz[1] / A_z**2 - 2 * L_zz * Az_z / A_z**3], axis=-1)

    d2At = np.stack([np.stack([At_tt, At_tz], -1), np.stack([At_tz, At_zz], -1)], -2)
    d2Az = np.stack([np.stack([Az_tt, Az_tz], -1), np.stack([Az_tz, Az_zz], -1)], -2)
    return FrameSample(
        theta=theta, z=z, position=j[(0, 0)], normal=n, e_theta=e_t, e_z=e_z,
        A_theta=A_t, A_z=A_z, kappa_theta=k_t, kappa_z=k_z,
        dA_theta=np.stack([At_t, At_z], -1), dA_z=np.stack([Az_t, Az_z], -1),
        dkappa_theta=dk_t, dkappa_z=dk_z, d2A_theta=d2At, d2A_z=d2Az,
        mixed_curvature=dot(n, r_tz) / (A_t * A_z),
        metric_skew=dot(r_t, r_z) / (A_t * A_z),
    )


# ---------------------------------------------------------------------------
# jets
# ---------------------------------------------------------------------------

def revolution_jet(profile_R: Callable, profile_Y: Callable, span: float = 1.0):
    """Closed-form jet of ``r = (R(z) cos w theta, Y(z), R(z) sin w theta)``.

    ``profile_R(z)`` and ``profile_Y(z)`` return the list of the function and
    its first three derivatives; ``w = 2 pi span``.
    """
    w = TWO_PI * span
    cos_d = (np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin)
    sin_d = (np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x))

    def jet(theta, z):
        phi = w * theta
        R = profile_R(z)
        Y = profile_Y(z)
        out = {}
        for a, b in JET_KEYS:
            x = R[b] * w**a * cos_d[a](phi)
            y = Y[b] * np.ones_like(phi) if a == 0 else np.zeros_like(phi)
            zc = R[b] * w**a * sin_d[a](phi)
            out[(a, b)] = np.stack(np.broadcast_arrays(x, y, zc), axis=-1)
        return out

    return jet


def finite_difference_jet(r: Callable):
    """Jet of an analytic map ``r(theta, z) -> (x, y, z)`` by 4th-order central differences."""

    def evaluate(theta, z):
        return np.stack(np.broadcast_arrays(*r(theta, z)), axis=-1).astype(float)

    def jet(theta, z):
        out = {(0, 0): evaluate(theta, z)}
        for a, b in JET_KEYS:
            if a + b == 0:
                continue
            ht = FD_STEPS[a + b] if a else 0.0
            hz = FD_STEPS[a + b] if b else 0.0
            (ot, wt), (oz, wz) = _FD[a], _FD[b]
            acc = 0.0
            for i, oi in enumerate(ot):
                for k, ok in enumerate(oz):
                    acc = acc + wt[i] * wz[k] * evaluate(theta + oi * ht, z + ok * hz)
            out[(a, b)] = acc / ((ht if a else 1.0) ** a * (hz if b else 1.0) ** b)
        return out

    return jet


def _const(value):
    return lambda theta: np.full(np.shape(theta), float(value))


def _auto_sign(jet, theta, z) -> float:
    fr = _frame_from_jet(jet(np.asarray(theta), np.asarray(z)), theta, z, 1.0)
    return 1.0 if float(fr.kappa_theta + fr.kappa_z) >= 0.0 else -1.0


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

def make_surface(kind: str, params: Mapping[str, object] | None = None) -> SurfacePatch:
    """Build a catalog surface.

    ``sphere-cap``: ``radius`` (1), ``band`` ([0.2, 0.8]) in meridian arclength
    from the pole; a band starting at 0 is a polar cap.

    ``quartic-cap``: revolution of the profile ``y = scale * s**4`` with
    ``z = s`` the distance from the axis; ``radius`` (1) is the outer edge and
    ``inner`` (0) the inner edge.  With ``inner = 0`` the chart is polar and
    the apex, a flat point, is listed in ``flat_points``.

    ``cylinder-strip``: ``radius`` (1), ``angle`` (pi/2) of arc, ``length`` (0.6).

    ``custom-analytic``: ``r`` callable ``(theta, z) -> (x, y, z)`` plus ``z1``,
    ``z2`` (floats or callables), ``periodic``, ``polar``, ``flat_points``.
    """
    params = dict(params or {})
    if kind not in KINDS:
        raise ValidationError(f"unknown surface kind {kind!r}; expected one of {KINDS}")

    if kind == "sphere-cap":
        rho = float(params.setdefault("radius", 1.0))
        lo, hi = (float(v) for v in params.setdefault("band", [0.2, 0.8]))
        if rho <= 0 or hi > np.pi * rho:
            raise ValidationError("sphere-cap band must lie within the sphere")

        def R(z):
            return [rho * np.sin(z / rho), np.cos(z / rho), -np.sin(z / rho) / rho,
                    -np.cos(z / rho) / rho**2]

        def Y(z):
            return [rho * np.cos(z / rho), -np.sin(z / rho), -np.cos(z / rho) / rho,
                    np.sin(z / rho) / rho**2]

        jet = revolution_jet(R, Y)
        patch = SurfacePatch(kind, params, jet, _const(lo), _const(hi), periodic=True,
                             polar=(lo == 0.0))
    elif kind == "quartic-cap":
        a = float(params.setdefault("scale", 1.0))
        lo = float(params.setdefault("inner", 0.0))
        hi = float(params.setdefault("radius", 1.0))
        if a <= 0:
            raise ValidationError("quartic-cap scale must be positive")

        def R(z):
            return [z, np.ones_like(z), np.zeros_like(z), np.zeros_like(z)]

        def Y(z):
            return [a * z**4, 4 * a * z**3, 12 * a * z**2, 24 * a * z]

        def ratio(theta, z):
            # kappa_theta / kappa_z in closed form, finite at the apex
            return (1.0 + 16 * a * a * z**6) / 3.0

        jet = revolution_jet(R, Y)
        flat = ((0.0, 0.0),) if lo == 0.0 else ()
        patch = SurfacePatch(kind, params, jet, _const(lo), _const(hi), periodic=True,
                             polar=(lo == 0.0), flat_points=flat, curvature_ratio=ratio)
    elif kind == "cylinder-strip":
        rho = float(params.setdefault("radius", 1.0))
        span = float(params.setdefault("angle", np.pi / 2)) / TWO_PI
        length = float(params.setdefault("length", 0.6))

        def R(z):
            return [rho * np.ones_like(z), np.zeros_like(z), np.zeros_like(z), np.zeros_like(z)]

        def Y(z):
            return [z, np.ones_like(z), np.zeros_like(z), np.zeros_like(z)]

        params["angle_span"] = span
        jet = revolution_jet(R, Y, span)
        patch = SurfacePatch(kind, params, jet, _const(0.0), _const(length),
                             periodic=bool(np.isclose(span, 1.0)))
    else:
        r = params.get("r")
        if not callable(r):
            raise ValidationError("custom-analytic surfaces need a callable 'r'")
        z1 = params.get("z1", 0.0)
        z2 = params.get("z2", 1.0)
        patch = SurfacePatch(
            kind, params, finite_difference_jet(r),
            z1 if callable(z1) else _const(z1), z2 if callable(z2) else _const(z2),
            periodic=bool(params.get("periodic", False)), polar=bool(params.get("polar", False)),
            flat_points=tuple(tuple(map(float, p)) for p in params.get("flat_points", ())),
            analytic=False,
        )

    ts = np.linspace(0.0, 1.0, 65)
    lo, hi = patch.z_bounds(ts)
    if np.any(lo < 0.0) or np.any(hi - lo <= 0.0):
        raise ValidationError("z-extent must satisfy 0 <= z1 < z2")
    tm = 0.5 if not patch.periodic else 0.37
    zm = float(0.5 * sum(patch.z_bounds(tm)))
    sign = _auto_sign(patch.jet, np.asarray(tm), np.asarray(zm))
    patch = _replace(patch, normal_sign=sign)
    _check_principal(patch)
    return patch


def _replace(patch: SurfacePatch, **changes) -> SurfacePatch:
    from dataclasses import replace

    return replace(patch, **changes)


def _check_principal(patch: SurfacePatch, n: int = 9, tol: float = 1e-6) -> None:
    th, zz = _sample_grid(patch, n)
    fr = patch.frames(th, zz, check=False)
    scale = 1.0 + np.abs(fr.kappa_theta) + np.abs(fr.kappa_z)
    if np.max(np.abs(fr.metric_skew)) > tol or np.max(np.abs(fr.mixed_curvature) / scale) > tol:
        raise ValidationError("coordinate curves are not principal (metric or mixed curvature nonzero)")


def _sample_grid(patch: SurfacePatch, n: int):
    """Closed tensor grid on E with ``n`` points per axis, off the guard band."""
    if patch.periodic:
        th = np.arange(n) / n
    else:
        th = np.linspace(0.0, 1.0, n)
    s = np.linspace(0.0, 1.0, n)
    T, S = np.meshgrid(th, s, indexing="ij")
    lo, hi = patch.z_bounds(T)
    Z = lo + S * (hi - lo)
    if patch.polar:
        Z = np.maximum(Z, lo + 2.0 * patch.guard)
    return T.ravel(), Z.ravel()


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def eval_frame(surface: SurfacePatch, theta: float, z: float) -> FrameSample:
    """Frame at a single chart point; errors outside E or inside the guard."""
    return surface.frames(np.asarray(float(theta)), np.asarray(float(z)), check=True)


@dataclass(frozen=True)
class ShellParams:
    """Mid-surface parameters estimated on a sample grid (sups are lower bounds)."""

    a: float
    A: float
    B: float
    K: float
    l: float
    L: float
    c1: float | None
    c2: float | None
    grid: int

    def valid(self) -> bool:
        ok = 0 < self.a <= self.A < np.inf and 0 < self.l <= self.L
        if self.c1 is not None:
            ok = ok and self.c1 >= 1
        if self.c2 is not None:
            ok = ok and self.c2 >= 0
        return bool(ok)


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    passed: bool
    worst_point: tuple | None
    measured: float
    tolerance: float
    note: str = ""

    def to_dict(self) -> dict:
        return {"condition": self.condition, "pass": self.passed,
                "worst_point": None if self.worst_point is None else list(self.worst_point),
                "measured": self.measured, "tolerance": self.tolerance, "note": self.note}


def _nested_size(sample_density: int) -> int:
    # dyadic sizes nest, which makes the sup/inf estimates monotone
    return 2 ** int(np.ceil(np.log2(max(sample_density - 1, 1)))) + 1


def _surface_grad(fr: FrameSample, d: np.ndarray) -> np.ndarray:
    return np.hypot(d[..., 0] / fr.A_theta, d[..., 1] / fr.A_z)


def compute_shell_params(surface: SurfacePatch, sample_density: int = 128) -> ShellParams:
    """Sup/inf estimates of ``a, A, B, K, l, L`` (and ``c1``, ``c2`` when meaningful)."""
    if sample_density < 16:
        raise ValidationError("sample_density must be >= 16 per axis")
    n = _nested_size(sample_density)
    th, zz = _sample_grid(surface, n)
    fr = surface.frames(th, zz, check=False)
    A = float(np.max(fr.A_theta + fr.A_z))
    a = float(np.min(np.minimum(fr.A_theta, fr.A_z)))
    B = float(np.max(np.linalg.norm(fr.dA_theta, axis=-1) + np.linalg.norm(fr.dA_z, axis=-1)))
    K = float(np.max(np.stack([
        np.abs(fr.kappa_theta), np.abs(fr.kappa_z),
        _surface_grad(fr, fr.dkappa_theta), _surface_grad(fr, fr.dkappa_z)])))
    ts = np.arange(n) / n if surface.periodic else np.linspace(0.0, 1.0, n)
    lo, hi = surface.z_bounds(ts)
    c1 = growth_witness(surface, sample_density) if surface.flat_points else None
    c2 = None
    if np.all(fr.kappa_z[~_near_flat(surface, th, zz)] > 0):
        c2 = float(np.max(_ratio_gradient(surface, fr)))
    return ShellParams(a=a, A=A, B=B, K=K, l=float(np.min(hi - lo)), L=float(np.max(hi - lo)),
                       c1=c1, c2=c2, grid=n)


def _near_flat(surface, th, zz, radius=1e-3):
    mask = np.zeros(np.shape(th), bool)
    for p in surface.flat_points:
        mask |= surface.chord_distance(th, zz, p) < radius
    return mask


def _growth_ratios(surface: SurfacePatch, th, zz, neighborhood: float | None):
    fr = surface.frames(th, zz, check=False)
    best = np.full(np.shape(th), np.inf)
    owner = np.full(np.shape(th), -1)
    for i, p in enumerate(surface.flat_points):
        d = surface.chord_distance(th, zz, p)
        closer = d < best
        best = np.where(closer, d, best)
        owner = np.where(closer, i, owner)
    keep = best > 0
    if neighborhood is not None:
        keep &= best <= neighborhood
    d2 = best[keep] ** 2
    kt, kz = fr.kappa_theta[keep], fr.kappa_z[keep]
    with np.errstate(divide="ignore"):
        ratios = np.stack([kt / d2, kz / d2, d2 / kt, d2 / kz])
    ratios = np.where(np.stack([kt, kz, kt, kz]) > 0, ratios, np.inf)
    return ratios, th[keep], zz[keep]


def growth_witness(surface: SurfacePatch, sample_density: int = 128,
                   neighborhood: float | None = None) -> float:
    """Smallest ``c1 >= 1`` satisfying the quadratic-growth sandwich on the grid."""
    th, zz = _sample_grid(surface, _nested_size(sample_density))
    ratios, _, _ = _growth_ratios(surface, th, zz, neighborhood)
    return float(max(1.0, np.max(ratios)))


def check_flat_point_growth(surface: SurfacePatch, c1: float, sample_density: int = 128,
                            neighborhood: float | None = None) -> ConditionReport:
    """Check ``|x - x_i|^2 / c1 <= kappa_theta, kappa_z <= c1 |x - x_i|^2``.

    Distances are embedded chord distances.  ``neighborhood`` restricts the
    samples to that chord radius around each flat point (default: all of E).
    """
    if not surface.flat_points:
        raise ValidationError("surface declares no flat points")
    th, zz = _sample_grid(surface, _nested_size(sample_density))
    ratios, th, zz = _growth_ratios(surface, th, zz, neighborhood)
    worst = np.max(ratios, axis=0)
    k = int(np.argmax(worst))
    measured = float(worst[k])
    return ConditionReport("flat-point-growth", measured <= c1, (float(th[k]), float(zz[k])),
                           measured, float(c1))


def _ratio_gradient(surface: SurfacePatch, fr: FrameSample) -> np.ndarray:
    kt, kz = fr.kappa_theta, fr.kappa_z
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (fr.dkappa_theta * kz[..., None] - kt[..., None] * fr.dkappa_z) / (kz**2)[..., None]
    return _surface_grad(fr, d)


def check_curvature_ratio(surface: SurfacePatch, c2: float, sample_density: int = 128,
                          limit_tol: float = 1e-3) -> ConditionReport:
    """Check ``|grad(kappa_theta / kappa_z)| <= c2`` on the sample grid.

    At flat points the ratio is extended by its limit, probed along eight
    approach directions; disagreement above ``limit_tol`` is an error.
    """
    th, zz = _sample_grid(surface, _nested_size(sample_density))
    near = _near_flat(surface, th, zz)
    fr = surface.frames(th, zz, check=False)
    if np.any(fr.kappa_z[~near] <= 0):
        raise ValidationError("kappa_z must be positive away from flat points")
    for p in surface.flat_points:
        _flat_point_limit(surface, p, limit_tol)
    g = _ratio_gradient(surface, fr)
    g = np.where(near, 0.0, g)
    k = int(np.nanargmax(g))
    measured = float(g[k])
    return ConditionReport("curvature-ratio", measured <= c2, (float(th[k]), float(zz[k])),
                           measured, float(c2))


def _flat_point_limit(surface: SurfacePatch, p, tol: float) -> float:
    vals = []
    for step in (1e-2, 5e-3):
        for ang in np.linspace(0.0, 2 * np.pi, 8, endpoint=False):
            if surface.is_polar_point(p):
                th, zz = surface.local_inverse(step * np.cos(ang), step * np.sin(ang), p)
            else:
                th, zz = p[0] + step * np.cos(ang), p[1] + step * np.sin(ang)
            if not surface.contains(th, zz) or surface.in_guard(th, zz):
                continue
            if surface.curvature_ratio is not None:
                vals.append(float(surface.curvature_ratio(th, zz)))
            else:
                fr = surface.frames(th, zz, check=False)
                vals.append(float(fr.kappa_theta / fr.kappa_z))
    vals = np.asarray(vals)
    if vals.size == 0 or np.ptp(vals) > tol * max(1.0, np.max(np.abs(vals))) * 10:
        raise ValidationError("curvature ratio has no numerical limit at the flat point")
    return float(np.mean(vals))


def codazzi_gauss_terms(fr: FrameSample):
    """``(d_z(A_theta,z / A_z), d_theta(A_z,theta / A_theta))`` from a frame."""
    t1 = fr.d2A_theta[..., 1, 1] / fr.A_z - fr.dA_theta[..., 1] * fr.dA_z[..., 1] / fr.A_z**2
    t2 = fr.d2A_z[..., 0, 0] / fr.A_theta - fr.dA_z[..., 0] * fr.dA_theta[..., 0] / fr.A_theta**2
    return t1, t2


def codazzi_gauss_residual(surface: SurfacePatch, theta, z, frame: FrameSample | None = None):
    """``d_z(A_theta,z/A_z) + d_theta(A_z,theta/A_theta) + A_z A_theta kappa_z kappa_theta``."""
    fr = frame if frame is not None else surface.frames(theta, z)
    t1, t2 = codazzi_gauss_terms(fr)
    res = t1 + t2 + fr.A_z * fr.A_theta * fr.kappa_z * fr.kappa_theta
    return float(res) if np.ndim(res) == 0 else res


def surface_from_config(block: Mapping[str, object]) -> SurfacePatch:
    """Build a surface from a config block ``{kind: ..., params: {...}}``.

    ``custom-analytic`` accepts ``r = [expr_x, expr_y, expr_z]`` strings in
    ``theta`` and ``z`` using numpy functions (``sin``, ``cos``, ``pi``, ...).
    """
    kind = str(block.get("kind", ""))
    params = dict(block.get("params", {}))
    if kind == "custom-analytic" and isinstance(params.get("r"), Sequence):
        exprs = [compile(str(e), "<surface>", "eval") for e in params["r"]]
        names = {k: getattr(np, k) for k in ("sin", "cos", "tan", "exp", "log", "sqrt",
                                              "sinh", "cosh", "arctan", "pi")}

        def r(theta, z, _e=exprs):
            env = dict(names, theta=np.asarray(theta), z=np.asarray(z))
            return tuple(eval(e, {"__builtins__": {}}, env) for e in _e)

        params["r"] = r
    return make_surface(kind, params)

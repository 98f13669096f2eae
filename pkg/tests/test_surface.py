import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.special import fresnel

from kornshell.errors import ValidationError
from kornshell.surface import (check_curvature_ratio, check_flat_point_growth, codazzi_gauss_residual,
                               compute_shell_params, eval_frame, make_surface)


def _quartic_oracle(s0, a=1):
    s = sp.symbols("s", positive=True)
    y = a * s**4
    yp, ypp = sp.diff(y, s), sp.diff(y, s, 2)
    kz = ypp / (1 + yp**2) ** sp.Rational(3, 2)
    kt = yp / (s * sp.sqrt(1 + yp**2))
    return float(kz.subs(s, s0)), float(kt.subs(s, s0))


def test_unit_sphere_curvatures(sphere_band):
    th, z = np.meshgrid(np.linspace(0, 1, 7), np.linspace(0.25, 0.75, 5))
    fr = sphere_band.frames(th, z)
    assert_allclose(fr.kappa_theta, 1.0, atol=1e-12)
    assert_allclose(fr.kappa_z, 1.0, atol=1e-12)
    assert_allclose(fr.A_z, 1.0, atol=1e-12)


@pytest.mark.parametrize("s0", [0.1, 0.3, 0.7])
def test_quartic_curvatures_match_symbolic(quartic, s0):
    kz, kt = _quartic_oracle(sp.Rational(str(s0)))
    fr = eval_frame(quartic, 0.3, s0)
    assert_allclose(fr.kappa_z, kz, rtol=1e-12)
    assert_allclose(fr.kappa_theta, kt, rtol=1e-12)


def test_quartic_curvature_at_tenth(quartic):
    fr = eval_frame(quartic, 0.0, 0.1)
    assert_allclose(fr.kappa_z, 0.12 / (1 + 16e-6) ** 1.5, rtol=1e-13)
    assert_allclose(fr.kappa_theta, 0.04, rtol=1e-5)


def test_zero_extent_band_rejected():
    with pytest.raises(ValidationError):
        make_surface("sphere-cap", {"radius": 1, "band": [0.5, 0.5]})


def test_frame_is_orthonormal(quartic):
    th, z = np.meshgrid(np.linspace(0, 1, 9), np.linspace(0.05, 1.0, 9))
    Q = quartic.frames(th, z).frame_matrix()
    assert_allclose(Q @ np.swapaxes(Q, -1, -2), np.broadcast_to(np.eye(3), Q.shape), atol=1e-12)


def test_frame_outside_domain(sphere_band):
    with pytest.raises(ValidationError):
        eval_frame(sphere_band, 0.5, 0.9)


def test_shell_params_sphere(sphere_band):
    p = compute_shell_params(sphere_band, 32)
    assert_allclose(p.K, 1.0, atol=1e-10)
    assert_allclose(p.L, 0.6, atol=1e-12)
    assert p.c1 is None and p.valid()


def test_shell_params_cylinder(cylinder):
    cyl = make_surface("cylinder-strip", {"radius": 2.5})
    assert_allclose(compute_shell_params(cyl, 32).K, 1 / 2.5, rtol=1e-10)


def test_quartic_growth_witness_satisfies_sandwich(quartic):
    p = compute_shell_params(quartic, 64)
    assert p.c1 >= 1
    assert check_flat_point_growth(quartic, p.c1, 64).passed


@pytest.mark.parametrize("c1,ok", [(20.0, True), (1.0, False)])
def test_flat_point_growth(quartic, c1, ok):
    rep = check_flat_point_growth(quartic, c1)
    assert rep.passed is ok
    if not ok:
        assert rep.measured > 11


def test_flat_point_growth_needs_flat_point(sphere_band):
    with pytest.raises(ValidationError):
        check_flat_point_growth(sphere_band, 2.0)


def test_curvature_ratio(sphere_band, quartic):
    assert check_curvature_ratio(sphere_band, 0.01).passed
    measured = check_curvature_ratio(quartic, 1e9).measured
    assert check_curvature_ratio(quartic, measured * (1 + 1e-9)).passed
    assert not check_curvature_ratio(quartic, 0.5 * measured).passed


def _fresnel_band(lo):
    # meridian turning angle phi0 + z^2/2: kappa_z = z while kappa_theta stays
    # bounded away from 0, so kappa_theta / kappa_z ~ 1/z near z = 0
    phi0, R0 = 0.6, 1.0
    rp = np.sqrt(np.pi)

    def r(theta, z):
        S, C = fresnel(z / rp)
        R = R0 + rp * (np.cos(phi0) * C - np.sin(phi0) * S)
        Y = rp * (np.sin(phi0) * C + np.cos(phi0) * S)
        w = 2 * np.pi * theta
        return R * np.cos(w), Y, R * np.sin(w)

    return make_surface("custom-analytic", {"r": r, "z1": lo, "z2": 0.8, "periodic": True})


def test_curvature_ratio_blowup_fails():
    surf = _fresnel_band(0.02)
    fr = eval_frame(surf, 0.3, 0.5)
    assert_allclose(abs(fr.kappa_z), 0.5, rtol=1e-4)
    rep = check_curvature_ratio(surf, 10.0)
    assert not rep.passed
    assert rep.worst_point[1] < 0.1
    # the bound degrades as the band approaches the vanishing circle
    assert check_curvature_ratio(_fresnel_band(0.01), 10.0).measured > 2 * rep.measured


def test_codazzi_gauss_vanishes(sphere_band, quartic):
    th, z = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0.25, 0.75, 5))
    assert np.max(np.abs(codazzi_gauss_residual(sphere_band, th, z))) < 1e-8
    assert abs(codazzi_gauss_residual(quartic, 0.4, 0.3)) < 1e-8


def test_codazzi_gauss_detects_corruption(quartic):
    import dataclasses
    fr = quartic.frames(np.array(0.4), np.array(0.3))
    bad = dataclasses.replace(fr, kappa_theta=2 * fr.kappa_theta)
    assert abs(codazzi_gauss_residual(quartic, 0.4, 0.3, frame=bad)) > 1e-3


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.05, 0.95))
def test_codazzi_gauss_random_points(theta, z):
    surf = make_surface("quartic-cap", {"scale": 1.0})
    assert abs(codazzi_gauss_residual(surf, theta, z)) < 1e-8

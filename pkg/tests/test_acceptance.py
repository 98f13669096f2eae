"""Acceptance criteria 1-9, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` or ``python tests/test_acceptance.py``.
The eigen-solve criteria use the shipped configs under ``configs/``.
"""

from __future__ import annotations

import functools
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from kornshell.analysis import fit_scaling_exponent, identity_audit, random_trial_fields
from kornshell.ansatz import EXPECTED_EXPONENTS, QUANTITIES, AnsatzSpec, ansatz_quotient, exact_norms
from kornshell.buckling import ElasticTensor, StressField, lambda_cl
from kornshell.cli import korn_row, main
from kornshell.config import load_config
from kornshell.mesh import build_shell_mesh, tag_dirichlet
from kornshell.operators import assemble_forms
from kornshell.solver import dense_oracle, min_quotient
from kornshell.surface import make_surface

ROOT = Path(__file__).resolve().parents[1]
QUARTIC_CFG = ROOT / "configs" / "quartic.toml"
SPHERE_CFG = ROOT / "configs" / "sphere-cap.toml"
ANSATZ_H = [0.1, 0.05, 0.025, 0.0125]
SWEEP_LIMIT = 30 * 60.0


def report(n: int, ok: bool, detail: str) -> None:
    print(f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)


def _default_quartic():
    return make_surface("quartic-cap", {"scale": 1.0})


@functools.lru_cache(maxsize=None)
def korn_sweep(path: str, band: float | None = None):
    cfg = load_config(path)
    t0 = time.perf_counter()
    rows = [korn_row(cfg, h, band) for h in cfg.h_list]
    return cfg, rows, time.perf_counter() - t0


# -- criteria ------------------------------------------------------------------

def criterion_1():
    t0 = time.perf_counter()
    slopes = {}
    for label, surf in (("default", _default_quartic()),
                        ("run-config", load_config(QUARTIC_CFG).make_surface())):
        q = [ansatz_quotient(surf, AnsatzSpec((0.0, 0.0), h)) for h in ANSATZ_H]
        slopes[label] = fit_scaling_exponent(ANSATZ_H, q).slope
    dt = time.perf_counter() - t0
    ok = all(abs(s - 1.5) <= 0.1 for s in slopes.values()) and dt < 60
    detail = ", ".join(f"{k} slope {v:.4f}" for k, v in slopes.items())
    return ok, f"Ansatz quotient {detail} (target 1.5 +- 0.1), {dt:.1f}s"


def criterion_2():
    t0 = time.perf_counter()
    surf = _default_quartic()
    rows = [exact_norms(surf, AnsatzSpec((0.0, 0.0), h)) for h in ANSATZ_H]
    bad = []
    for q in QUANTITIES:
        want = EXPECTED_EXPONENTS[q]
        if want is None:
            continue
        s = fit_scaling_exponent(ANSATZ_H, [r[q] for r in rows]).slope
        if abs(s - want) > 0.1:
            bad.append(f"{q} {s:.2f} vs {want:g}")
    g11 = max(r["grad_11_max"] for r in rows)
    dt = time.perf_counter() - t0
    ok = not bad and g11 <= 1e-10 and dt < 60
    return ok, (f"(grad u)_11 max {g11:.1e}; {13 - len(bad)}/13 exponents within 0.1; "
                f"off: {'; '.join(bad) if bad else 'none'}; {dt:.1f}s")


def criterion_3():
    cfg_q, rows_q, t_q = korn_sweep(str(QUARTIC_CFG))
    cfg_s = load_config(SPHERE_CFG)
    bands = cfg_s.band_lengths or (None,)
    slopes_s, t_s = [], 0.0
    for b in bands:
        _, rows, dt = korn_sweep(str(SPHERE_CFG), b)
        slopes_s.append(fit_scaling_exponent(cfg_s.h_list, [r["korn_quotient"] for r in rows]).slope)
        t_s += dt
    s_q = fit_scaling_exponent(cfg_q.h_list, [r["korn_quotient"] for r in rows_q]).slope
    ok = 1.2 <= s_q <= 1.8 and 0.8 <= slopes_s[0] <= 1.2 and t_q < SWEEP_LIMIT and t_s < SWEEP_LIMIT
    extra = ", ".join(f"band {b:g}: {s:.4f}" for b, s in zip(bands, slopes_s))
    return ok, (f"quartic slope {s_q:.4f} in [1.2, 1.8] ({t_q:.0f}s); sphere slope {extra} "
                f"(primary in [0.8, 1.2], {t_s:.0f}s)")


def criterion_4():
    worst, n = -np.inf, 0
    for path in (QUARTIC_CFG, SPHERE_CFG):
        _, rows, _ = korn_sweep(str(path))
        for r in rows:
            worst = max(worst, (r["korn_quotient"] - r["ansatz_quotient"]) / r["ansatz_quotient"])
            n += 1
    ok = worst <= 1e-12
    return ok, f"K(V^h) <= nodal Ansatz quotient at {n} sweep points, max (K - Q)/Q = {worst:.3e}"


def criterion_5():
    t0 = time.perf_counter()
    worst = 0.0
    surfaces = [_default_quartic(), make_surface("sphere-cap", {}), make_surface("cylinder-strip", {})]
    for surf in surfaces:
        rep = identity_audit(surf, random_trial_fields(surf, 5, seed=2024), lam=1.0, order=8)
        worst = max(worst, max(r["relative_residual"] for rows in rep.values() for r in rows))
    dt = time.perf_counter() - t0
    ok = worst < 1e-6 and dt < 60
    return ok, f"4 identities x 5 fields x 3 surfaces at order 8, max relative residual {worst:.2e}, {dt:.2f}s"


ORACLE_MESHES = [("quartic-cap", {}, (3, 2, 1)), ("quartic-cap", {}, (8, 8, 2)),
                 ("quartic-cap", {"scale": 0.2, "radius": 1.6}, (8, 8, 2)),
                 ("sphere-cap", {}, (8, 8, 2)), ("sphere-cap", {"band": [0.0, 1.5]}, (8, 8, 2)),
                 ("cylinder-strip", {}, (2, 2, 1)), ("cylinder-strip", {}, (8, 8, 2)),
                 ("cylinder-strip", {}, (10, 10, 2))]


def criterion_6():
    worst, count = 0.0, 0
    L0 = ElasticTensor(1.0, 1.0)
    for kind, params, res in ORACLE_MESHES:
        mesh = build_shell_mesh(make_surface(kind, params), 0.1, res, min_resolution=(1, 1, 1))
        dofs = tag_dirichlet(mesh)
        assert dofs.n_free <= 2000
        P = assemble_forms(mesh, dofs)
        for den in ("D", "M_theta", "M_z"):
            a, b = min_quotient(P, "N", den).value, dense_oracle(P, "N", den).value
            worst = max(worst, abs(a - b) / b)
        sigma = StressField.hydrostatic(mesh, -1.0)
        a = lambda_cl(P, sigma, L0, mesh, dofs).value
        b = lambda_cl(P, sigma, L0, mesh, dofs, dense=True).value
        worst = max(worst, abs(a - b) / b)
        count += 1
    ok = worst <= 1e-8
    return ok, f"{count} meshes x 4 quotients, max relative deviation from dense oracle {worst:.2e}"


def criterion_7():
    cfg, rows, _ = korn_sweep(str(QUARTIC_CFG))
    q = np.array([r["mass"][2.0] for r in rows])
    _, srows, _ = korn_sweep(str(SPHERE_CFG))
    s = np.array([r["mass"][2.0] for r in srows])
    ok_q = bool(np.all(np.diff(q) >= 0) and q[-1] > 0.5)
    ok_s = bool(np.all(np.abs(np.diff(s)) < 0.1) and not np.all(np.diff(s) > 0.1))
    fmt = lambda v: ", ".join(f"{x:.4f}" for x in v)
    return ok_q and ok_s, (f"quartic c=2 ratios [{fmt(q)}] nondecreasing and > 0.5; "
                           f"sphere control [{fmt(s)}] differences [{fmt(np.diff(s))}]")


def criterion_8():
    cfg, rows, _ = korn_sweep(str(QUARTIC_CFG))
    L0 = ElasticTensor(*cfg.elastic)
    surf = cfg.make_surface()
    hom, bound_gap, ratios = 0.0, np.inf, []
    for h, r in zip(cfg.h_list, rows):
        mesh = build_shell_mesh(surf, h, cfg.mesh.resolution(h), grading=cfg.mesh.grading_block(h))
        dofs = tag_dirichlet(mesh)
        P = assemble_forms(mesh, dofs)
        sigma = StressField.hydrostatic(mesh, -1.0)
        base = lambda_cl(P, sigma, L0, mesh, dofs, cfg.solver).value
        if h == cfg.h_list[0]:
            for s in (0.5, 2.0, 10.0):
                v = lambda_cl(P, sigma.scaled(s), L0, mesh, dofs, cfg.solver).value
                hom = max(hom, abs(v * s - base) / base)
        K = r["korn_quotient"]
        bound_gap = min(bound_gap, base / (2 * L0.mu * K) - 1)
        ratios.append(base**2 / K)
    dec = bool(np.all(np.diff(ratios) < 0))
    ok = hom <= 1e-10 and bound_gap >= -1e-8 and dec
    return ok, (f"homogeneity error {hom:.1e}; min lambda_cl/(2 mu K) - 1 = {bound_gap:.3e}; "
                f"validity ratios [{', '.join(f'{x:.4g}' for x in ratios)}] decreasing={dec}")


def criterion_9(tmp: Path):
    outs = []
    for k in range(2):
        out = tmp / f"run{k}"
        assert main(["sweep", "--config", str(QUARTIC_CFG), "--out", str(out)]) == 0
        outs.append(out)
    names = ("sweep.csv", "localization.csv")
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    return same, f"two sweep runs with seed from config: {', '.join(names)} bit-identical={same}"


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    ok, detail = CRITERIA[n]()
    with capsys.disabled():
        print()
        report(n, ok, detail)
    assert ok, detail


def test_criterion_9(tmp_path, capsys):
    ok, detail = criterion_9(tmp_path)
    with capsys.disabled():
        print()
        report(9, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    import tempfile

    results = []
    for n, fn in CRITERIA.items():
        ok, detail = fn()
        report(n, ok, detail)
        results.append(ok)
    with tempfile.TemporaryDirectory() as d:
        ok, detail = criterion_9(Path(d))
    report(9, ok, detail)
    results.append(ok)
    sys.exit(0 if all(results) else 1)

"""Batch front end: ``kornshell <subcommand> --config run.toml``.

Exit status 0 on success, 2 on validation failure, 3 on solver
non-convergence.  Errors are also written as a JSON record to stderr and to
``diagnostic.json`` in the output directory when it can be created.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (carleman_constants, fit_scaling_exponent, identity_audit, localization_ratio,
                       random_trial_fields)
from .ansatz import QUANTITIES, AnsatzSpec, build_ansatz, exact_norms
from .buckling import (ElasticTensor, EmptyConeError, elastic_form, is_destabilizing, lambda_cl,
                       localization_hypothesis_check, stress_from_config)
from .config import RunConfig, load_config, output_dir
from .errors import ConvergenceError, KornShellError, ValidationError
from .mesh import build_shell_mesh, tag_dirichlet
from .operators import DisplacementField, assemble_forms
from .solver import korn_poincare_ratios, min_quotient, quotient_of
from .surface import (ShellParams, check_curvature_ratio, check_flat_point_growth, codazzi_gauss_residual,
                      compute_shell_params)

SUBCOMMANDS = ("verify-surface", "solve-quotient", "sweep", "ansatz-eval", "localization",
               "buckling", "audit-identities")
SWEEP_COLUMNS = ("h", "n_dofs", "korn_quotient", "korn_constant", "kp_theta", "kp_z", "residual", "iters")
LOCALIZATION_COLUMNS = ("h", "c", "mass_ratio")
BUCKLING_COLUMNS = ("h", "n_dofs", "lambda_cl", "korn_quotient", "validity_ratio", "denominator",
                    "e_over_ut", "ansatz_in_cone", "ansatz_load", "residual", "iters")


def header(cfg: RunConfig) -> str:
    return (f"# kornshell {__version__} numpy {np.__version__} scipy {scipy.__version__} "
            f"config {cfg.digest()}\n")


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, cfg: RunConfig, columns, rows, footer: list[str] = ()) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(header(cfg))
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(row[c]) for c in columns) + "\n")
        for line in footer:
            fh.write(f"# {line}\n")


def write_plot(path: Path, cfg: RunConfig, hs, values) -> None:
    """Two-column ``log h, log value`` data file."""
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(header(cfg))
        fh.write("# log_h log_value\n")
        for h, v in zip(hs, values):
            if v > 0:
                fh.write(f"{np.log(h)!r} {np.log(v)!r}\n")


def write_json(path: Path, cfg: RunConfig, payload: dict) -> None:
    doc = {"header": header(cfg).strip("# \n"), **payload}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o))


# -- per-h work units (module level so they pickle for the worker pool) -------

def _mesh_for(cfg: RunConfig, h: float, band: float | None = None):
    surf = cfg.make_surface(band)
    mesh = build_shell_mesh(surf, h, cfg.mesh.resolution(h), grading=cfg.mesh.grading_block(h))
    dofs = tag_dirichlet(mesh)
    return surf, mesh, dofs


def _flat_center(surf):
    if surf.flat_points:
        return surf.flat_points[0]
    lo, _ = surf.z_bounds(0.0)
    return (0.0, float(lo))


def korn_row(cfg: RunConfig, h: float, band: float | None = None) -> dict:
    surf, mesh, dofs = _mesh_for(cfg, h, band)
    pencil = assemble_forms(mesh, dofs)
    q = min_quotient(pencil, "N", "D", cfg.solver)
    kt = min_quotient(pencil, "N", "M_theta", cfg.solver)
    kz = min_quotient(pencil, "N", "M_z", cfg.solver)
    row = {"h": h, "n_dofs": dofs.n_free, "korn_quotient": q.value, "korn_constant": q.constant,
           "kp_theta": kt.value, "kp_z": kz.value, "residual": max(q.residual, kt.residual, kz.residual),
           "iters": q.iterations + kt.iterations + kz.iterations}
    field = DisplacementField.from_free(mesh, dofs, q.vector)
    center = _flat_center(surf)
    row["mass"] = {c: localization_ratio(field, mesh, center, c) for c in cfg.c_values}
    try:
        spec = AnsatzSpec(center, h, c=cfg.ansatz_c, profile=cfg.ansatz_profile)
        trial = build_ansatz(surf, spec, mesh).to_free(dofs)
        row["ansatz_quotient"] = quotient_of(pencil, trial)
    except ValidationError:
        row["ansatz_quotient"] = float("nan")
    return row


def buckling_row(cfg: RunConfig, h: float) -> dict:
    surf, mesh, dofs = _mesh_for(cfg, h)
    pencil = assemble_forms(mesh, dofs)
    L0 = ElasticTensor(*cfg.elastic)
    sigma = stress_from_config(mesh, cfg.stress, L0)
    res = lambda_cl(pencil, sigma, L0, mesh, dofs, cfg.solver)
    korn = min_quotient(pencil, "N", "D", cfg.solver)
    field = DisplacementField.from_free(mesh, dofs, res.vector)
    x = res.vector
    e2, ut2 = pencil.quadratic("N", x), pencil.quadratic("M_t", x)
    in_cone, load = _ansatz_load(cfg, surf, mesh, dofs, pencil, sigma, L0)
    return {"h": h, "n_dofs": dofs.n_free, "lambda_cl": res.value, "korn_quotient": korn.value,
            "validity_ratio": res.value**2 / korn.value, "denominator": res.denominator,
            "e_over_ut": float(np.sqrt(e2 / ut2)), "ansatz_in_cone": int(in_cone), "ansatz_load": load,
            "residual": res.residual, "iters": res.iterations + korn.iterations, "field": field}


def _ansatz_load(cfg, surf, mesh, dofs, pencil, sigma, L0):
    """Whether the Ansatz is destabilizing for ``sigma``, and its load quotient (an upper bound)."""
    try:
        spec = AnsatzSpec(_flat_center(surf), mesh.h, c=cfg.ansatz_c, profile=cfg.ansatz_profile)
        field = build_ansatz(surf, spec, mesh)
    except ValidationError:
        return False, float("nan")
    flag, geo = is_destabilizing(field, sigma)
    if not flag:
        return False, float("nan")
    x = field.to_free(dofs)
    energy = float(x @ (elastic_form(pencil, mesh, dofs, L0) @ x))
    return True, energy / -geo


def _map(fn, cfg: RunConfig, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(cfg, *it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(fn, cfg, *it) for it in items]
        return [f.result() for f in futs]


# -- subcommands -------------------------------------------------------------

def cmd_verify_surface(cfg: RunConfig, out: Path, workers: int) -> int:
    surf = cfg.make_surface()
    params: ShellParams = compute_shell_params(surf)
    declared = cfg.raw.get("surface", {})
    reports = []
    if surf.flat_points:
        c1 = float(declared.get("c1", 0) or params.c1)
        reports.append(check_flat_point_growth(surf, c1).to_dict())
    else:
        reports.append({"condition": "flat-point-growth", "pass": True, "note": "not-applicable: no flat points"})
    if params.c2 is None:
        reports.append({"condition": "curvature-ratio", "pass": False,
                        "note": "kappa_z not positive away from flat points"})
    else:
        c2 = float(declared.get("c2", 0) or params.c2 * (1 + 1e-9) + 1e-12)
        reports.append(check_curvature_ratio(surf, c2).to_dict())
    th = np.linspace(0.05, 0.95, 19)
    lo, hi = surf.z_bounds(th)
    frac = np.linspace(0.05, 0.95, 19)[:, None]
    z = lo + (hi - lo) * frac
    if surf.polar:
        z = np.maximum(z, lo + surf.guard)
    cg = np.abs(codazzi_gauss_residual(surf, np.broadcast_to(th, z.shape), z))
    cg_max = float(np.max(cg))
    passed = all(r["pass"] for r in reports) and cg_max < 1e-5
    write_json(out / "surface.json", cfg, {
        "shell_params": {k: getattr(params, k) for k in ("a", "A", "B", "K", "l", "L", "c1", "c2")},
        "conditions": reports, "codazzi_gauss_max_residual": cg_max, "passed": passed})
    return 0 if passed else 2


def _h_single(cfg: RunConfig) -> float:
    return float(cfg.raw.get("solve", {}).get("h", cfg.h_list[0]))


def cmd_solve_quotient(cfg: RunConfig, out: Path, workers: int) -> int:
    row = korn_row(cfg, _h_single(cfg))
    write_csv(out / "sweep.csv", cfg, SWEEP_COLUMNS, [row])
    return 0


def cmd_sweep(cfg: RunConfig, out: Path, workers: int) -> int:
    bands = cfg.band_lengths or (None,)
    items = [(h, b) for b in bands for h in cfg.h_list]
    rows = _map(korn_row, cfg, items, workers)
    footer = []
    for b in bands:
        sub = [r for (h, bb), r in zip(items, rows) if bb == b]
        hs = [r["h"] for r in sub]
        tag = "" if b is None else f" band={b!r}"
        if len(sub) >= 3:
            for col in ("korn_quotient", "kp_theta", "kp_z"):
                fit = fit_scaling_exponent(hs, [r[col] for r in sub])
                footer.append(f"fit{tag} {col} slope={fit.slope!r} intercept={fit.intercept!r} r2={fit.r2!r}")
        for r in sub:
            footer.append(f"ansatz{tag} h={r['h']!r} ansatz_quotient={r['ansatz_quotient']!r} "
                          f"bound_holds={r['korn_quotient'] <= r['ansatz_quotient'] * (1 + 1e-12)}")
        suffix = "" if b is None else f"_band{b:g}"
        write_plot(out / f"sweep_korn_quotient{suffix}.dat", cfg, hs, [r["korn_quotient"] for r in sub])
    main = [r for (h, b), r in zip(items, rows) if b == bands[0]]
    write_csv(out / "sweep.csv", cfg, SWEEP_COLUMNS, rows if len(bands) > 1 else main, footer)
    _write_localization(cfg, out, main)
    return 0


def _write_localization(cfg: RunConfig, out: Path, rows) -> None:
    loc = [{"h": r["h"], "c": c, "mass_ratio": r["mass"][c]} for c in cfg.c_values for r in rows]
    footer = []
    for c in cfg.c_values:
        vals = [r["mass"][c] for r in rows]
        footer.append(f"trend c={c!r} differences={[float(v) for v in np.diff(vals)]!r}")
    write_csv(out / "localization.csv", cfg, LOCALIZATION_COLUMNS, loc, footer)


def cmd_localization(cfg: RunConfig, out: Path, workers: int) -> int:
    rows = _map(korn_row, cfg, [(h, None) for h in cfg.h_list], workers)
    _write_localization(cfg, out, rows)
    return 0


def ansatz_table(cfg: RunConfig):
    surf = cfg.make_surface()
    center = _flat_center(surf)
    rows = []
    for h in cfg.ansatz_h:
        n = exact_norms(surf, AnsatzSpec(center, h, c=cfg.ansatz_c, profile=cfg.ansatz_profile))
        rows.append({"h": h, **{q: n[q] for q in QUANTITIES}})
    return rows


def cmd_ansatz_eval(cfg: RunConfig, out: Path, workers: int) -> int:
    rows = ansatz_table(cfg)
    hs = [r["h"] for r in rows]
    slopes = {"h": float("nan")}
    for q in QUANTITIES:
        vals = [r[q] for r in rows]
        if len(rows) >= 3 and all(v > 0 for v in vals):
            slopes[q] = fit_scaling_exponent(hs, vals).slope
            write_plot(out / f"ansatz_{q}.dat", cfg, hs, vals)
        else:
            slopes[q] = float("nan")
    ratio = [r["e"] / r["grad"] for r in rows]
    footer = []
    if len(rows) >= 3:
        fit = fit_scaling_exponent(hs, ratio)
        footer.append(f"quotient e/grad slope={fit.slope!r} r2={fit.r2!r}")
        write_plot(out / "ansatz_quotient.dat", cfg, hs, ratio)
    cols = ("h",) + QUANTITIES
    with (out / "ansatz.csv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(header(cfg))
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(fmt(r[c]) for c in cols) + "\n")
        fh.write("slope," + ",".join(fmt(slopes[q]) for q in QUANTITIES) + "\n")
        for line in footer:
            fh.write(f"# {line}\n")
    return 0


def cmd_buckling(cfg: RunConfig, out: Path, workers: int) -> int:
    rows = _map(buckling_row, cfg, [(h,) for h in cfg.h_list], workers)
    footer = []
    if len(rows) >= 3:
        hs = [r["h"] for r in rows]
        fit = fit_scaling_exponent(hs, [r["lambda_cl"] for r in rows])
        footer.append(f"fit lambda_cl slope={fit.slope!r} r2={fit.r2!r}")
        vr = [r["validity_ratio"] for r in rows]
        footer.append(f"validity_ratio decreasing={bool(np.all(np.diff(vr) < 0))}")
        ok = all(r["lambda_cl"] <= r["ansatz_load"] * (1 + 1e-12) for r in rows if r["ansatz_in_cone"])
        footer.append(f"lambda_cl below ansatz load where destabilizing={ok}")
        hyp = localization_hypothesis_check([r["field"] for r in rows])
        footer.append(f"e_over_ut slope={hyp.slope!r} deviation={hyp.deviation!r} flagged={hyp.flagged}")
        write_plot(out / "buckling_lambda_cl.dat", cfg, hs, [r["lambda_cl"] for r in rows])
    write_csv(out / "buckling.csv", cfg, BUCKLING_COLUMNS, rows, footer)
    return 0


def cmd_audit(cfg: RunConfig, out: Path, workers: int) -> int:
    surf = cfg.make_surface()
    fields = random_trial_fields(surf, cfg.audit_fields, seed=cfg.solver.seed)
    rep = identity_audit(surf, fields, cfg.audit_lambda, cfg.audit_order, cfg.audit_subdivisions)
    worst = max(r["relative_residual"] for v in rep.values() for r in v)
    write_json(out / "audit.json", cfg, {"lambda": cfg.audit_lambda, "order": cfg.audit_order,
                                        "subdivisions": cfg.audit_subdivisions, "identities": rep,
                                        "max_relative_residual": worst,
                                        "empirical_constants": carleman_constants(surf, fields)})
    return 0


COMMANDS = {"verify-surface": cmd_verify_surface, "solve-quotient": cmd_solve_quotient, "sweep": cmd_sweep,
            "ansatz-eval": cmd_ansatz_eval, "localization": cmd_localization, "buckling": cmd_buckling,
            "audit-identities": cmd_audit}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kornshell", description="Korn inequality experiments on thin shells")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", default=None, help="output directory (overrides OUTPUT_DIR and the config)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for sweep entries")
    p.add_argument("--seed", type=int, default=None, help="start-vector seed (overrides the config)")
    return p


def _diagnostic(kind: str, exc: BaseException, out: Path | None) -> None:
    rec = {"status": "error", "kind": kind, "type": type(exc).__name__, "message": str(exc)}
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "diagnostic.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out) if args.out else None
    try:
        cfg = load_config(args.config, args.seed)
        out = output_dir(cfg, args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.subcommand](cfg, out, max(1, args.workers))
    except (ValidationError, EmptyConeError) as exc:
        _diagnostic("validation", exc, out)
        return 2
    except ConvergenceError as exc:
        _diagnostic("convergence", exc, out)
        return 3
    except KornShellError as exc:
        _diagnostic("error", exc, out)
        return 2


if __name__ == "__main__":
    sys.exit(main())

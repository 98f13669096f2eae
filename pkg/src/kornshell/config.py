"""Run configuration read from TOML."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ValidationError
from .solver import DEFAULT_SEED, SolverOptions
from .surface import SurfacePatch, surface_from_config


@dataclass(frozen=True)
class MeshPolicy:
    """In-plane resolution ``ceil(base * (h_ref / h)^(1/4))``, ``n_t`` layers,
    z spacing ``grading`` times finer within ``2 h^(1/4)`` of the flat point."""

    base: tuple = (32, 32)
    h_ref: float = 0.2
    n_t: int = 2
    grading: float = 2.0
    exponent: float = 0.25

    def resolution(self, h: float) -> tuple:
        f = (self.h_ref / h) ** self.exponent
        return (math.ceil(self.base[0] * f - 1e-9), math.ceil(self.base[1] * f - 1e-9), self.n_t)

    def grading_block(self, h: float) -> dict | None:
        if self.grading == 1.0:
            return None
        return {"radius": 2.0 * h**0.25, "factor": self.grading}


@dataclass(frozen=True)
class RunConfig:
    surface: dict
    mesh: MeshPolicy
    h_list: tuple
    band_lengths: tuple = ()
    solver: SolverOptions = SolverOptions()
    c_values: tuple = (1.0, 2.0, 4.0)
    audit_lambda: float = 1.0
    audit_fields: int = 5
    audit_order: int = 8
    audit_subdivisions: int = 2
    ansatz_h: tuple = (0.1, 0.05, 0.025, 0.0125)
    ansatz_c: float = 1.0
    ansatz_profile: str = "bump"
    stress: dict = field(default_factory=lambda: {"type": "meridional", "magnitude": -1.0})
    elastic: tuple = (1.0, 1.0)
    output_dir: str = "out"
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    def make_surface(self, band: float | None = None) -> SurfacePatch:
        block = dict(self.surface)
        if band is not None:
            params = dict(block.get("params", {}))
            if block.get("kind") == "sphere-cap":
                lo = float(params.get("band", [0.2, 0.8])[0])
                params["band"] = [lo, lo + band]
            elif block.get("kind") == "cylinder-strip":
                params["length"] = band
            else:
                params["radius"] = band
            block["params"] = params
        return surface_from_config(block)

    def digest(self) -> str:
        payload = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def _get(d: dict, key: str, default):
    v = d.get(key, default)
    return default if v is None else v


def parse_config(data: dict, seed: int | None = None) -> RunConfig:
    """Validate a parsed TOML mapping and build a :class:`RunConfig`."""
    data = json.loads(json.dumps(data))  # plain containers, deep copy
    if "surface" not in data or "kind" not in data["surface"]:
        raise ValidationError("config needs [surface] with a kind")
    sweep = data.get("sweep", {})
    h_list = tuple(float(h) for h in _get(sweep, "h", [0.2, 0.1, 0.05]))
    if not h_list:
        raise ValidationError("sweep.h must be nonempty")
    if any(h <= 0 for h in h_list):
        raise ValidationError("all h must be positive")
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValidationError("sweep.h must be strictly decreasing")
    m = data.get("mesh", {})
    base = _get(m, "base", [32, 32])
    if isinstance(base, int):
        base = [base, base]
    policy = MeshPolicy(tuple(int(b) for b in base), float(_get(m, "h_ref", h_list[0])),
                        int(_get(m, "n_t", 2)), float(_get(m, "grading", 2.0)))
    s = data.get("solver", {})
    if seed is not None:
        s["seed"] = int(seed)
    s.setdefault("seed", DEFAULT_SEED)
    data["solver"] = s
    opts = SolverOptions(tol=float(_get(s, "tol", 1e-10)), max_iter=int(_get(s, "max_iter", 500)),
                         seed=int(s["seed"]))
    a = data.get("analysis", {})
    el = data.get("elastic", {})
    out = data.get("output", {})
    cfg = RunConfig(
        surface=data["surface"], mesh=policy, h_list=h_list,
        band_lengths=tuple(float(b) for b in _get(sweep, "band_lengths", [])),
        solver=opts,
        c_values=tuple(float(c) for c in _get(a, "c", [1.0, 2.0, 4.0])),
        audit_lambda=float(_get(a, "lambda", 1.0)),
        audit_fields=int(_get(a, "trial_fields", 5)),
        audit_order=int(_get(a, "quad_order", 8)),
        audit_subdivisions=int(_get(a, "subdivisions", 2)),
        ansatz_h=tuple(float(h) for h in _get(a, "ansatz_h", [0.1, 0.05, 0.025, 0.0125])),
        ansatz_c=float(_get(a, "ansatz_c", 1.0)),
        ansatz_profile=str(_get(a, "ansatz_profile", "bump")),
        stress=data.get("stress", {"type": "meridional", "magnitude": -1.0}),
        elastic=(float(_get(el, "lam", 1.0)), float(_get(el, "mu", 1.0))),
        output_dir=str(_get(out, "dir", "out")),
        raw=data,
    )
    surf = cfg.make_surface()
    _check_h_range(cfg, surf)
    return cfg


def _check_h_range(cfg: RunConfig, surf: SurfacePatch) -> None:
    th = np.linspace(0, 1, 33)
    lo, hi = surf.z_bounds(th)
    s = np.linspace(0, 1, 33)
    TH, S = np.meshgrid(th, s, indexing="ij")
    Z = lo[:, None] + S * (hi - lo)[:, None]
    if surf.polar:
        Z = np.maximum(Z, lo[:, None] + surf.guard)
    fr = surf.frames(TH, Z, check=False)
    kmax = float(np.max(np.maximum(np.abs(fr.kappa_theta), np.abs(fr.kappa_z))))
    h_max = 2.0 / kmax if kmax > 0 else math.inf
    if max(cfg.h_list) >= h_max:
        raise ValidationError(f"h must lie below the self-intersection bound {h_max:.4g}")


def load_config(path: str | Path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"config not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"malformed config: {exc}") from exc
    return parse_config(data, seed)


def output_dir(cfg: RunConfig, flag: str | None) -> Path:
    """``--out`` flag, else the ``OUTPUT_DIR`` environment variable, else the config."""
    return Path(flag or os.environ.get("OUTPUT_DIR") or cfg.output_dir)


import json
import subprocess
import sys

import pytest

from kornshell import __version__
from kornshell.ansatz import QUANTITIES
from kornshell.cli import SWEEP_COLUMNS, main
from kornshell.config import MeshPolicy, load_config, parse_config
from kornshell.errors import ValidationError

COARSE = """
[surface]
kind = "quartic-cap"
[surface.params]
scale = 0.2
radius = 1.6

[mesh]
base = [8, 8]
n_t = 2
grading = 2.0

[sweep]
h = [0.2, 0.1, 0.05]

[solver]
tol = {tol}
max_iter = {max_iter}
seed = 11

[analysis]
c = [1.0, 2.0]
ansatz_h = [0.1, 0.05, 0.025]
trial_fields = 2

[stress]
type = "hydrostatic"
magnitude = -1.0
"""


def _config(tmp_path, name="run.toml", tol=1e-10, max_iter=500, text=None):
    path = tmp_path / name
    path.write_text(text if text is not None else COARSE.format(tol=tol, max_iter=max_iter))
    return str(path)


def _rows(path):
    lines = path.read_text().splitlines()
    return lines[0], lines[1].split(","), [l for l in lines[2:] if not l.startswith("#")], lines


def test_sweep_outputs(tmp_path):
    cfg = _config(tmp_path)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    head, cols, rows, lines = _rows(tmp_path / "o" / "sweep.csv")
    assert head.startswith(f"# kornshell {__version__} ") and "config " in head
    assert tuple(cols) == SWEEP_COLUMNS
    assert [float(r.split(",")[0]) for r in rows] == [0.2, 0.1, 0.05]
    assert any(l.startswith("# fit korn_quotient slope=") for l in lines)
    assert all("bound_holds=True" in l for l in lines if l.startswith("# ansatz"))
    _, lcols, lrows, _ = _rows(tmp_path / "o" / "localization.csv")
    assert lcols == ["h", "c", "mass_ratio"] and len(lrows) == 6
    dat = (tmp_path / "o" / "sweep_korn_quotient.dat").read_text().splitlines()
    assert dat[0].startswith("# kornshell") and len(dat) == 5


def test_sweep_bit_identical_and_worker_independent(tmp_path):
    cfg = _config(tmp_path)
    main(["sweep", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["sweep", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "2"])
    for name in ("sweep.csv", "localization.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_flag_recorded(tmp_path):
    cfg = _config(tmp_path)
    assert load_config(cfg, seed=99).solver.seed == 99
    assert load_config(cfg, seed=99).digest() != load_config(cfg).digest()


def test_ansatz_eval(tmp_path):
    assert main(["ansatz-eval", "--config", _config(tmp_path), "--out", str(tmp_path)]) == 0
    _, cols, rows, _ = _rows(tmp_path / "ansatz.csv")
    assert cols == ["h", *QUANTITIES]
    assert rows[-1].startswith("slope,") and len(rows) == 4


def test_audit_and_buckling(tmp_path):
    cfg = _config(tmp_path)
    assert main(["audit-identities", "--config", cfg, "--out", str(tmp_path)]) == 0
    audit = json.loads((tmp_path / "audit.json").read_text())
    assert audit["max_relative_residual"] < 1e-6
    assert main(["buckling", "--config", cfg, "--out", str(tmp_path)]) == 0
    _, cols, rows, lines = _rows(tmp_path / "buckling.csv")
    assert cols[:3] == ["h", "n_dofs", "lambda_cl"] and len(rows) == 3


def test_solve_quotient_and_localization(tmp_path):
    cfg = _config(tmp_path)
    assert main(["solve-quotient", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / "sweep.csv")[2]) == 1
    assert main(["localization", "--config", cfg, "--out", str(tmp_path)]) == 0


def test_verify_surface_sphere(tmp_path):
    text = '[surface]\nkind = "sphere-cap"\n[sweep]\nh = [0.2, 0.1, 0.05]\n'
    assert main(["verify-surface", "--config", _config(tmp_path, text=text), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "surface.json").read_text())
    growth = rep["conditions"][0]
    assert growth["pass"] and growth["note"].startswith("not-applicable")
    assert rep["passed"]


@pytest.mark.parametrize("text", [
    '[surface]\nkind = "sphere-cap"\n[sweep]\nh = [0.05, 0.1, 0.2]\n',
    '[surface]\nkind = "quartic-cap"\n[sweep]\nh = [3.0, 0.1, 0.05]\n',
    '[sweep]\nh = [0.2, 0.1, 0.05]\n',
    '[surface\nkind = ',
])
def test_invalid_config_exit_2(tmp_path, capsys, text):
    assert main(["sweep", "--config", _config(tmp_path, text=text), "--out", str(tmp_path)]) == 2
    diag = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert diag["status"] == "error" and diag["kind"] == "validation"
    assert json.loads((tmp_path / "diagnostic.json").read_text()) == diag


def test_missing_config_exit_2(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == 2


def test_nonconvergence_exit_3(tmp_path, capsys):
    cfg = _config(tmp_path, tol=1e-30, max_iter=1)
    assert main(["solve-quotient", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert json.loads(capsys.readouterr().err.strip())["kind"] == "convergence"


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["ansatz-eval", "--config", _config(tmp_path)]) == 0
    assert (tmp_path / "env" / "ansatz.csv").exists()


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "kornshell", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "sweep" in out.stdout


def test_mesh_policy():
    p = MeshPolicy(base=(32, 32), h_ref=0.2)
    assert p.resolution(0.2) == (32, 32, 2)
    assert p.resolution(0.05) == (46, 46, 2)
    assert p.grading_block(0.0625)["radius"] == 1.0


def test_parse_config_defaults():
    cfg = parse_config({"surface": {"kind": "sphere-cap"}})
    assert cfg.h_list == (0.2, 0.1, 0.05) and cfg.solver.seed > 0
    with pytest.raises(ValidationError):
        parse_config({"surface": {"kind": "sphere-cap"}, "sweep": {"h": [0.1, -0.1]}})

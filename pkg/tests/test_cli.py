import json
import math
import subprocess
import sys

import pytest

from blowup_lab import report
from blowup_lab.cli import main


def run(*argv):
    return main(list(argv))


def test_constants_json(tmp_path):
    assert run("constants", "--n", "2", "--p", "2", "--out", str(tmp_path), "--quiet") == 0
    data = json.loads((tmp_path / "constants_n2_p2.json").read_text())
    assert data["c_tilde_sub"] == pytest.approx(1 / 480, rel=1e-14)
    assert data["remark_sub_bound"] == pytest.approx(230400, rel=1e-12)
    assert data["config"]["n"] == 2 and data["config"]["p"] == 2.0
    assert data["theorem_constants"]["sub"] > 0


def test_constants_critical_has_theorem_constant(tmp_path):
    assert run("constants", "--n", "3", "--p", "2", "--out", str(tmp_path), "--quiet") == 0
    data = json.loads((tmp_path / "constants_n3_p2.json").read_text())
    assert data["theorem_constants"]["crit"] > 0
    assert data["theorem_constants"]["sub"] is None


def test_exit_codes(tmp_path, capsys):
    assert run("constants", "--n", "3", "--p", "1", "--out", str(tmp_path)) == 1  # p must exceed 1
    assert run("nonexistent") == 1
    assert run("ode-blowup", "--variant", "subcritical", "--n", "2", "--A", "-1", "--out", str(tmp_path)) == 1
    # a step budget far too small is a runtime failure
    assert run("ode-blowup", "--variant", "subcritical", "--n", "2", "--max-steps", "5",
               "--out", str(tmp_path), "--quiet") == 2
    # two points cannot be fitted
    csv = tmp_path / "two.csv"
    report.write_csv(csv, ["x", "y"], [{"x": 1, "y": 2}, {"x": 2, "y": 3}])
    assert run("fit", "--input", str(csv), "--x", "x", "--y", "y", "--out", str(tmp_path)) == 2
    err = capsys.readouterr().err
    assert "runtime failure" in err and "invalid input" in err


def test_ode_sweep_deterministic_and_parallel(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    common = ["ode-sweep", "--variant", "subcritical", "--n", "2", "--A", "1,0.5,0.25,0.125", "--quiet"]
    assert run(*common, "--out", str(a), "--workers", "1") == 0
    assert run(*common, "--out", str(b), "--workers", "3") == 0
    for name in ("ode_sweep_subcritical.csv", "ode_sweep_subcritical_fit.json"):
        assert (a / name).read_bytes().replace(b"\"workers\": 1", b"") == \
            (b / name).read_bytes().replace(b"\"workers\": 3", b"")
    text = (a / "ode_sweep_subcritical.csv").read_text()
    assert text.startswith("# schema=1\n")
    assert text.splitlines()[1] == "variant,n,p,A,T0,t_blow,ln_t_blow,status,product"
    fit = json.loads((a / "ode_sweep_subcritical_fit.json").read_text())
    assert fit["fit"]["slope"] == pytest.approx(-2, rel=0.15)


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# ladder\nvariant = subcritical\nn = 3\np = 1.5\nK = 7\n")
    assert run("odi-ladder", "--config", str(cfg), "--K", "5", "--out", str(tmp_path), "--quiet") == 0
    rows = report.read_csv(tmp_path / "ladder_subcritical.csv")
    assert len(rows) == 5
    data = json.loads((tmp_path / "ladder_subcritical.json").read_text())
    assert data["config"]["n"] == 3 and data["config"]["p"] == 1.5 and data["config"]["K"] == 5
    cfg.write_text("bogus = 1\n")
    assert run("odi-ladder", "--config", str(cfg), "--out", str(tmp_path)) == 1


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("BLOWUP_LAB_OUT", str(tmp_path / "env"))
    assert run("constants", "--n", "2", "--p", "1.5", "--quiet") == 0
    assert (tmp_path / "env" / "constants_n2_p1.5.json").exists()


def test_fit_command(tmp_path):
    csv = tmp_path / "pts.csv"
    rows = [{"x": x, "y": math.exp(-2 * math.log(x) + 1), "status": "ok"} for x in (1, 2, 4, 8)]
    rows.append({"x": 16, "y": 1.0, "status": "bad"})
    report.write_csv(csv, ["x", "y", "status"], rows)
    assert run("fit", "--input", str(csv), "--x", "x", "--y", "y", "--logx", "--logy",
               "--where", "status=ok", "--out", str(tmp_path), "--quiet") == 0
    fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
    assert fit["slope"] == pytest.approx(-2, abs=1e-12)
    assert fit["n_points"] == 4


def test_pde_run_with_functional_check(tmp_path):
    assert run("pde-run", "--n", "2", "--p", "2", "--eps", "0.5", "--verify-functional",
               "--save-snapshots", "--out", str(tmp_path), "--quiet") == 0
    res = json.loads((tmp_path / "residuals.json").read_text())
    assert res["ok"] is True
    assert res["min_residual_linear"] >= -res["tol_linear"]
    assert res["min_residual_nonlinear"] >= -res["tol_nonlinear"]
    run_data = json.loads((tmp_path / "pde_run.json").read_text())
    assert run_data["config"]["eps"] == 0.5
    snaps = list(tmp_path.glob("*.npz"))
    assert snaps
    out2 = tmp_path / "again"
    assert run("verify-functional", "--snapshots", str(snaps[0]), "--out", str(out2), "--quiet") == 0
    assert json.loads((out2 / "residuals.json").read_text())["ok"] is True


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "blowup_lab", "constants", "--n", "2", "--p", "2",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "230400" in proc.stdout

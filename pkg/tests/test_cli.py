import csv
import json
import subprocess
import sys

import numpy as np
import pytest

import oracle_values as ov
from ida_buckboost import analysis, cli, energy
from ida_buckboost.model import equilibrium_for

BASE = {
    "plant": {"L": 470e-6, "C": 500e-6, "E": 10.0, "P": 61.25},
    "x2_star": 4.0,
    "k1": 0.01,
    "pd_gains": {"kp": -0.4, "kd": -1.5},
}


def call(tmp_path, command, cfg, *extra):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    code = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    return code, out


def test_gains_report(tmp_path, capsys):
    code, out = call(tmp_path, "gains", BASE)
    assert code == 0
    doc = json.loads((out / "gains.json").read_text())
    assert json.loads(capsys.readouterr().out) == doc
    assert abs(doc["D"] - 0.59384) < 1e-3
    assert abs(doc["x1_star"] - 0.7423) < 1e-3
    assert abs(doc["k1_prime"] - (-0.1205)) < 1e-3
    assert doc["k2"] == pytest.approx(ov.K2_AT_K1_001, rel=1e-13)
    assert doc["pd_cone"]["b1"] == pytest.approx(0.05)
    assert any("0.0588" in n for n in doc["notes"])
    assert doc["pd_gains"]["hurwitz_cone"] and doc["pd_gains"]["hurwitz_eigen"]
    assert list(doc)[:4] == ["D", "x1_star", "x2_star", "u_star"]


def test_gains_unit_cone(tmp_path):
    code, out = call(tmp_path, "gains", {"D": 1.0, "x2_star": 1.0})
    assert code == 0
    cone = json.loads((out / "gains.json").read_text())["pd_cone"]
    assert (cone["m1"], cone["b1"], cone["m2"], cone["b2"]) == (1.0, 0.5, 1.0, 0.25)


@pytest.mark.parametrize("cfg", [
    {**BASE, "k1 ": 0.01},
    {**BASE, "plant": {**BASE["plant"], "R": 1.0}},
    {k: v for k, v in BASE.items() if k != "x2_star"},
    {**BASE, "D": 0.5},
    {"x2_star": 4.0},
    {**BASE, "scenarios": [{"name": "a", "controller": {"kind": "ida", "gain": 1},
                            "initial_state": [0.4, 3.9], "duration": 1}]},
    {**BASE, "x2_star": -4.0},
])
def test_schema_rejects(tmp_path, capsys, cfg):
    code, out = call(tmp_path, "gains", cfg)
    assert code == 2
    assert "schema" in capsys.readouterr().err
    assert not out.exists()


def test_unreadable_config(tmp_path, capsys):
    (tmp_path / "bad.json").write_text("{not json")
    assert cli.main(["gains", "--config", str(tmp_path / "bad.json")]) == 2
    assert cli.main(["gains", "--config", str(tmp_path / "missing.json")]) == 2


def test_k1_below_bound_is_config_error(tmp_path, capsys):
    cfg = {**BASE, "k1": -0.05, "scenarios": [
        {"name": "a", "controller": {"kind": "ida"}, "initial_state": [0.4, 3.9], "duration": 1}]}
    assert call(tmp_path, "simulate", cfg)[0] == 2
    assert "PreconditionError" in capsys.readouterr().err


def scenario(**kw):
    sc = {"name": "run", "controller": {"kind": "ida"}, "initial_state": [0.4, 3.9], "duration": 0.5, "step": 1e-3}
    sc.update(kw)
    return {**BASE, "scenarios": [sc]}


def test_simulate_writes_csv(tmp_path):
    code, out = call(tmp_path, "simulate", scenario(), "--physical")
    assert code == 0
    rows = list(csv.reader((out / "run.csv").open()))
    assert rows[0] == ["tau", "x1", "x2", "u_applied", "u_raw", "d_true", "d_hat", "h_d", "saturated"]
    assert len(rows) == 502
    phys = list(csv.reader((out / "run_physical.csv").open()))
    assert phys[0][:3] == ["t", "i", "v"] and len(phys) == 502


def test_simulate_deterministic(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    _, a = call(tmp_path / "a", "simulate", scenario())
    _, b = call(tmp_path / "b", "simulate", scenario())
    assert (a / "run.csv").read_bytes() == (b / "run.csv").read_bytes()


def test_zero_duration_header_only(tmp_path):
    code, out = call(tmp_path, "simulate", scenario(duration=0))
    assert code == 0
    assert (out / "run.csv").read_text() == "tau,x1,x2,u_applied,u_raw,d_true,d_hat,h_d,saturated\n"


def test_numerical_event_exit_code(tmp_path):
    cfg = scenario(controller={"kind": "pd"}, initial_state=[0.5, 3.5], duration=15, step=1e-2)
    code, out = call(tmp_path, "simulate", cfg)
    assert code == 3
    lines = (out / "run.csv").read_text().splitlines()
    assert lines[-1].startswith("# event: singularity") and len(lines) > 100


def test_physical_needs_plant(tmp_path):
    cfg = scenario()
    del cfg["plant"]
    cfg["D"] = 0.59
    assert call(tmp_path, "simulate", cfg, "--physical")[0] == 2


def test_adaptive_scenario(tmp_path):
    D = ov.D
    cfg = scenario(controller={"kind": "adaptive_ida"}, initial_state=[0.7423, 4.0], duration=4, step=1e-2,
                   gamma=2.0, d_hat_init=0.3, d_schedule=[[0, D], [2, 2 * D]])
    code, out = call(tmp_path, "simulate", cfg)
    assert code == 0
    rows = list(csv.reader((out / "run.csv").open()))
    assert float(rows[1][6]) == pytest.approx(0.3)
    assert float(rows[-1][5]) == pytest.approx(2 * D)


def test_phase_open_loop_equivalence(tmp_path):
    cfg = {**BASE, "phase": {"controller": {"kind": "pd", "kp": 0.0, "kd": 0.0},
                             "grid": {"x1": [0.2, 2.0], "x2": [1.0, 7.0], "n": [7, 7]}, "grid_resolution": 120}}
    code, out = call(tmp_path, "phase", cfg)
    assert code == 0
    D = ov.D
    u = 0.8
    for r in csv.DictReader((out / "phase_grid.csv").open()):
        x1, x2 = float(r["x1"]), float(r["x2"])
        assert float(r["u_applied"]) == pytest.approx(u)
        assert float(r["dx1"]) == pytest.approx(-(1 - u) * x2 + u, abs=1e-11)
        assert float(r["dx2"]) == pytest.approx((1 - u) * x1 - D / x2, abs=1e-11)


def test_phase_contours_and_saddle(tmp_path):
    cfg = {**BASE, "phase": {"grid": {"x1": [0.05, 1.5], "x2": [0.5, 6.0], "n": [10, 10]},
                             "initial_states": [[0.4, 3.9]], "duration": 2, "step": 1e-2,
                             "level_fractions": [0.25, 0.5, 0.75], "grid_resolution": 200}}
    code, out = call(tmp_path, "phase", cfg)
    assert code == 0
    summary = json.loads((out / "phase_summary.json").read_text())
    assert len(summary["levels"]) == 4
    assert all(lv["closed"] and lv["inside_quadrant"] for lv in summary["levels"])
    rows = list(csv.DictReader((out / "phase_contours.csv").open()))
    for idx in range(3):
        pts = np.array([(float(r["x1"]), float(r["x2"])) for r in rows if r["level"] == str(idx)])
        assert np.all(pts > 0) and np.allclose(pts[0], pts[-1])
    eq = equilibrium_for(4.0, ov.D)
    saddle = analysis.find_saddle(ov.D, 0.01, energy.compute_k2(eq, ov.D, 0.01), eq=eq)
    np.testing.assert_allclose(summary["saddle"], saddle.x, atol=1e-10)
    traj = list(csv.DictReader((out / "phase_trajectories.csv").open()))
    assert len(traj) == 201


def test_verify_passes(tmp_path):
    code, out = call(tmp_path, "verify", BASE, "--samples", "300", "--seed", "3")
    assert code == 0
    doc = json.loads((out / "verify.json").read_text())
    assert doc["passed"] and doc["samples"] == 300 and doc["seed"] == 3
    by_name = {p["name"]: p for p in doc["properties"]}
    assert by_name["pde_residual"]["worst_error"] < 1e-8
    assert by_name["printed_closed_form"]["informational"]


def test_verify_catches_corrupted_k2(tmp_path):
    cfg = {**BASE, "k2": ov.K2_AT_K1_001 + 0.1}
    code, out = call(tmp_path, "verify", cfg, "--samples", "100")
    assert code == 1
    doc = json.loads((out / "verify.json").read_text())
    failed = {p["name"] for p in doc["properties"] if not p["passed"] and not p["informational"]}
    assert "gradient_at_equilibrium" in failed


def test_zerodyn(tmp_path):
    code, out = call(tmp_path, "zerodyn", BASE)
    assert code == 0
    doc = json.loads((out / "zerodyn.json").read_text())
    assert doc["current_fixed"]["unstable"] and doc["voltage_fixed"]["unstable"]
    assert doc["current_fixed"]["slope_rel_error"] < 1e-6
    assert doc["voltage_fixed_printed"]["matches_derivation"] is False
    assert len(list(csv.reader((out / "zerodyn_current.csv").open()))) == 51


def test_region(tmp_path):
    cfg = {**BASE, "region": {"grid_resolution": 200}}
    code, out = call(tmp_path, "region", cfg)
    assert code == 0
    doc = json.loads((out / "region.json").read_text())
    assert doc["c_star"] < doc["h_at_saddle"]
    assert doc["limiting_constraint"] in ("saddle_level", "orthant_boundary")
    assert doc["contour_inside_quadrant"]


def test_bad_flags(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(BASE))
    assert cli.main(["verify", "--config", str(path), "--samples", "0"]) == 2
    with pytest.raises(SystemExit):
        cli.main(["gains"])


def test_module_entry_point(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(BASE))
    res = subprocess.run([sys.executable, "-m", "ida_buckboost", "gains", "--config", str(path),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["u_star"] == pytest.approx(0.8)

import csv
import json
import subprocess
import sys

import pytest

from dropevap import cli
from dropevap.timeloop import InvariantViolation

SMALL = {"grid": {"n_theta": 8, "n_r": 16}, "solver": {"dt_s": 1.0, "t_end_s": 5}}


def _cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2))
    return str(p)


def test_simulate_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    rc = cli.main(["simulate", "--config", _cfg(tmp_path, SMALL), "--out", str(out), "--snapshots", "5"])
    assert rc == cli.EXIT_OK
    rows = list(csv.reader((out / "radius.csv").open()))
    assert rows[0] == cli.RADIUS_HEADER and len(rows) == 7
    snap = list(csv.reader((out / "fields_5.csv").open()))
    assert snap[0] == cli.FIELD_HEADER and len(snap) == 1 + 8 * 16
    assert (out / "fields_0.csv").exists()
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["result"]["steps"] == 5 and meta["audit"]["box_checks"] == 6
    assert meta["kernel_backend"] in ("numba", "numpy")
    assert "steps=5" in capsys.readouterr().out


def test_simulate_is_byte_deterministic(tmp_path):
    cfg = _cfg(tmp_path, SMALL)
    for d in ("a", "b"):
        assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / d), "--seedless"]) == 0
    assert (tmp_path / "a" / "radius.csv").read_bytes() == (tmp_path / "b" / "radius.csv").read_bytes()
    metas = [json.loads((tmp_path / d / "run_meta.json").read_text()) for d in ("a", "b")]
    for m in metas:
        m["config"]["output"].pop("dir")  # the only intended difference
    assert metas[0] == metas[1] and metas[0]["rng"] == "none"


def test_run_meta_reloads_as_config(tmp_path):
    assert cli.main(["simulate", "--config", _cfg(tmp_path, SMALL), "--out", str(tmp_path / "a")]) == 0
    rc = cli.main(["simulate", "--config", str(tmp_path / "a" / "run_meta.json"),
                   "--out", str(tmp_path / "b")])
    assert rc == 0
    assert (tmp_path / "a" / "radius.csv").read_bytes() == (tmp_path / "b" / "radius.csv").read_bytes()


def test_saturated_air_radius_constant(tmp_path):
    doc = dict(SMALL, drying={"T_inf_C": 60.0, "RH_inf": 1.0})
    assert cli.main(["simulate", "--config", _cfg(tmp_path, doc), "--out", str(tmp_path / "s")]) == 0
    with (tmp_path / "s" / "radius.csv").open() as fh:
        vals = [float(r["R2_norm"]) for r in csv.DictReader(fh)]
    assert all(abs(v - 1.0) <= 1e-12 for v in vals)


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "solver": {\n    "dt_s": -1\n  }\n}\n')
    assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "x")]) == cli.EXIT_CONFIG
    assert f"{p}:3:" in capsys.readouterr().err


def test_solver_failure_exit_code(tmp_path):
    doc = {"grid": {"n_theta": 8, "n_r": 16},
           "solver": {"t_end_s": 2, "newton_max": 1, "newton_tol": 1e-15}}
    rc = cli.main(["simulate", "--config", _cfg(tmp_path, doc), "--out", str(tmp_path / "x")])
    assert rc == cli.EXIT_SOLVER


def test_invariant_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise InvariantViolation("forced")

    monkeypatch.setattr(cli, "run", boom)
    rc = cli.main(["simulate", "--config", _cfg(tmp_path, SMALL), "--out", str(tmp_path / "x")])
    assert rc == cli.EXIT_INVARIANT


def test_verify_subset(capsys):
    assert cli.main(["verify", "--only", "geometry.partition", "--only",
                     "flowfields.mutation_detected"]) == 0
    out = capsys.readouterr().out
    assert "PASS geometry.partition" in out and "PASS 2 checks" in out


def test_convergence_without_d2(tmp_path, capsys):
    assert cli.main(["convergence", "--levels", "3", "--no-d2", "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "convergence.json").read_text())
    orders = [r["order"] for r in res["harmonic"][1:]]
    assert len(orders) == 2 and min(orders) >= 1.9


def test_sweep_small(tmp_path):
    doc = {"base": {"grid": {"n_theta": 8, "n_r": 16}, "solver": {"dt_s": 2.0}},
           "members": [{"label": "stagnant", "flow": {"kind": "stagnant"}},
                       {"label": "stokes_80", "flow": {"kind": "stokes", "V_inf_m_per_s": 0.8}}]}
    rc = cli.main(["sweep", "--config", _cfg(tmp_path, doc), "--out", str(tmp_path / "sw"),
                   "--jobs", "2"])
    assert rc == 0
    rows = list(csv.DictReader((tmp_path / "sw" / "sweep.csv").open()))
    assert [r["label"] for r in rows] == ["stagnant", "stokes_80"]
    assert float(rows[0]["lifetime_ratio_vs_stagnant"]) == 1.0
    assert 0.4 <= float(rows[1]["lifetime_ratio_vs_stagnant"]) <= 0.7
    rep = json.loads((tmp_path / "sw" / "sweep_report.json").read_text())
    assert all(m["error"] is None for m in rep["members"])


def test_sweep_orderings_detect_violation():
    rows = [{"flow": "stagnant", "param": 0.0, "lifetime_s": 100.0},
            {"flow": "stokes", "param": 0.4, "lifetime_s": 120.0},
            {"flow": "stokes", "param": 0.8, "lifetime_s": 60.0},
            {"flow": "acoustic", "param": 166.0, "lifetime_s": 90.0}]
    checks = {c["check"]: c["passed"] for c in cli.sweep_orderings(rows)}
    assert list(checks.values()) == [False, True, False]


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "dropevap", "simulate", "--config",
                        _cfg(tmp_path, {"solver": {"dt_s": 0}}), "--out", str(tmp_path / "x")],
                       capture_output=True, text=True)
    assert r.returncode == 1 and "dt_s" in r.stderr
    r = subprocess.run([sys.executable, "-m", "dropevap", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout

import csv
import json

import numpy as np
import pytest

from junction_hj import ConvergenceError, ScenarioError
from junction_hj.cli import run
from junction_hj.hopf_lax import _threads
from junction_hj.scenario import load_scenario, scenario_from_dict

T2_SYM = {"branches": [{"lagrangian": {"type": "quadratic", "a": 0.25, "b": -1, "c": 0}},
                       {"lagrangian": {"type": "quadratic", "a": 0.25, "b": 1, "c": 0}}]}
T2_ASYM = {"branches": [{"lagrangian": {"type": "quadratic", "a": 0.25, "b": -1, "c": 0}},
                        {"lagrangian": {"type": "quadratic", "a": 0.5, "b": 1, "c": 0}}]}
RIEMANN = {
    "traffic": {"incoming": [{"vmax": 1, "rhomax": 1, "gamma": 1}], "outgoing": [{"vmax": 1, "rhomax": 1, "gamma": 1}]},
    "initial": {"type": "riemann", "params": {"densities": [0.3, 0.9]}},
    "grid": {"t": [0, 1, 11], "x_per_branch": [2, 41]},
}


@pytest.fixture
def write(tmp_path):
    def _write(doc, name="scenario.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    return _write


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_action(write, capsys):
    code = run(["action", "--scenario", write(T2_SYM), "--from", "1:0.5", "--to", "2:0.5", "--t0", "0", "--t1", "1"])
    assert code == 0
    assert json.loads(capsys.readouterr().out) == {"value": 0.0, "regime": "implicit", "tau1": 0.5, "tau2": 0.5}


def test_action_straight_has_null_times(write, capsys):
    assert run(["action", "--scenario", write(T2_ASYM), "--from", "2:0.2", "--to", "2:0.2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["value"] == pytest.approx(0.5) and out["regime"] == "straight" and out["tau1"] is None


def test_solve_csv(write, tmp_path):
    doc = dict(T2_ASYM, initial={"type": "linear_per_branch", "slopes": [0.3, -0.5]},
               grid={"t": [0, 1, 3], "x_per_branch": [1, 4]})
    out = tmp_path / "u.csv"
    assert run(["solve", "--scenario", write(doc), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["t", "branch", "x", "u"]
    keys = [(float(t), int(b), float(x)) for t, b, x, _ in rows[1:]]
    assert keys == sorted(keys) and len(keys) == 3 * 2 * 4
    first = out.read_bytes()
    assert run(["solve", "--scenario", write(doc), "--out", str(out), "--threads", "3"]) == 0
    assert out.read_bytes() == first


def test_traffic_csv(write, tmp_path):
    out = tmp_path / "rho.csv"
    assert run(["traffic", "--scenario", write(RIEMANN), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["t", "road", "X", "rho"]
    flux = read_csv(tmp_path / "rho_flux.csv")
    assert flux[0] == ["t", "junction_flux"]
    late = [(float(t), float(v)) for t, v in flux[1:] if float(t) >= 0.2]
    assert late and all(abs(v - 0.09) < 1e-6 for _, v in late)


def test_traffic_needs_traffic(write, tmp_path):
    assert run(["traffic", "--scenario", write(T2_SYM), "--out", str(tmp_path / "x.csv")]) == 3


def test_verify_t2_asym(write, capsys):
    assert run(["verify", "--scenario", write(T2_ASYM)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "suites passed" in out


def test_verify_reports_failure(write, capsys):
    assert run(["verify", "--scenario", write(T2_ASYM), "--suite", "pde", "--pde-tol", "0"]) == 1
    assert "[FAIL] pde" in capsys.readouterr().out


def test_verify_flux_suite(write, capsys):
    assert run(["verify", "--scenario", write(RIEMANN), "--suite", "flux", "--suite", "conjugation"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] flux" in out and "[PASS] conjugation" in out


def test_oracle_commands(write, tmp_path, capsys):
    path = write(T2_SYM)
    assert run(["oracle", "action", "--scenario", path, "--from", "1:0.5", "--to", "2:0.5", "--n-tau", "401"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.0, abs=1e-6)
    doc = dict(T2_SYM, grid={"t": [0, 1, 2], "x_per_branch": [1, 3]})
    out = tmp_path / "o.csv"
    args = ["oracle", "solve", "--scenario", write(doc), "--out", str(out), "--n-tau", "201", "--n-y", "201", "--radius", "4"]
    assert run(args) == 0
    assert all(abs(float(r[3])) < 1e-6 for r in read_csv(out)[1:])


def test_exit_codes(write, tmp_path, monkeypatch):
    assert run(["action", "--bogus"]) == 2
    assert run(["nope"]) == 2
    assert run(["action", "--scenario", write(T2_SYM), "--from", "1.5", "--to", "2:0.5"]) == 2
    assert run(["action", "--scenario", write(T2_SYM), "--from", "3:0.5", "--to", "2:0.5"]) == 3
    assert run(["action", "--scenario", str(tmp_path / "missing.json"), "--from", "1:1", "--to", "2:1"]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["solve", "--scenario", str(bad), "--out", str(tmp_path / "x.csv")]) == 3

    def boom(*a, **k):
        raise ConvergenceError("no bracket")

    monkeypatch.setattr("junction_hj.cli.solve_grid", boom)
    assert run(["solve", "--scenario", write(T2_SYM), "--out", str(tmp_path / "x.csv")]) == 4


def test_scenario_error_names_invariant(write, capsys):
    doc = {"traffic": {"incoming": [{"vmax": 1, "rhomax": 1, "gamma": 0.6}], "outgoing": [{"gamma": 1}]}}
    assert run(["solve", "--scenario", write(doc), "--out", "x.csv"]) == 3
    assert "turning fractions sum" in capsys.readouterr().err


@pytest.mark.parametrize(
    "doc, message",
    [
        ({}, "exactly one"),
        (dict(T2_SYM, traffic={}), "exactly one"),
        ({"branches": []}, "non-empty"),
        ({"branches": [{"lagrangian": {"type": "cubic", "a": 1}}]}, "unsupported"),
        ({"branches": [{"lagrangian": {"b": 1}}]}, "missing 'a'"),
        ({"branches": [{"lagrangian": {"a": -1}}]}, "a > 0"),
        (dict(T2_SYM, grid={"t": [0, 1, 1], "x_per_branch": [1, 5]}), ">= 2"),
        (dict(T2_SYM, grid={"t": [0, 1, 5], "x_per_branch": [1, 1]}), ">= 2"),
        (dict(T2_SYM, grid={"t": [1, 0, 5], "x_per_branch": [1, 5]}), "t0 < t1"),
        (dict(T2_SYM, initial={"type": "riemann", "densities": [0.1, 0.2]}), "traffic"),
        (dict(T2_SYM, initial={"type": "linear_per_branch", "slopes": [1]}), "2 slopes"),
        (dict(T2_SYM, initial={"type": "wavy"}), "unknown type"),
        (dict(RIEMANN, initial={"type": "riemann", "densities": [0.3]}), "densities"),
    ],
)
def test_scenario_validation(doc, message):
    with pytest.raises(ScenarioError, match=message):
        scenario_from_dict(doc)


def test_scenario_defaults(write):
    sc = load_scenario(write(T2_ASYM))
    assert sc.traffic is None and sc.densities is None
    assert sc.times[0] == 0.0 and sc.times.size >= 2 and len(sc.coords) == 2
    assert sc.datum.values(1, [1.0])[0] == 0.0
    sc = load_scenario(write(RIEMANN))
    assert sc.densities == (0.3, 0.9) and sc.traffic.m == 1
    np.testing.assert_allclose(sc.coords[0], np.linspace(0.0, 2.0, 41))


def test_thread_env(monkeypatch):
    monkeypatch.setenv("JUNCTION_HJ_THREADS", "3")
    assert _threads() == 3
    monkeypatch.setenv("JUNCTION_HJ_THREADS", "0")
    assert _threads() >= 1
    monkeypatch.setenv("JUNCTION_HJ_THREADS", "many")
    assert _threads() >= 1


@pytest.mark.parametrize("name", ["t2_sym", "t2_asym", "riemann"])
def test_shipped_scenarios_load(name):
    from pathlib import Path

    sc = load_scenario(Path(__file__).parents[1] / "scenarios" / f"{name}.json")
    assert sc.junction.n == 2 and sc.name == name

"""Command-line front end: configs, reports, traces, exit codes."""

import csv
import json
import subprocess
import sys

import numpy as np
import numpy.testing as npt
import pytest

from lti2mpc.cli import main, parse_config, build_problem, ConfigError
from lti2mpc.models import pendulum_controller, pendulum_plant
from lti2mpc.realisation import search_realisations
from lti2mpc.statespace import add_dipole
from lti2mpc.models import satellite_controller, satellite_plant


def _write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_builtin_satellite_realise_report(tmp_path):
    cfg = _write(tmp_path, "sat.json", {"plant": "satellite"})
    out = tmp_path / "report.json"
    assert main(["realise", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["feasible"] == 4
    assert rep["form"] == "filter"
    rows = rep["realisations"]
    assert rows[0]["S"] == [0, 4, 5]
    assert rows[0]["rank"] == 1
    npt.assert_allclose(rows[0]["h2_noise"], 0.6308, rtol=2e-3)
    npt.assert_allclose(rows[0]["margins"]["gain"], 2.012, rtol=2e-3)
    # every row carries the gains and the report is valid JSON throughout
    for row in rows:
        assert np.asarray(row["K_f"]).shape == (3, 1)
        assert np.asarray(row["K_c"]).shape == (2, 3)
        assert row["riccati_residual"] < 1e-8


def test_builtin_pendulum_realise_report(tmp_path):
    cfg = _write(tmp_path, "pend.json", {"plant": "pendulum"})
    out = tmp_path / "report.json"
    assert main(["realise", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["feasible"] == 3
    assert rep["form"] == "predictor"
    assert rep["rank_by"] == "noise"
    assert rep["realisations"][0]["S"] == [2, 3, 4, 5]


def test_realise_rejects_an_unstabilising_controller(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.json", {
        "plant": {"kind": "discrete", "A": [[1.1]], "B": [[1.0]],
                  "C": [[1.0]], "D": [[0.0]], "Ts": 1.0},
        "controller": {"kind": "discrete", "A": [[0.0]], "B": [[1.0]],
                       "C": [[0.0]], "D": [[0.0]], "Ts": 1.0},
    })
    assert main(["realise", "--config", cfg]) == 1
    assert "unstable" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path, capsys):
    # missing file
    assert main(["realise", "--config", str(tmp_path / "nope.json")]) == 2
    # invalid JSON
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["realise", "--config", str(bad)]) == 2
    # unknown top-level key
    cfg = _write(tmp_path, "k.json", {"plant": "satellite", "plnat": 1})
    assert main(["realise", "--config", cfg]) == 2
    # dimension mismatch inside a matrix system
    cfg = _write(tmp_path, "dims.json", {
        "plant": {"kind": "discrete", "A": [[1.0, 0.0]], "B": [[1.0]],
                  "C": [[1.0]], "D": [[0.0]], "Ts": 1.0}})
    assert main(["realise", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert "config error" in err


def test_simulate_writes_trace_and_summary(tmp_path):
    cfg = _write(tmp_path, "sat.json", {
        "plant": "satellite",
        "scenarios": {"short": {"base": "satellite-case-2", "duration": 5.0}},
    })
    out = tmp_path / "trace.csv"
    assert main(["simulate", "--config", cfg, "--scenario", "short",
                 "--out", str(out)]) == 0
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:4] == ["t", "y.0", "u.0", "u.1"]
    assert len(rows) == 21  # 5 s at Ts = 0.25 plus the header
    summary = json.loads((tmp_path / "trace.summary.json").read_text())
    assert summary["scenario"] == "short"
    assert summary["steps"] == 20
    assert summary["max_constraint_violation"]["input"] <= 1e-7
    assert "mean_iterations" in summary["qp"]
    assert summary["tracking_rms_vs_baseline"] is not None


def test_simulate_unknown_scenario_is_a_domain_error(tmp_path, capsys):
    cfg = _write(tmp_path, "sat.json", {"plant": "satellite"})
    out = tmp_path / "t.csv"
    assert main(["simulate", "--config", cfg, "--scenario", "nope",
                 "--out", str(out)]) == 1
    assert "unknown scenario" in capsys.readouterr().err


def test_simulate_zero_duration_writes_header_only(tmp_path):
    cfg = _write(tmp_path, "sat.json", {
        "plant": "satellite",
        "scenarios": {"empty": {"base": "satellite-case-1", "duration": 0.0}},
    })
    out = tmp_path / "empty.csv"
    assert main(["simulate", "--config", cfg, "--scenario", "empty",
                 "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("t,y.0,")


def test_seed_flag_controls_noise_reproducibility(tmp_path):
    cfg = _write(tmp_path, "sat.json", {
        "plant": "satellite",
        "scenarios": {"noisy": {"base": "satellite-case-1", "duration": 5.0,
                                "noise_sigma": [1e-5]}},
    })
    outs = []
    for tag, seed in (("a", "7"), ("b", "7"), ("c", "8")):
        out = tmp_path / f"{tag}.csv"
        assert main(["simulate", "--config", cfg, "--scenario", "noisy",
                     "--out", str(out), "--seed", seed]) == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]


def test_verify_passes_the_builtin_realisations(tmp_path, capsys):
    cfg = _write(tmp_path, "sat.json", {"plant": "satellite"})
    assert main(["verify", "--config", cfg]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l]
    assert len(lines) == 4
    assert all(l.startswith("PASS") for l in lines)
    assert all("equivalence residual" in l for l in lines)


def test_verify_flags_perturbed_gains(tmp_path, capsys):
    G = satellite_plant()
    K1 = add_dipole(satellite_controller(), W=50.0)
    real = search_realisations(G, K1, form="filter").ranked[0][0]
    cfg = _write(tmp_path, "sat.json", {
        "plant": "satellite",
        "verify_gains": {"form": "filter",
                         "K_c": real.K_c.tolist(),
                         "K_f": (1.01 * real.K_f).tolist(),
                         "T": real.T.tolist()},
    })
    out = tmp_path / "verify.json"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 1
    printed = capsys.readouterr().out
    assert "FAIL" in printed
    assert "equivalence residual" in printed
    rep = json.loads(out.read_text())
    assert rep["passed"] is False


def test_discretise_builtin_pendulum_matches_the_bundled_models(tmp_path):
    cfg = _write(tmp_path, "pend.json", {"plant": "pendulum"})
    out = tmp_path / "disc.json"
    assert main(["discretise", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    K = pendulum_controller()
    G = pendulum_plant()
    assert rep["controller"]["method"] == "tustin"
    npt.assert_allclose(rep["controller"]["A"], K.A, atol=1e-14)
    npt.assert_allclose(rep["controller"]["D"], K.D, atol=1e-14)
    assert rep["plant"]["method"] == "zoh"
    npt.assert_allclose(rep["plant"]["A"], G.A, atol=1e-14)
    assert rep["plant"]["Ts"] == 0.1


def test_report_config_echo_round_trips_to_identical_numerics(tmp_path):
    raw = {
        "plant": {"kind": "discrete", "A": [[0.5, 0.1], [0.0, 0.4]],
                  "B": [[0.0], [1.0]], "C": [[1.0, 0.0]], "D": [[0.0]],
                  "Ts": 0.5},
        "controller": {"kind": "discrete", "A": [[0.3]], "B": [[0.2]],
                       "C": [[0.1]], "D": [[0.0]], "Ts": 0.5},
        "pipeline": {"form": "predictor", "loop_shift": True},
    }
    cfg_path = _write(tmp_path, "c.json", raw)
    out = tmp_path / "rep.json"
    assert main(["realise", "--config", cfg_path, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    echo = parse_config(rep["config"])
    orig = parse_config(raw)
    for a, b in zip(build_problem(echo), build_problem(orig)):
        npt.assert_array_equal(a.A, b.A)
        npt.assert_array_equal(a.B, b.B)
        npt.assert_array_equal(a.C, b.C)
        npt.assert_array_equal(a.D, b.D)
        assert a.Ts == b.Ts


def test_custom_scenario_runs_the_config_systems(tmp_path):
    cfg = _write(tmp_path, "c.json", {
        "plant": {"kind": "discrete", "A": [[0.5, 0.1], [0.0, 0.4]],
                  "B": [[0.0], [1.0]], "C": [[1.0, 0.0]], "D": [[0.0]],
                  "Ts": 0.5},
        "controller": {"kind": "discrete", "A": [[0.3]], "B": [[0.2]],
                       "C": [[0.1]], "D": [[0.0]], "Ts": 0.5},
        "pipeline": {"form": "predictor", "loop_shift": True},
        "mpc": {"N": 5, "u_bounds": [[-2.0], [2.0]]},
        "scenarios": {"mine": {"duration": 10.0, "x0": [1.0, 0.0]}},
    })
    out = tmp_path / "mine.csv"
    assert main(["simulate", "--config", cfg, "--scenario", "mine",
                 "--out", str(out)]) == 0
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "y.0", "u.0", "x.0", "x.1", "xhat.0", "xhat.1",
                       "qp.status", "qp.obj", "qp.nact"]
    assert len(rows) == 21
    # the regulation loop from x0 = 1 decays
    assert abs(float(rows[-1][1])) < abs(float(rows[1][1]))


def test_parse_config_validates_before_numerics():
    with pytest.raises(ConfigError):
        parse_config({"plant": "saturn"})
    with pytest.raises(ConfigError):
        parse_config({"plant": "satellite", "pipeline": {"form": "smoother"}})
    with pytest.raises(ConfigError):
        parse_config({"plant": "satellite", "mpc": {"horizon": 5}})
    with pytest.raises(ConfigError):
        parse_config([1, 2, 3])


def test_console_entry_point_runs(tmp_path):
    cfg = _write(tmp_path, "sat.json", {"plant": "satellite"})
    proc = subprocess.run(
        [sys.executable, "-m", "lti2mpc.cli", "realise", "--config", cfg],
        capture_output=True, text=True)
    assert proc.returncode == 0
    rep = json.loads(proc.stdout)
    assert rep["feasible"] == 4

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from tdqmc.config import SimConfig, config_echo, config_from_dict, load_config
from tdqmc.experiments import (RunReport, write_density_csv, write_dipole_csv,
                               write_energy_csv)


def test_defaults_build():
    cfg = SimConfig()
    assert cfg.grid.n == 401
    assert math.isinf(cfg.beta)
    assert cfg.bath.enabled is False


def test_config_from_dict_round_trip():
    cfg = config_from_dict({
        "seed": 42, "walkers": 10, "beta": 10.0,
        "grid": {"x_min": -8.0, "x_max": 8.0, "n": 201},
        "bath": {"enabled": True, "L": 16, "coupling_scale": 0.1},
        "time": {"n_prep_steps": 50},
        "species": [{"mass": 1.0, "potential": "soft_coulomb"}],
    })
    assert cfg.seed == 42
    assert cfg.bath.L == 16
    assert cfg.time.n_prep_steps == 50
    assert cfg.time.dt_imag == 0.01          # untouched default
    echo = config_echo(cfg)
    assert echo["bath"]["L"] == 16


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown top-level"):
        config_from_dict({"walkerz": 10})
    with pytest.raises(ValueError, match="bath"):
        config_from_dict({"bath": {"enabled": True, "n_osc": 3}})
    with pytest.raises(ValueError, match="species"):
        config_from_dict({"species": [{"weight": 2.0}]})


def test_beta_inf_spellings():
    for spelling in ("inf", ".inf", None):
        assert math.isinf(config_from_dict({"beta": spelling}).beta)
    assert config_from_dict({"beta": 12.5}).beta == 12.5
    with pytest.raises(ValueError):
        config_from_dict({"beta": -3})


def test_yaml_load(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("seed: 9\nbeta: .inf\ntime: {n_prep_steps: 7}\n")
    cfg = load_config(path)
    assert cfg.seed == 9 and math.isinf(cfg.beta)
    assert cfg.time.n_prep_steps == 7


def test_csv_headers_and_columns(tmp_path):
    rep = RunReport(seed=1, config={},
                    energy_trace=np.array([1.0, 2.0]),
                    tau_trace=np.array([0.01, 0.02]))
    p1 = tmp_path / "energy_trace.csv"
    write_energy_csv(p1, rep)
    lines = p1.read_text().strip().splitlines()
    assert lines[0] == "step,tau,E"
    assert lines[1].startswith("1,")

    p2 = tmp_path / "density.csv"
    write_density_csv(p2, np.array([0.0, 0.1]), np.array([1.0, 2.0]),
                      np.array([1.5, 2.5]))
    assert p2.read_text().splitlines()[0] == "x,rho_tdqmc,rho_oracle"

    p3 = tmp_path / "dipole.csv"
    write_dipole_csv(p3, np.array([0.0]), np.array([0.1]), np.array([0.1]))
    assert p3.read_text().splitlines()[0] == "t,x_mean,envelope"


def _run_cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "tdqmc.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


def test_cli_spectrum(tmp_path):
    out = tmp_path / "spec_out"
    res = _run_cli(["spectrum", "--out", str(out)], tmp_path)
    assert res.returncode == 0, res.stderr
    lines = (out / "spectrum.csv").read_text().strip().splitlines()
    assert lines[0] == "n,E"
    levels = [float(l.split(",")[1]) for l in lines[1:]]
    assert levels[0] == pytest.approx(-0.669, abs=2e-3)
    report = json.loads((out / "report.json").read_text())
    assert "levels_1e" in report["extras"]


def test_cli_prepare_with_config_and_seed_override(tmp_path):
    cfgfile = tmp_path / "t.yaml"
    cfgfile.write_text(
        "walkers: 6\nbeta: .inf\n"
        "time: {n_prep_steps: 150, n_thermal_steps: 0}\n")
    out = tmp_path / "prep_out"
    res = _run_cli(["prepare", "--config", str(cfgfile), "--out", str(out),
                    "--seed", "123"], tmp_path)
    assert res.returncode == 0, res.stderr
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 123
    lines = (out / "energy_trace.csv").read_text().strip().splitlines()
    assert lines[0] == "step,tau,E" and len(lines) == 151
    assert (out / "density.csv").exists()


def test_cli_dynamics_small(tmp_path):
    cfgfile = tmp_path / "d.yaml"
    cfgfile.write_text(
        "walkers: 4\n"
        "time: {n_prep_steps: 80, n_thermal_steps: 0, n_real_steps: 60}\n")
    out = tmp_path / "dyn_out"
    res = _run_cli(["dynamics", "--config", str(cfgfile), "--out", str(out)],
                   tmp_path)
    assert res.returncode == 0, res.stderr
    lines = (out / "dipole.csv").read_text().strip().splitlines()
    assert lines[0] == "t,x_mean,envelope" and len(lines) == 61


def test_cli_rejects_bad_config(tmp_path):
    cfgfile = tmp_path / "bad.yaml"
    cfgfile.write_text("walkers: 4\nnot_a_key: 1\n")
    res = _run_cli(["prepare", "--config", str(cfgfile), "--out",
                    str(tmp_path / "x")], tmp_path)
    assert res.returncode != 0
    assert "not_a_key" in res.stderr

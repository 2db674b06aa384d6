import json
import math

import numpy as np
import pytest

from flatflow import shapes
from flatflow.cli import main
from flatflow.experiments import (RunConfig, growth_exponent, initial_set, long_time_report, neck_metric,
                                  run_scenario, stationary_centers)
from flatflow.flow import ForcingSpec, Trajectory
from flatflow.geometry import GridSpec
from flatflow.io import read_mask, write_mask


def test_run_config_defaults_and_validation():
    cfg = RunConfig.default("stationary_disks")
    assert cfg.params["distance"] == 2.5 and cfg.n == 512
    d = cfg.to_dict()
    assert RunConfig.from_dict(json.loads(json.dumps(d))) == cfg
    with pytest.raises(ValueError):
        RunConfig.default("nonsense")
    with pytest.raises(ValueError):
        RunConfig.default("stationary_disks", h=-1.0)
    with pytest.raises(ValueError):
        RunConfig("custom", params={})


def test_stationary_centers_are_equidistant():
    c = stationary_centers(3, 2.5)
    d = np.hypot(*(c[:, None, :] - c[None, :, :]).transpose(2, 0, 1))
    assert np.allclose(d[np.triu_indices(3, 1)], 2.5)


def test_tangent_disk_datum_metrics():
    cfg = RunConfig.default("tangent_disks_neck", n=129, half_width=129 / 64)
    E0 = initial_set(cfg)
    m = neck_metric(E0, E0, 0.0)
    assert m.grown_area == 0.0
    assert m.inscribed_radius_at_origin == 0.0
    assert m.simply_connected


def test_growth_exponent_of_power_law():
    t = np.linspace(0.01, 0.3, 50)
    assert growth_exponent(t, 2.0 * t ** 3, 0.05) == pytest.approx(3.0)


def test_long_time_report_on_unit_disks():
    g = GridSpec.square(4.0, 256)
    E = shapes.disk_union(g, [(-2.0, 0.0), (2.0, 0.0)], 1.0)
    traj = Trajectory(g, 0.01, ForcingSpec.constant(1.0), snapshots={k: E for k in range(0, 101, 10)})
    rep = long_time_report(traj, 1.0)
    checks = {c["name"]: c for c in rep["checks"]}
    assert rep["pass"], checks
    assert checks["component_count_stable"]["N"] == 2
    assert checks["energy_near_pi_N"]["target"] == pytest.approx(2 * math.pi)


def test_custom_run_writes_artifacts(tmp_path):
    cfg = RunConfig.default("custom", n=96, h=1e-2, T=0.03, snapshot_every=1,
                            params={"shape": "ellipse", "shape_args": {"semi_x": 1.0, "semi_y": 0.7}})
    v = run_scenario(cfg, tmp_path)
    assert v["pass"] and {c["name"] for c in v["checks"]} == {"energy_quasimonotone", "step_minimality"}
    assert all("margin" in c for c in v["checks"])
    for name in ("config.json", "series.csv", "verdict.json", "initial.pgm", "snapshots/mask_00003.pgm"):
        assert (tmp_path / name).exists()
    E = read_mask(tmp_path / "snapshots" / "mask_00003")
    assert E.grid == cfg.grid


def test_engine_errors_are_recorded(tmp_path):
    cfg = RunConfig.default("custom", n=64, h=1e-2, T=0.05, forcing=ForcingSpec.constant(3.0),
                            params={"shape": "disk", "shape_args": {"r": 1.85}})
    v = run_scenario(cfg, tmp_path)
    assert not v["pass"]
    assert v["checks"][0]["name"] == "completed" and "DomainContact" in v["checks"][0]["error"]
    assert json.loads((tmp_path / "verdict.json").read_text())["pass"] is False


def test_mask_roundtrip(tmp_path):
    g = GridSpec.square(1.0, 40)
    E = shapes.disk(g, r=0.5, subpixel=False)
    write_mask(E, tmp_path / "m")
    assert read_mask(tmp_path / "m").same_cells(E)


def test_cli_oracle(capsys):
    assert main(["oracle", "--r0", "1", "--h", "0.01", "--T", "0.01"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "t,r"
    assert float(out[2].split(",")[1]) == pytest.approx(0.9898979485566356, abs=1e-11)


def test_cli_simulate_analyze_symmetrize(tmp_path, capsys):
    cfg = {"scenario": "custom", "n": 96, "h": 0.01, "T": 0.02, "params": {"shape": "disk"}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "run"),
                 "--snapshots", "1"]) == 0
    stem = str(tmp_path / "run" / "snapshots" / "mask_00002")
    assert main(["analyze", stem, "--out", str(tmp_path / "an")]) == 0
    assert (tmp_path / "an" / "alexandrov.json").exists()
    assert main(["symmetrize", stem, "--out", str(tmp_path / "sym")]) == 0
    assert (tmp_path / "sym" / "symmetral.pgm").exists()
    assert main(["analyze", str(tmp_path / "missing")]) == 2
    capsys.readouterr()


def test_cli_track_short(tmp_path, capsys):
    code = main(["track", "--T", "0.5", "--out", str(tmp_path)])
    v = json.loads((tmp_path / "verdict.json").read_text())
    assert code == (0 if v["pass"] else 1)
    assert (tmp_path / "metrics.csv").read_text().startswith("t,hausdorff_to_limit")
    capsys.readouterr()

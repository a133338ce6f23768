import json
from pathlib import Path

import numpy as np
import pytest

from calabiflow.cli import main


def write_config(path: Path, outdir: Path, **overrides) -> Path:
    cfg = {
        "bundle": {"n": 1, "m": 0, "lambda": 2.0},
        "class": {"a0": 1.0, "b0": 3.0},
        "grid": {"rho_min": -30.0, "rho_max": 30.0, "count": 513},
        "time": {"s_max": 0.5, "cfl_sigma": 0.2, "checkpoint_list": [0.0, 0.5]},
        "weight": {"A": "auto"},
        "outputs": {"directory": str(outdir), "emit_profiles": True, "emit_plots_data": True},
        "seed_profile": "canonical",
    }
    for dotted, value in overrides.items():
        node = cfg
        keys = dotted.split(".")
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = value
    path.write_text(json.dumps(cfg))
    return path


def test_run_produces_outputs_and_is_deterministic(tmp_path, capsys):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    c1 = write_config(tmp_path / "c1.json", out1)
    c2 = write_config(tmp_path / "c2.json", out2)
    assert main(["run", str(c1)]) == 0
    assert main(["run", str(c2)]) == 0
    for name in ("run.json", "diagnostics.csv", "verdict.json", "report.json", "momentum.csv"):
        b1 = (out1 / name).read_bytes()
        b2 = (out2 / name).read_bytes()
        assert b1 == b2, f"{name} differs between identical runs"
    snap = out1 / "snapshots" / "s_0.0000.csv"
    header = snap.read_text().splitlines()[0]
    assert header.split(",")[:6] == ["rho", "phi", "dphi", "d2phi", "d3phi", "d4phi"]
    # 15 significant digits in scientific notation
    first_value = snap.read_text().splitlines()[1].split(",")[0]
    assert "e" in first_value and len(first_value.split("e")[0].replace("-", "").replace(".", "")) == 15


def test_run_rejects_bad_class(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", tmp_path / "o", **{"class.b0": -3.0})
    assert main(["run", str(cfg)]) == 2
    assert "class.b0" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()  # schema rejection precedes file creation


def test_run_rejects_bad_grid_count(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", tmp_path / "o", **{"grid.count": 100})
    assert main(["run", str(cfg)]) == 2
    assert "grid.count" in capsys.readouterr().err


def test_run_rejects_malformed_json(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["run", str(p)]) == 2


def test_soliton_command_exact_roots(tmp_path):
    out = tmp_path / "sol"
    assert main(["soliton", "--m", "0", "--n", "1", "--a", "1", "--outdir", str(out)]) == 0
    payload = json.loads((out / "soliton.json").read_text())
    assert abs(payload["c_star"] - np.sqrt(2.0)) <= 1e-10
    out2 = tmp_path / "sol2"
    assert main(["soliton", "--m", "0", "--n", "1", "--a", "2", "--outdir", str(out2)]) == 0
    payload2 = json.loads((out2 / "soliton.json").read_text())
    assert abs(payload2["c_star"] - (1 + np.sqrt(17.0)) / 4) <= 1e-10
    lines = (out / "soliton.csv").read_text().splitlines()
    assert lines[0] == "x,w,residual"
    assert len(lines) == 4097


def test_soliton_command_rejects_bad_a(tmp_path):
    assert main(["soliton", "--m", "0", "--n", "1", "--a", "-1", "--outdir", str(tmp_path)]) == 2


def test_sweep_isolation_and_exit_codes(tmp_path, capsys):
    cfg_dir = tmp_path / "configs"
    cfg_dir.mkdir()
    write_config(cfg_dir / "a_good.json", tmp_path / "oa",
                 **{"grid.count": 257, "time.s_max": 0.25, "time.checkpoint_list": [0.0, 0.25]})
    write_config(cfg_dir / "b_bad.json", tmp_path / "ob", **{"class.a0": -1.0})
    write_config(cfg_dir / "c_good.json", tmp_path / "oc",
                 **{"grid.count": 257, "time.s_max": 0.25, "time.checkpoint_list": [0.0, 0.25]})
    out = tmp_path / "sweep"
    assert main(["sweep", str(cfg_dir), "--outdir", str(out)]) == 1
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("config,status,case")
    names = [l.split(",")[0] for l in lines[1:]]
    assert names == ["a_good", "b_bad", "c_good"]
    status = {l.split(",")[0]: l.split(",")[1] for l in lines[1:]}
    assert status == {"a_good": "ok", "b_bad": "failed", "c_good": "ok"}


def test_sweep_empty_dir(tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    assert main(["sweep", str(empty), "--outdir", str(tmp_path / "s")]) == 2


def test_run_classifies_contraction(tmp_path):
    # medium-resolution contraction run through the CLI reaches a verdict
    out = tmp_path / "out"
    cfg = write_config(
        tmp_path / "c.json",
        out,
        **{
            "time.s_max": 6.25,
            "time.checkpoint_list": [0.0, 2.0, 5.0, 6.0, 6.25],
        },
    )
    assert main(["run", str(cfg)]) == 0
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["case"] == "SolitonOnBundle"
    report = json.loads((out / "report.json").read_text())
    assert report["sufficient_horizon"] and report["h_bounds"]["passed"]
    assert json.loads((out / "run.json").read_text())["class_path"]["sing_type"] == "Contraction"

import json
import subprocess
import sys
from pathlib import Path

import pytest

from reachavoid.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_simulate(tmp_path, capsys):
    rc = main(["simulate", str(CONFIGS / "single_2d.json"), "--t-max", "5", "--out-dir", str(tmp_path)])
    assert rc == 0
    assert "payoff" in capsys.readouterr().out
    assert (tmp_path / "trace.csv").exists() and (tmp_path / "trace.svg").exists()
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["defense"] == "mdea" and s["final_time"] <= 5


def test_bench_cli_byte_identical(tmp_path):
    args = ["bench", str(CONFIGS / "bench_2d.json"), "--trials", "2", "--t-max", "5",
            "--attack", "straight", "--no-traces"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "summary.json").read_bytes()
    assert a == (tmp_path / "b" / "summary.json").read_bytes()
    assert not (tmp_path / "a" / "trials").exists()


def test_srs_cli(tmp_path):
    out = tmp_path / "srs.svg"
    assert main(["srs", str(CONFIGS / "fig_srs.json"), "--out", str(out)]) == 0
    assert out.read_text().startswith("<svg")
    assert main(["srs", str(CONFIGS / "cylinder_3d.json"), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "srs_attacker1.csv").exists()


def test_verify_cli(tmp_path, capsys):
    rc = main(["verify", str(CONFIGS / "single_2d.json"), "--t-max", "10", "--out-dir", str(tmp_path)])
    out = capsys.readouterr().out
    assert rc == 0, out
    assert "PASS  solver KKT residual" in out
    assert all(c["ok"] for c in json.loads((tmp_path / "verify.json").read_text()))


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"dimension": 4}')
    assert main(["simulate", str(p)]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["bench", str(CONFIGS / "single_2d.json")]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "reachavoid", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "simulate" in out.stdout

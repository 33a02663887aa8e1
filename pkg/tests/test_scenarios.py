import json
from pathlib import Path

import numpy as np
import pytest

from reachavoid.bench import run_bench
from reachavoid.engine import ScenarioConfig
from reachavoid.errors import ConfigError, UnsupportedDimensionError
from reachavoid.geometry import AxisCylinder
from reachavoid.plotting import emit_srs_plot, emit_srs_point_cloud
from reachavoid.scenarios import (BenchSpec, generate_random_scenario, load_config,
                                  scenario_from_dict, scenario_to_dict)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

TEMPLATE = {
    "dimension": 2,
    "domain": {"type": "box", "lo": [-5, -5], "hi": [5, 5]},
    "target": {"type": "ball", "center": [0, 0], "radius": 1},
    "n_defenders": [1, 3], "n_attackers": [1, 2],
    "defender_speed": [1.0, 1.5], "attacker_speed": 1.0,
    "capture_radius": {"choice": [0.5, 3.0]},
}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj, indent=2))
    return p


def test_load_single_2d():
    cfg = load_config(CONFIGS / "single_2d.json")
    assert isinstance(cfg, ScenarioConfig) and cfg.dim == 2
    assert cfg.target.contains([0.9, 0.0]) and not cfg.target.contains([1.1, 0.0])


def test_load_cylinder_3d():
    cfg = load_config(CONFIGS / "cylinder_3d.json")
    assert cfg.dim == 3 and isinstance(cfg.target.atoms[0], AxisCylinder)


def test_load_bench():
    spec = load_config(CONFIGS / "bench_2d.json")
    assert isinstance(spec, BenchSpec) and spec.trials == 4
    assert spec.defenses == ("mdea", "initial")


def test_speed_ratio_error_has_line(tmp_path):
    d = json.loads((CONFIGS / "single_2d.json").read_text())
    d["attackers"][0]["max_speed"] = 3.0
    p = write(tmp_path, "bad.json", d)
    with pytest.raises(ConfigError, match=r"bad\.json:\d+: attackers\[0\]\.max_speed: speed ratio"):
        load_config(p)


def test_json_syntax_error_line(tmp_path):
    p = write(tmp_path, "broken.json", '{\n  "dimension": 2,\n  "domain": }\n')
    with pytest.raises(ConfigError, match=r"broken\.json:3:\d+: invalid JSON"):
        load_config(p)


def test_missing_key_line(tmp_path):
    d = json.loads((CONFIGS / "single_2d.json").read_text())
    del d["defenders"][1]["max_speed"]
    p = write(tmp_path, "m.json", d)
    with pytest.raises(ConfigError, match="defenders\\[1\\]: missing key 'max_speed'"):
        load_config(p)


def test_round_trip():
    cfg = load_config(CONFIGS / "multi_2d.json")
    again = scenario_from_dict(scenario_to_dict(cfg))
    assert np.array_equal(again.attackers[2].position, cfg.attackers[2].position)


def test_generation_deterministic():
    a = generate_random_scenario(TEMPLATE, 42)
    b = generate_random_scenario(TEMPLATE, 42)
    assert scenario_to_dict(a) == scenario_to_dict(b)
    assert scenario_to_dict(a) != scenario_to_dict(generate_random_scenario(TEMPLATE, 43))


def test_generation_clean_start_1000():
    for seed in range(1000):
        cfg = generate_random_scenario(TEMPLATE, seed)
        for a in cfg.attackers:
            assert cfg.domain.contains(a.position, 0.0)
            assert not cfg.target.contains(a.position, 0.0)
            for d in cfg.defenders:
                assert np.linalg.norm(a.position - d.position) >= d.capture_radius


def test_rejection_cap():
    t = dict(TEMPLATE, capture_radius=50.0)
    with pytest.raises(ConfigError, match="rejection"):
        generate_random_scenario(t, 0)


def test_template_speed_ratio():
    with pytest.raises(ConfigError, match="speed ratio"):
        generate_random_scenario(dict(TEMPLATE, attacker_speed=2.0), 0)


def test_bench_undefended(tmp_path):
    t = dict(TEMPLATE, n_attackers=1, capture_radius=0.1)
    spec = BenchSpec(t, trials=10, seed=1, defenses=("none",), attacks=("straight",), t_max=30,
                     out_dir=str(tmp_path))
    res = run_bench(spec)
    assert res.tallies[("none", "straight")].counts["DefenseFail"] == 10
    assert (tmp_path / "summary.json").exists() and (tmp_path / "summary.txt").exists()
    assert len(list((tmp_path / "trials" / "none_straight").glob("trial_*.csv"))) == 10


def test_bench_paired_table_and_bound(tmp_path):
    t = dict(TEMPLATE, n_defenders=3, n_attackers=3, defender_speed=1.0,
             capture_radius={"choice": [0.3, 0.6]})
    spec = BenchSpec(t, trials=2, seed=3, defenses=("mdea", "initial"), attacks=("straight",),
                     t_max=10, write_traces=False)
    res = run_bench(spec)
    assert res.paired["straight"]["pairs"] == 2
    assert "paired mdea vs initial" in res.table()
    tally = res.tallies[("mdea", "straight")]
    assert sum(tally.counts.values()) == 2
    assert tally.check_bound_violations == 0
    assert all(s >= 0 for s in tally.payoff_bound_slack)
    again = run_bench(spec)
    assert again.summary_json() == res.summary_json()


def test_srs_plot_source_parameters(tmp_path):
    cfg = load_config(CONFIGS / "fig_srs.json")
    p = emit_srs_plot(cfg, 1, None, tmp_path / "srs.svg")
    svg = p.read_text()
    assert svg.startswith("<svg") and "xi (phi=" in svg
    # SRS polygon vertices avoid both capture disks
    poly = [seg for seg in svg.splitlines() if 'fill="red"' in seg and "<polygon" in seg][0]
    from reachavoid.plotting import SIZE, _Svg, _extent
    lo, hi = _extent(cfg)
    sv = _Svg(lo, hi)
    pts = []
    for xy in poly.split('points="')[1].split('"')[0].split():
        x, y = map(float, xy.split(","))
        pts.append([lo[0] + (x - 20) / sv.scale, lo[1] + (SIZE - 20 - y) / sv.scale])
    for d in cfg.defenders:
        dist = np.linalg.norm(np.array(pts) - d.position, axis=1)
        assert np.all(dist >= d.capture_radius - 0.02)


def test_srs_plot_bisector(tmp_path):
    from reachavoid.plotting import boundary_polyline
    from reachavoid.coordination import CoalitionView
    cfg = scenario_from_dict({
        "dimension": 2, "domain": {"type": "box", "lo": [-5, -5], "hi": [5, 5]},
        "target": {"type": "ball", "center": [0, 4], "radius": 0.5},
        "defenders": [{"position": [0, 2], "max_speed": 1.0, "capture_radius": 0.0}],
        "attackers": [{"position": [0, -2], "max_speed": 1.0}]})
    emit_srs_plot(cfg, 1, None, tmp_path / "b.svg")
    srs = CoalitionView((1,), ((0, 2),), (1.0,), (0.0,), (1.0,), 1, (0, -2), 1.0).srs(cfg.domain)
    pts = boundary_polyline(srs, [0, -2], 15.0)
    # vertices not on the box lie on the bisector y = 0
    inner = pts[np.max(np.abs(pts), axis=1) < 5 - 1e-6]
    assert len(inner) > 10 and np.allclose(inner[:, 1], 0.0, atol=1e-9)


def test_srs_plot_empty(tmp_path):
    cfg = scenario_from_dict({
        "dimension": 2, "domain": {"type": "box", "lo": [-5, -5], "hi": [5, 5]},
        "target": {"type": "ball", "center": [0, 4], "radius": 0.5},
        "defenders": [{"position": [0, -1.9], "max_speed": 1.0, "capture_radius": 0.5}],
        "attackers": [{"position": [0, -2], "max_speed": 1.0}], "clean_start": False})
    svg = emit_srs_plot(cfg, 1, None, tmp_path / "e.svg").read_text()
    assert "empty SRS" in svg


def test_srs_3d(tmp_path):
    cfg = load_config(CONFIGS / "cylinder_3d.json")
    with pytest.raises(UnsupportedDimensionError):
        emit_srs_plot(cfg, 1, None, tmp_path / "x.svg")
    p = emit_srs_point_cloud(cfg, 1, None, tmp_path / "x.csv", n_rays=200)
    lines = p.read_text().splitlines()
    assert lines[0] == "x,y,z" and len(lines) == 201

"""JSON configuration files and randomized scenario generation.

Scenario file (all units SI)::

    {
      "dimension": 2,
      "domain": {"type": "box", "lo": [-5, -5], "hi": [5, 5]},
      "target": {"type": "ball", "center": [0, 0], "radius": 1},
      "defenders": [{"position": [3, 3], "max_speed": 1.2, "capture_radius": 0.3}],
      "attackers": [{"position": [-4, 4], "max_speed": 1.0}],
      "dt": 0.01, "allocation_period": 0.1, "t_max": 120, "seed": 0
    }

Bench file: the same geometry keys inside ``"template"`` plus sampling
ranges, and a trial/policy matrix::

    {
      "template": {"dimension": 2, "domain": {...}, "target": {...},
                   "n_defenders": [1, 3], "n_attackers": 1,
                   "defender_speed": [1.0, 1.5], "attacker_speed": 1.0,
                   "capture_radius": [0.1, 0.5]},
      "trials": 10, "seed": 0,
      "defense": ["mdea"], "attack": ["optimal", "straight"],
      "dt": 0.01, "allocation_period": 0.1, "t_max": 120
    }

Sampled template values are a number, a ``[lo, hi]`` uniform range (an
inclusive integer range for agent counts) or ``{"choice": [...]}``.

Shapes: ``box`` (``lo``/``hi``; equal bounds give faces and segments),
``ball`` (``center``/``radius``; radius 0 is a point), ``point``
(``position``) and ``cylinder`` (``axis``, ``center`` in the other
coordinates, ``radius``, ``lo``/``hi`` along the axis).
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import AttackerSpec, DefenderSpec, ScenarioConfig
from .errors import ConfigError, InvalidInputError
from .geometry import ConvexRegion, ball, box, cylinder

MAX_ATTEMPTS = 10_000
DEFENSES = ("mdea", "initial", "none", "coalition")
ATTACKS = ("optimal", "straight", "random")


@dataclass
class BenchSpec:
    """Batch of randomized trials over a defense x attack policy matrix."""

    template: dict
    trials: int = 1
    seed: int = 0
    defenses: tuple = ("mdea",)
    attacks: tuple = ("optimal",)
    dt: float = 1e-2
    allocation_period: float = 0.1
    t_max: float = 120.0
    out_dir: str | None = None
    workers: int = 1
    write_traces: bool = True
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        for d in self.defenses:
            if d not in DEFENSES:
                raise ConfigError(f"unknown defense policy {d!r}; choose from {DEFENSES}")
        for a in self.attacks:
            if a not in ATTACKS:
                raise ConfigError(f"unknown attack policy {a!r}; choose from {ATTACKS}")
        validate_template(self.template)


# -- shapes -------------------------------------------------------------------

def _vec(obj, key, n, where):
    try:
        v = [float(x) for x in obj[key]]
    except KeyError:
        raise ConfigError(f"{where}: missing key {key!r}") from None
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected a list of numbers") from None
    if len(v) != n:
        raise ConfigError(f"{where}.{key}: expected {n} coordinates, got {len(v)}")
    return v


def _num(obj, key, where, default=None):
    if key not in obj:
        if default is None:
            raise ConfigError(f"{where}: missing key {key!r}")
        return default
    try:
        return float(obj[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected a number") from None


def build_shape(spec: dict, n: int, where: str = "shape") -> ConvexRegion:
    """Region described by a shape dictionary."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"{where}: expected an object with a 'type' key")
    kind = spec["type"]
    try:
        if kind == "box":
            return box(_vec(spec, "lo", n, where), _vec(spec, "hi", n, where))
        if kind == "ball":
            return ball(_vec(spec, "center", n, where), _num(spec, "radius", where))
        if kind == "point":
            return ball(_vec(spec, "position", n, where), 0.0)
        if kind == "cylinder":
            axis = int(spec.get("axis", n - 1))
            return cylinder(axis, _vec(spec, "center", n - 1, where), _num(spec, "radius", where),
                            _num(spec, "lo", where), _num(spec, "hi", where))
    except InvalidInputError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unknown shape type {kind!r}")


def shape_bounds(spec: dict, n: int):
    """Axis-aligned bounding box of a shape dictionary (for sampling)."""
    kind = spec["type"]
    if kind == "box":
        return np.array(spec["lo"], float), np.array(spec["hi"], float)
    if kind in ("ball", "point"):
        c = np.array(spec.get("center", spec.get("position")), float)
        r = float(spec.get("radius", 0.0))
        return c - r, c + r
    if kind == "cylinder":
        axis = int(spec.get("axis", n - 1))
        c = list(map(float, spec["center"]))
        r = float(spec["radius"])
        lo, hi = [], []
        for k in range(n):
            if k == axis:
                lo.append(float(spec["lo"]))
                hi.append(float(spec["hi"]))
            else:
                ck = c.pop(0)
                lo.append(ck - r)
                hi.append(ck + r)
        return np.array(lo), np.array(hi)
    raise ConfigError(f"unknown shape type {kind!r}")


# -- parsing ------------------------------------------------------------------

def _locate(text: str, key: str) -> int | None:
    m = re.search(r'"' + re.escape(key) + r'"', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _with_line(exc: ConfigError, text: str, path: str) -> ConfigError:
    msg = str(exc)
    head = msg.split(":")[0]
    line = None
    m = re.match(r"(defenders|attackers)\[(\d+)\]", head)
    if m:
        # line of the k-th entry of the list, then the key inside it
        start = text.find('"' + m.group(1) + '"')
        pos = start
        for _ in range(int(m.group(2)) + 1):
            pos = text.find("{", pos + 1)
        key = head.split(".")[-1] if "." in head else None
        if start >= 0 and pos >= 0:
            kpos = text.find('"' + key + '"', pos) if key else pos
            line = text.count("\n", 0, kpos if kpos >= 0 else pos) + 1
    else:
        key = re.findall(r"[A-Za-z_]+", head.split(".")[-1])
        line = _locate(text, key[-1]) if key else None
    prefix = f"{path}:{line}: " if line else f"{path}: "
    return ConfigError(prefix + msg)


def scenario_from_dict(d: dict, overrides: dict | None = None) -> ScenarioConfig:
    """Build and validate a ScenarioConfig from parsed JSON."""
    d = dict(d)
    d.update({k: v for k, v in (overrides or {}).items() if v is not None})
    n = int(d.get("dimension", 0))
    if n not in (2, 3):
        raise ConfigError(f"dimension: must be 2 or 3, got {d.get('dimension')!r}")
    domain = build_shape(d.get("domain"), n, "domain")
    target = build_shape(d.get("target"), n, "target")
    defenders = []
    for k, item in enumerate(d.get("defenders", [])):
        where = f"defenders[{k}]"
        defenders.append(DefenderSpec(np.array(_vec(item, "position", n, where)),
                                      _num(item, "max_speed", where),
                                      _num(item, "capture_radius", where, 0.0)))
    attackers = []
    for k, item in enumerate(d.get("attackers", [])):
        where = f"attackers[{k}]"
        attackers.append(AttackerSpec(np.array(_vec(item, "position", n, where)),
                                      _num(item, "max_speed", where)))
    if defenders and attackers:
        vd = min(x.max_speed for x in defenders)
        for k, a in enumerate(attackers):
            if a.max_speed > vd:
                raise ConfigError(
                    f"attackers[{k}].max_speed: speed ratio violated, attacker speed {a.max_speed} "
                    f"exceeds the slowest defender speed {vd} (defenders must be at least as fast)")
    cfg = ScenarioConfig(
        dim=n, domain=domain, target=target, defenders=defenders, attackers=attackers,
        dt=_num(d, "dt", "dt", 1e-2), allocation_period=_num(d, "allocation_period", "allocation_period", 0.1),
        t_max=_num(d, "t_max", "t_max", 120.0), rng_seed=int(d.get("seed", 0)),
        meta={"domain": d.get("domain"), "target": d.get("target")})
    cfg.validate(clean_start=bool(d.get("clean_start", True)))
    return cfg


def bench_from_dict(d: dict) -> BenchSpec:
    def listify(v):
        return tuple(v) if isinstance(v, (list, tuple)) else (v,)

    spec = BenchSpec(
        template=d.get("template") or {},
        trials=int(d.get("trials", 1)),
        seed=int(d.get("seed", 0)),
        defenses=listify(d.get("defense", "mdea")),
        attacks=listify(d.get("attack", "optimal")),
        dt=float(d.get("dt", 1e-2)),
        allocation_period=float(d.get("allocation_period", 0.1)),
        t_max=float(d.get("t_max", 120.0)),
        out_dir=d.get("out_dir"),
        workers=int(d.get("workers", 1)),
        write_traces=bool(d.get("write_traces", True)),
    )
    spec.validate()
    return spec


def load_config(path):
    """Parse a scenario or bench JSON file.

    Returns a ``ScenarioConfig`` or, when the file has a ``"template"`` key,
    a ``BenchSpec``.  Errors carry the file name and the offending line.
    """
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: top level must be an object")
    try:
        if "template" in data:
            return bench_from_dict(data)
        return scenario_from_dict(data)
    except ConfigError as exc:
        raise _with_line(exc, text, path) from None


# -- random scenarios ---------------------------------------------------------

def _draw(rng, value, integer=False):
    if isinstance(value, dict):
        opts = value["choice"]
        v = opts[int(rng.integers(len(opts)))]
        return int(v) if integer else float(v)
    if isinstance(value, (list, tuple)):
        lo, hi = value
        if integer:
            return int(rng.integers(int(lo), int(hi) + 1))
        return float(rng.uniform(float(lo), float(hi)))
    return int(value) if integer else float(value)


def validate_template(t: dict) -> None:
    n = int(t.get("dimension", 0))
    if n not in (2, 3):
        raise ConfigError("template.dimension: must be 2 or 3")
    build_shape(t.get("domain"), n, "template.domain")
    build_shape(t.get("target"), n, "template.target")
    for key in ("n_defenders", "n_attackers", "defender_speed", "attacker_speed"):
        if key not in t:
            raise ConfigError(f"template: missing key {key!r}")
    ds, as_ = t["defender_speed"], t["attacker_speed"]
    def extremes(v):
        if isinstance(v, dict):
            v = v.get("choice")
            if not v:
                raise ConfigError("template: a 'choice' entry needs a non-empty list")
        return (min(v), max(v)) if isinstance(v, (list, tuple)) else (v, v)

    lo_d = extremes(ds)[0]
    hi_a = extremes(as_)[1]
    if lo_d < hi_a:
        raise ConfigError(
            "template.defender_speed: speed ratio violated, defenders must be at least as fast "
            f"as attackers ({lo_d} < {hi_a})")


def generate_random_scenario(template: dict, seed: int, dt: float = 1e-2,
                             allocation_period: float = 0.1, t_max: float = 120.0) -> ScenarioConfig:
    """Sample agent positions uniformly in the domain with clean-start rejection.

    Deterministic in ``seed``.  Raises ConfigError after ``MAX_ATTEMPTS``
    rejected draws.
    """
    validate_template(template)
    n = int(template["dimension"])
    rng = np.random.default_rng(seed)
    domain = build_shape(template["domain"], n, "template.domain")
    target = build_shape(template["target"], n, "template.target")
    lo, hi = shape_bounds(template["domain"], n)
    nd = _draw(rng, template["n_defenders"], integer=True)
    na = _draw(rng, template["n_attackers"], integer=True)
    va = [_draw(rng, template["attacker_speed"]) for _ in range(na)]
    vd = [_draw(rng, template["defender_speed"]) for _ in range(nd)]
    radii = [_draw(rng, template.get("capture_radius", 0.0)) for _ in range(nd)]
    margin = float(template.get("target_margin", 0.0))

    def sample(ok):
        for _ in range(MAX_ATTEMPTS):
            p = rng.uniform(lo, hi)
            if domain.contains(p, 0.0) and ok(p):
                return p
        raise ConfigError(f"rejection sampling exceeded {MAX_ATTEMPTS} attempts; "
                          "the template leaves no room for a clean start")

    dpos = [sample(lambda p: True) for _ in range(nd)]

    def clean(p):
        if target.max_value(p) <= margin:
            return False
        return all(np.linalg.norm(p - d) >= r for d, r in zip(dpos, radii))

    apos = [sample(clean) for _ in range(na)]
    cfg = ScenarioConfig(
        dim=n, domain=domain, target=target,
        defenders=[DefenderSpec(p, v, r) for p, v, r in zip(dpos, vd, radii)],
        attackers=[AttackerSpec(p, v) for p, v in zip(apos, va)],
        dt=dt, allocation_period=allocation_period, t_max=t_max, rng_seed=int(seed),
        meta={"domain": template["domain"], "target": template["target"]})
    cfg.validate()
    return cfg


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """JSON-ready description of a scenario (shapes come from ``cfg.meta``)."""
    return {
        "dimension": cfg.dim,
        "domain": cfg.meta.get("domain"),
        "target": cfg.meta.get("target"),
        "defenders": [{"position": [float(x) for x in d.position], "max_speed": d.max_speed,
                       "capture_radius": d.capture_radius} for d in cfg.defenders],
        "attackers": [{"position": [float(x) for x in a.position], "max_speed": a.max_speed}
                      for a in cfg.attackers],
        "dt": cfg.dt, "allocation_period": cfg.allocation_period, "t_max": cfg.t_max,
        "seed": cfg.rng_seed,
    }

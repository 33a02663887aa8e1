"""Discrete-time reach-avoid game loop.

Agents follow single-integrator dynamics, integrated with forward Euler and
projected back onto the domain.  Attackers become stationary once captured
(strictly inside a capture radius) or once inside the target.  The defense
re-allocates every ``allocation_period`` seconds and runs DMSDC every step.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .allocation import (CoalitionAssignment, MdeaContext, TeamState, check_bound, coalition,
                         defense_inputs, hilp, mdea)
from .coordination import AgentState, dmsdc_step, normalize, straight_line_attack_input
from .errors import ConfigError, InvalidInputError
from .geometry import ConvexRegion, as_vec, project_to_domain
from .solver import CheckCounter, Status, solve_projection

SPEED_TOL = 1e-12


class DefensePolicy(enum.Enum):
    MDEA = "mdea"
    INITIAL = "initial"
    NONE = "none"
    # every defender in one coalition against the only attacker
    COALITION = "coalition"


class AttackPolicy(enum.Enum):
    OPTIMAL = "optimal"
    STRAIGHT = "straight"
    RANDOM = "random"


class AttackerStatus(enum.Enum):
    ACTIVE = "active"
    CAPTURED = "captured"
    REACHED = "reached"


@dataclass(frozen=True)
class DefenderSpec:
    position: np.ndarray
    max_speed: float
    capture_radius: float


@dataclass(frozen=True)
class AttackerSpec:
    position: np.ndarray
    max_speed: float


@dataclass
class ScenarioConfig:
    """One game: geometry, agents and timing."""

    dim: int
    domain: ConvexRegion
    target: ConvexRegion
    defenders: list
    attackers: list
    dt: float = 1e-2
    allocation_period: float = 0.1
    t_max: float = 120.0
    rng_seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.defenders = [d if isinstance(d, DefenderSpec) else DefenderSpec(*d) for d in self.defenders]
        self.attackers = [a if isinstance(a, AttackerSpec) else AttackerSpec(*a) for a in self.attackers]
        self.defenders = [DefenderSpec(as_vec(d.position, self.dim), float(d.max_speed),
                                       float(d.capture_radius)) for d in self.defenders]
        self.attackers = [AttackerSpec(as_vec(a.position, self.dim), float(a.max_speed))
                          for a in self.attackers]

    @property
    def alloc_every(self) -> int:
        return max(1, int(round(self.allocation_period / self.dt)))

    @property
    def max_steps(self) -> int:
        return int(math.ceil(self.t_max / self.dt - 1e-9))

    def validate(self, clean_start: bool = True) -> None:
        """Raise ConfigError on any violated scenario invariant."""
        if self.dim not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.dim}")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.allocation_period >= self.dt:
            raise ConfigError("allocation_period must be at least dt")
        if not self.t_max > 0:
            raise ConfigError("t_max must be positive")
        for k, d in enumerate(self.defenders, 1):
            if not d.max_speed > 0 or d.capture_radius < 0:
                raise ConfigError(f"defender {k}: speed must be > 0 and capture radius >= 0")
            if not self.domain.contains(d.position):
                raise ConfigError(f"defender {k} starts outside the domain")
        for k, a in enumerate(self.attackers, 1):
            if not a.max_speed > 0:
                raise ConfigError(f"attacker {k}: speed must be > 0")
            if not self.domain.contains(a.position):
                raise ConfigError(f"attacker {k} starts outside the domain")
        if self.defenders and self.attackers:
            vd = min(d.max_speed for d in self.defenders)
            va = max(a.max_speed for a in self.attackers)
            if vd < va:
                raise ConfigError(
                    f"speed ratio violated: slowest defender {vd} m/s is slower than fastest "
                    f"attacker {va} m/s (every defender must be at least as fast as every attacker)")
        self._check_target_inside_domain()
        if clean_start:
            for k, a in enumerate(self.attackers, 1):
                if self.target.contains(a.position, 0.0):
                    raise ConfigError(f"attacker {k} starts inside the target")
                for i, d in enumerate(self.defenders, 1):
                    if np.linalg.norm(a.position - d.position) < d.capture_radius:
                        raise ConfigError(f"attacker {k} starts inside the capture radius of defender {i}")

    def _check_target_inside_domain(self) -> None:
        probes = [np.zeros(self.dim)]
        for k in range(self.dim):
            for s in (-1.0, 1.0):
                e = np.zeros(self.dim)
                e[k] = 50.0 * s
                probes.append(e)
        for p in probes:
            res = solve_projection(p, self.target)
            if res.status is Status.INFEASIBLE:
                raise ConfigError("target set is empty")
            if not self.domain.contains(res.primal_q, 1e-7):
                raise ConfigError("target is not contained in the domain")


@dataclass(frozen=True)
class JointState:
    time: float
    defender_positions: np.ndarray
    attacker_positions: np.ndarray
    attacker_status: tuple

    @property
    def active(self) -> list:
        return [j for j, s in enumerate(self.attacker_status, 1) if s is AttackerStatus.ACTIVE]

    def count(self, status: AttackerStatus) -> int:
        return sum(1 for s in self.attacker_status if s is status)


def initial_state(config: ScenarioConfig) -> JointState:
    n = config.dim
    dp = np.array([d.position for d in config.defenders], dtype=float).reshape(-1, n)
    ap = np.array([a.position for a in config.attackers], dtype=float).reshape(-1, n)
    return JointState(0.0, dp, ap, tuple(AttackerStatus.ACTIVE for _ in config.attackers))


def team_state(state: JointState, config: ScenarioConfig) -> TeamState:
    defs = [AgentState(i, state.defender_positions[i - 1], d.max_speed, d.capture_radius)
            for i, d in enumerate(config.defenders, 1)]
    atts = [AgentState(j, state.attacker_positions[j - 1], a.max_speed)
            for j, a in enumerate(config.attackers, 1)]
    return TeamState(tuple(defs), tuple(atts), frozenset(state.active))


def _as_matrix(v, count, n):
    if isinstance(v, dict):
        out = np.zeros((count, n))
        for k, vec in v.items():
            out[k - 1] = vec
        return out
    return np.asarray(v, dtype=float).reshape(count, n)


def step(state: JointState, defender_velocities, attacker_velocities,
         config: ScenarioConfig, counter: CheckCounter | None = None) -> JointState:
    """Forward-Euler update with projection onto the domain.

    Velocities are ``{id: vector}`` maps (missing ids mean zero) or arrays
    with one row per agent.  Statuses are left unchanged.
    """
    n = config.dim
    dv = _as_matrix(defender_velocities, len(config.defenders), n)
    av = _as_matrix(attacker_velocities, len(config.attackers), n)
    for i, d in enumerate(config.defenders):
        if np.linalg.norm(dv[i]) > d.max_speed + SPEED_TOL:
            raise InvalidInputError(f"defender {i + 1} exceeds its speed limit")
    for j, a in enumerate(config.attackers):
        if np.linalg.norm(av[j]) > a.max_speed + SPEED_TOL:
            raise InvalidInputError(f"attacker {j + 1} exceeds its speed limit")
        if state.attacker_status[j] is not AttackerStatus.ACTIVE and np.any(av[j]):
            raise InvalidInputError(f"attacker {j + 1} is inactive and must not move")
    dp = np.array([project_to_domain(config.domain, p + v * config.dt, counter)
                   for p, v in zip(state.defender_positions, dv)]).reshape(-1, n)
    ap = np.array([project_to_domain(config.domain, p + v * config.dt, counter) if np.any(v) else p
                   for p, v in zip(state.attacker_positions, av)]).reshape(-1, n)
    return JointState(state.time + config.dt, dp, ap, state.attacker_status)


def update_status(state: JointState, config: ScenarioConfig) -> JointState:
    """Capture (strictly within a radius) takes precedence over target entry."""
    status = list(state.attacker_status)
    for j, s in enumerate(status):
        if s is not AttackerStatus.ACTIVE:
            continue
        p = state.attacker_positions[j]
        for i, d in enumerate(config.defenders):
            if np.linalg.norm(p - state.defender_positions[i]) < d.capture_radius:
                status[j] = AttackerStatus.CAPTURED
                break
        else:
            if config.target.contains(p, 0.0):
                status[j] = AttackerStatus.REACHED
    return JointState(state.time, state.defender_positions, state.attacker_positions, tuple(status))


@dataclass
class AllocationRecord:
    step: int
    time: float
    assignment: dict
    gamma: int
    n_captured: int
    check_count: int
    guard_checks: int
    adopted: bool
    max_ads_size: int
    n_active: int
    mr_empty_after_first: bool

    def to_json(self) -> dict:
        return {
            "step": self.step, "t": round(self.time, 10), "assignment": self.assignment,
            "gamma": self.gamma, "n_c": self.n_captured, "check_count": self.check_count,
            "guard_checks": self.guard_checks, "adopted": self.adopted,
            "max_ads_size": self.max_ads_size, "n_active": self.n_active,
        }


@dataclass
class GameTrace:
    config: ScenarioConfig
    defense: DefensePolicy
    attack: AttackPolicy
    states: list = field(default_factory=list)
    allocations: list = field(default_factory=list)
    phi: list = field(default_factory=list)
    modes: list = field(default_factory=list)
    termination_reason: str = ""
    control_checks: int = 0
    warnings: list = field(default_factory=list)

    @property
    def final(self) -> JointState:
        return self.states[-1]

    @property
    def captured(self) -> int:
        return self.final.count(AttackerStatus.CAPTURED)

    @property
    def reached(self) -> int:
        return self.final.count(AttackerStatus.REACHED)

    @property
    def timed_out(self) -> int:
        return self.final.count(AttackerStatus.ACTIVE)

    @property
    def allocation_checks(self) -> int:
        return sum(a.check_count for a in self.allocations)

    def summary(self) -> dict:
        M = len(self.config.attackers)
        a0 = self.allocations[0] if self.allocations else None
        return {
            "defense": self.defense.value,
            "attack": self.attack.value,
            "payoff": payoff(self),
            "captures": self.captured,
            "reached": self.reached,
            "timeouts": self.timed_out,
            "n_defenders": len(self.config.defenders),
            "n_attackers": M,
            "steps": int(round(self.final.time / self.config.dt)),
            "final_time": round(self.final.time, 10),
            "termination_reason": self.termination_reason,
            "allocations": [a.to_json() for a in self.allocations],
            "gamma": [a.gamma for a in self.allocations],
            "n_c": [a.n_captured for a in self.allocations],
            "check_count": self.allocation_checks,
            "control_checks": self.control_checks,
            "payoff_bound": (M - a0.gamma - a0.n_captured) if a0 else M,
        }


def payoff(trace: GameTrace) -> int:
    """Number of attackers that reached the target."""
    return trace.reached


def _random_velocity(rng: np.random.Generator, n: int, vmax: float) -> np.ndarray:
    d = rng.standard_normal(n)
    nrm = np.linalg.norm(d)
    if nrm == 0.0:
        return np.zeros(n)
    return vmax * rng.random() ** (1.0 / n) * d / nrm


class _Game:
    def __init__(self, config, defense, attack, record_phi, backend):
        self.config = config
        self.defense = DefensePolicy(defense)
        self.attack = AttackPolicy(attack)
        self.record_phi = record_phi
        self.backend = backend
        self.ctrl = CheckCounter()
        self.assignment = CoalitionAssignment()
        self.context: MdeaContext | None = None
        self.rng = np.random.default_rng(np.random.SeedSequence(config.rng_seed).spawn(1)[0])
        if self.defense is DefensePolicy.COALITION and len(config.attackers) != 1:
            raise InvalidInputError("the coalition policy needs exactly one attacker")

    def allocate(self, k, state, trace):
        cfg = self.config
        team = team_state(state, cfg)
        if self.defense is DefensePolicy.INITIAL and k > 0:
            return
        res = hilp(team, cfg.domain, cfg.target, None, backend=self.backend)
        guard = CheckCounter()
        md = mdea(team, res, self.context, cfg.domain, cfg.target, guard, backend=self.backend)
        self.context = md.context
        self.assignment = md.assignment
        trace.allocations.append(AllocationRecord(
            step=k, time=state.time, assignment=md.assignment.to_json(), gamma=md.gamma,
            n_captured=state.count(AttackerStatus.CAPTURED), check_count=res.check_count,
            guard_checks=guard.count, adopted=md.adopted, max_ads_size=res.max_ads_size,
            n_active=len(team.active), mr_empty_after_first=res.mr_empty_after_first))

    def controls(self, state, trace):
        cfg = self.config
        team = team_state(state, cfg)
        outcomes = {}
        if self.defense is DefensePolicy.NONE:
            dv = {}
        elif self.defense is DefensePolicy.COALITION:
            dv = {}
            if team.active:
                out = dmsdc_step(team.view(team.defender_ids, 1), cfg.domain, cfg.target,
                                 self.ctrl, backend=self.backend)
                dv = out.defender_velocities
                outcomes[1] = out
                if self.record_phi:
                    trace.phi.append(out.phi)
                    trace.modes.append(out.mode.value)
                if out.warning:
                    trace.warnings.append((state.time, out.warning))
        else:
            dv = defense_inputs(self.assignment, team, cfg.domain, cfg.target, self.ctrl,
                                outcomes, backend=self.backend)
        av = {}
        everyone = coalition(team.defender_ids) if team.defender_ids else None
        for j in team.active_ids:
            a = team.attacker(j)
            if self.attack is AttackPolicy.RANDOM:
                av[j] = _random_velocity(self.rng, cfg.dim, a.max_speed)
            elif self.attack is AttackPolicy.STRAIGHT or everyone is None:
                av[j] = straight_line_attack_input(a.position, a.max_speed, cfg.target,
                                                   backend=self.backend)
            else:
                out = outcomes.get(j)
                reuse = out is not None and (self.defense is DefensePolicy.COALITION
                                             or self.assignment.pairs.get(j) == everyone)
                if not reuse:
                    out = dmsdc_step(team.view(everyone, j), cfg.domain, cfg.target,
                                     self.ctrl, backend=self.backend)
                av[j] = a.max_speed * normalize(out.waypoint - a.position)
        return dv, av


def run_game(config: ScenarioConfig, defense_policy="mdea", attack_policy="optimal",
             record_phi: bool = True, backend: str | None = None,
             record_states: bool = True) -> GameTrace:
    """Play one game to resolution or timeout.

    Parameters
    ----------
    config : ScenarioConfig
    defense_policy : {"mdea", "initial", "none", "coalition"}
    attack_policy : {"optimal", "straight", "random"}
    record_phi : bool
        Keep the per-step coalition value (coalition policy only).
    record_states : bool
        Keep every snapshot; otherwise only the first and last.
    """
    game = _Game(config, defense_policy, attack_policy, record_phi, backend)
    trace = GameTrace(config, game.defense, game.attack)
    state = update_status(initial_state(config), config)
    trace.states.append(state)
    k = 0
    while True:
        if not state.active:
            trace.termination_reason = "resolved"
            break
        if k >= config.max_steps:
            trace.termination_reason = "timeout"
            break
        if game.defense in (DefensePolicy.MDEA, DefensePolicy.INITIAL) and k % config.alloc_every == 0:
            game.allocate(k, state, trace)
        dv, av = game.controls(state, trace)
        state = update_status(step(state, dv, av, config), config)
        state = JointState(round((k + 1) * config.dt, 12), state.defender_positions,
                           state.attacker_positions, state.attacker_status)
        k += 1
        if record_states or not state.active or k >= config.max_steps:
            trace.states.append(state)
    trace.control_checks = game.ctrl.count
    return trace


# -- export -------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def trace_csv(trace: GameTrace) -> str:
    """CSV with one row per agent per recorded step."""
    n = trace.config.dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "agent_id", "kind", "x", "y"] + (["z"] if n == 3 else []) + ["status"])
    for s in trace.states:
        t = _fmt(s.time)
        for i, p in enumerate(s.defender_positions, 1):
            w.writerow([t, i, "defender", *map(_fmt, p), "active"])
        for j, p in enumerate(s.attacker_positions, 1):
            w.writerow([t, j, "attacker", *map(_fmt, p), s.attacker_status[j - 1].value])
    return buf.getvalue()


def trace_summary_json(trace: GameTrace) -> str:
    return json.dumps(trace.summary(), sort_keys=True, indent=2)

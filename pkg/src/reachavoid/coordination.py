"""Single-attack defense coordination.

A coalition of defenders guarding the target against one attacker solves the
minimum-distance program between the attacker's safe-reachable set and the
target.  A positive value means the defense wins (winning mode) and every
defender heads for the closest SRS point ``xi``.  Otherwise the coalition
switches to recovery mode and heads for ``xi_bar``, the projection of the
attacker onto ``SRS ∩ target``.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .geometry import (CaptureFrontier, ConvexRegion, as_vec, build_srs,
                       capture_frontier_param_gradients, normalize)
from .solver import (CheckCounter, SolveResult, Status, interior_guess, solve_min_distance,
                     solve_projection)

log = logging.getLogger(__name__)

EPS_WIN = 1e-7


@dataclass(frozen=True)
class AgentState:
    """Position and speed limit of one agent; defenders also carry a capture radius."""

    agent_id: int
    position: np.ndarray
    max_speed: float
    capture_radius: float = 0.0


@dataclass(frozen=True)
class CoalitionView:
    """Joint state of one coalition-attacker pair."""

    defender_ids: tuple
    defender_positions: tuple
    gammas: tuple
    radii: tuple
    max_speeds: tuple
    attacker_id: int
    attacker_position: np.ndarray
    attacker_max_speed: float

    def __post_init__(self):
        k = len(self.defender_ids)
        if not (len(self.defender_positions) == len(self.gammas) == len(self.radii)
                == len(self.max_speeds) == k):
            raise InvalidInputError("coalition fields differ in length")
        if list(self.defender_ids) != sorted(set(self.defender_ids)):
            raise InvalidInputError("defender ids must be sorted and unique")
        if not self.attacker_max_speed > 0:
            raise InvalidInputError("attacker speed must be positive")
        a = as_vec(self.attacker_position)
        object.__setattr__(self, "attacker_position", a)
        object.__setattr__(self, "defender_positions",
                           tuple(as_vec(p, a.shape[0]) for p in self.defender_positions))
        for i, g, v in zip(self.defender_ids, self.gammas, self.max_speeds):
            if not g >= 1.0:
                raise InvalidInputError(
                    f"defender {i}: speed ratio {g} < 1, defenders must be at least as fast as attackers")
            if abs(g * self.attacker_max_speed - v) > 1e-9 * max(1.0, v):
                raise InvalidInputError(f"defender {i}: gamma inconsistent with speeds")

    @classmethod
    def from_agents(cls, defenders, attacker: AgentState) -> "CoalitionView":
        """Build a view from ``AgentState`` records; defenders are sorted by id."""
        defenders = sorted(defenders, key=lambda d: d.agent_id)
        va = float(attacker.max_speed)
        return cls(
            defender_ids=tuple(d.agent_id for d in defenders),
            defender_positions=tuple(d.position for d in defenders),
            gammas=tuple(d.max_speed / va for d in defenders),
            radii=tuple(d.capture_radius for d in defenders),
            max_speeds=tuple(float(d.max_speed) for d in defenders),
            attacker_id=attacker.agent_id,
            attacker_position=attacker.position,
            attacker_max_speed=va,
        )

    def srs(self, domain: ConvexRegion) -> ConvexRegion:
        return build_srs(self.defender_positions, self.attacker_position,
                         self.gammas, self.radii, domain)


class Mode(enum.Enum):
    WINNING = "winning"
    RECOVERY = "recovery"


@dataclass
class CoordinationOutcome:
    """Result of one DMSDC step.

    ``result`` holds the min-distance solve; ``warning`` is set when the
    recovery program was numerically empty and the winning waypoint was
    kept instead.
    """

    phi: float
    waypoint: np.ndarray
    mode: Mode
    defender_velocities: dict
    result: SolveResult | None = None
    warning: str | None = None
    extra: dict = field(default_factory=dict)


def solve_pair(view: CoalitionView, domain: ConvexRegion, target: ConvexRegion,
               counter: CheckCounter | None, backend: str | None = None) -> SolveResult:
    """Minimum-distance solve between the pair's SRS and the target (one check)."""
    srs = view.srs(domain)
    start = (view.attacker_position, interior_guess(target, view.attacker_position.shape[0]))
    return solve_min_distance(srs, target, counter, start=start, backend=backend)


def _phi_of(res: SolveResult) -> float:
    # an empty SRS means the attacker already lies inside a capture region
    if res.status is Status.INFEASIBLE:
        return float("inf")
    return max(res.value, 0.0)


def single_attack_value(view: CoalitionView, domain: ConvexRegion, target: ConvexRegion,
                        counter: CheckCounter | None, backend: str | None = None):
    """Single-attack objective ``phi`` and the SRS point closest to the target.

    Returns ``(phi, waypoint)``; ``waypoint`` is None when the SRS is empty
    (``phi`` is then infinite).
    """
    res = solve_pair(view, domain, target, counter, backend)
    if res.status is Status.INFEASIBLE:
        return float("inf"), None
    return _phi_of(res), res.primal_q


def is_defense_winning(view: CoalitionView, domain: ConvexRegion, target: ConvexRegion,
                       counter: CheckCounter | None, eps_win: float = EPS_WIN,
                       backend: str | None = None) -> bool:
    phi, _ = single_attack_value(view, domain, target, counter, backend)
    return phi > eps_win


def _heading(speed: float, waypoint: np.ndarray, position: np.ndarray) -> np.ndarray:
    return float(speed) * normalize(waypoint - position)


def recovery_waypoint(view: CoalitionView, domain: ConvexRegion, target: ConvexRegion,
                      backend: str | None = None) -> SolveResult:
    """Projection of the attacker onto ``SRS ∩ target`` (not counted as a check)."""
    srs = view.srs(domain)
    frontiers = srs.atoms[len(domain.atoms):] if srs is not domain else ()
    region = _domain_target(domain, target).extended(frontiers)
    return solve_projection(view.attacker_position, region, None, backend=backend)


_JOINT: dict = {}


def _domain_target(domain: ConvexRegion, target: ConvexRegion) -> ConvexRegion:
    # the equality analysis of domain ∩ target is shared by every recovery solve
    key = (id(domain), id(target))
    hit = _JOINT.get(key)
    if hit is not None and hit[0] is domain and hit[1] is target:
        return hit[2]
    if len(_JOINT) > 64:
        _JOINT.clear()
    joint = domain.extended(target.atoms)
    _JOINT[key] = (domain, target, joint)
    return joint


def dmsdc_step(view: CoalitionView, domain: ConvexRegion, target: ConvexRegion,
               counter: CheckCounter | None, eps_win: float = EPS_WIN,
               backend: str | None = None) -> CoordinationOutcome:
    """One step of dual-mode switching defense coordination.

    Parameters
    ----------
    view : CoalitionView
        Coalition and attacker.
    domain, target : ConvexRegion
    counter : CheckCounter
        Incremented once for the min-distance solve.
    eps_win : float
        ``phi`` must exceed this for the winning branch.

    Returns
    -------
    CoordinationOutcome
        Defender velocities at full speed toward the waypoint.
    """
    res = solve_pair(view, domain, target, counter, backend)
    phi = _phi_of(res)
    warning = None
    if res.status is Status.INFEASIBLE:
        # captured already; steer straight at the attacker
        waypoint = view.attacker_position.copy()
        mode = Mode.WINNING
    elif phi > eps_win:
        waypoint = res.primal_q
        mode = Mode.WINNING
    else:
        rec = recovery_waypoint(view, domain, target, backend)
        if rec.status is Status.INFEASIBLE:
            warning = "recovery program infeasible at phi ~ 0; kept the winning waypoint"
            log.warning("%s (attacker %s)", warning, view.attacker_id)
            waypoint = res.primal_q
            mode = Mode.WINNING
        else:
            waypoint = rec.primal_q
            mode = Mode.RECOVERY
            phi = 0.0
    vel = {i: _heading(v, waypoint, p)
           for i, p, v in zip(view.defender_ids, view.defender_positions, view.max_speeds)}
    # keep mode and reported phi consistent
    if mode is Mode.WINNING and not phi > 0.0:
        phi = max(phi, np.nextafter(0.0, 1.0))
    return CoordinationOutcome(phi=phi, waypoint=waypoint, mode=mode,
                               defender_velocities=vel, result=res, warning=warning)


def _frontier_terms(view: CoalitionView, result: SolveResult):
    atoms = result.atoms[:result.split] if result.kind == "min_distance" else result.atoms
    idx = [k for k, a in enumerate(atoms) if isinstance(a, CaptureFrontier)]
    if len(idx) != len(view.defender_ids):
        raise InvalidInputError("solve result does not belong to this coalition")
    return [(atoms[k], float(result.multipliers[k])) for k in idx]


def value_gradients(view: CoalitionView, result: SolveResult):
    """Gradients of a pair's optimal value w.r.t. the agent positions.

    For a min-distance result ``phi`` the defender gradient is
    ``lam_i * dc_i/dd_i`` and the attacker gradient ``sum_i lam_i * dc_i/da``.
    For a recovery projection of the attacker the direct term
    ``-2 (xi_bar - a)`` is added to the attacker gradient.

    Returns ``(grad_defenders, grad_attacker)`` with ``grad_defenders`` a dict
    keyed by defender id.
    """
    if result.status is not Status.OPTIMAL:
        raise InvalidInputError("value gradients need an optimal solve result")
    q = result.primal_q
    g_d = {}
    g_a = np.zeros_like(q)
    for i, (atom, lam) in zip(view.defender_ids, _frontier_terms(view, result)):
        gd, ga = capture_frontier_param_gradients(atom, q)
        g_d[i] = lam * gd
        g_a += lam * ga
    if result.kind == "projection":
        g_a -= 2.0 * (q - view.attacker_position)
    return g_d, g_a


def optimal_attack_input(view: CoalitionView, domain: ConvexRegion, target: ConvexRegion,
                         counter: CheckCounter | None, outcome: CoordinationOutcome | None = None,
                         backend: str | None = None) -> np.ndarray:
    """Attacker heads at full speed for the coalition's waypoint.

    ``outcome`` may carry a DMSDC result already computed for the same view,
    which avoids solving twice.
    """
    if outcome is None:
        outcome = dmsdc_step(view, domain, target, counter, backend=backend)
    return _heading(view.attacker_max_speed, outcome.waypoint, view.attacker_position)


def straight_line_attack_input(attacker_position, attacker_max_speed: float,
                               target: ConvexRegion, backend: str | None = None) -> np.ndarray:
    """Full speed toward the nearest target point; zero once inside."""
    p = as_vec(attacker_position, target.dim)
    if target.contains(p, 0.0):
        return np.zeros_like(p)
    res = solve_projection(p, target, None, backend=backend)
    return _heading(attacker_max_speed, res.primal_q, p)

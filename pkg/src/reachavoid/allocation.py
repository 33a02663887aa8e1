"""Multi-attack defense allocation.

Defenders are grouped into coalitions, each guarding against one attacker.
A coalition-attacker pair is *feasible* (reward 1) when the coalition wins
the single-attack game against that attacker.  The allocation objective
``gamma`` counts feasible assigned pairs.

``hilp`` approximates the best conflict-free assignment through active
defense sets and irreducible sub-pairs, ``solve_ilp_exact`` solves the
restricted assignment problem exactly, and ``mdea`` wraps both with a
monotonicity guard plus a greedy pass for idle defenders.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import total_ordering
from itertools import combinations
from typing import Iterable, Mapping

import numpy as np

from .coordination import (EPS_WIN, AgentState, CoalitionView, CoordinationOutcome,
                           dmsdc_step, solve_pair)
from .errors import InternalConsistencyError, InvalidInputError
from .geometry import CaptureFrontier, ConvexRegion
from .solver import EPS_ACTIVE, CheckCounter, SolveResult, Status

log = logging.getLogger(__name__)

EXACT_MAX_DEFENDERS = 8
EXACT_MAX_ATTACKERS = 6


@total_ordering
@dataclass(frozen=True)
class Coalition:
    """Nonempty sorted set of defender ids."""

    defender_ids: tuple

    def __post_init__(self):
        ids = tuple(sorted(set(int(i) for i in self.defender_ids)))
        if not ids:
            raise InvalidInputError("a coalition needs at least one defender")
        object.__setattr__(self, "defender_ids", ids)

    def __iter__(self):
        return iter(self.defender_ids)

    def __len__(self):
        return len(self.defender_ids)

    def __lt__(self, other):
        return self.defender_ids < other.defender_ids

    def __repr__(self):
        return "Coalition(" + ",".join(map(str, self.defender_ids)) + ")"

    def isdisjoint(self, other) -> bool:
        return set(self.defender_ids).isdisjoint(other)


def coalition(*ids) -> Coalition:
    if len(ids) == 1 and isinstance(ids[0], Iterable):
        ids = tuple(ids[0])
    return Coalition(tuple(ids))


@dataclass
class CoalitionAssignment:
    """Sparse assignment: attacker id -> coalition."""

    pairs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pairs = {int(j): (c if isinstance(c, Coalition) else coalition(c))
                      for j, c in sorted(self.pairs.items())}
        self.validate()

    def validate(self) -> None:
        seen: set[int] = set()
        for j, c in self.pairs.items():
            if not seen.isdisjoint(c):
                raise InvalidInputError(f"defenders {sorted(seen & set(c))} assigned twice")
            seen.update(c)

    @property
    def defenders(self) -> set:
        return {i for c in self.pairs.values() for i in c}

    def attacker_of(self, defender_id: int):
        for j, c in self.pairs.items():
            if defender_id in c.defender_ids:
                return j
        return None

    def restricted(self, attackers) -> "CoalitionAssignment":
        keep = set(attackers)
        return CoalitionAssignment({j: c for j, c in self.pairs.items() if j in keep})

    def __len__(self):
        return len(self.pairs)

    def to_json(self) -> dict:
        return {str(j): list(c.defender_ids) for j, c in self.pairs.items()}


@dataclass
class PairEvaluation:
    coalition: Coalition
    attacker_id: int
    reward: int
    phi: float
    waypoint: np.ndarray | None
    ads: Coalition | None = None

    @property
    def key(self):
        return (self.coalition, self.attacker_id)


@dataclass
class MdeaContext:
    previous_assignment: CoalitionAssignment
    previous_active_set: frozenset


@dataclass(frozen=True)
class TeamState:
    """Positions and activity of every agent at one instant."""

    defenders: tuple
    attackers: tuple
    active: frozenset

    def __post_init__(self):
        object.__setattr__(self, "defenders", tuple(sorted(self.defenders, key=lambda a: a.agent_id)))
        object.__setattr__(self, "attackers", tuple(sorted(self.attackers, key=lambda a: a.agent_id)))
        object.__setattr__(self, "active", frozenset(self.active))

    @property
    def dim(self) -> int:
        agents = self.defenders + self.attackers
        return agents[0].position.shape[0]

    @property
    def defender_ids(self) -> tuple:
        return tuple(d.agent_id for d in self.defenders)

    @property
    def active_ids(self) -> tuple:
        return tuple(sorted(self.active))

    def defender(self, i: int) -> AgentState:
        for d in self.defenders:
            if d.agent_id == i:
                return d
        raise KeyError(i)

    def attacker(self, j: int) -> AgentState:
        for a in self.attackers:
            if a.agent_id == j:
                return a
        raise KeyError(j)

    def view(self, coal, j: int) -> CoalitionView:
        return CoalitionView.from_agents([self.defender(i) for i in coal], self.attacker(j))


# -- rewards and objective ----------------------------------------------------

def active_defense_set(view: CoalitionView, solve_result: SolveResult,
                       eps_active: float = EPS_ACTIVE) -> Coalition:
    """Defenders whose capture frontier is active at the waypoint."""
    frontiers = [(k, v) for k, (a, v) in enumerate(
        zip(solve_result.atoms[:solve_result.split], solve_result.atom_values))
        if isinstance(a, CaptureFrontier)]
    if len(frontiers) != len(view.defender_ids):
        raise InvalidInputError("solve result does not belong to this coalition")
    ids = [i for i, (_, v) in zip(view.defender_ids, frontiers) if abs(v) <= eps_active]
    if not ids:
        raise InternalConsistencyError(
            f"feasible pair with attacker {view.attacker_id} has an empty active defense set")
    return coalition(ids)


def evaluate_pair(state: TeamState, coal, j: int, domain: ConvexRegion, target: ConvexRegion,
                  counter: CheckCounter | None, with_ads: bool = True,
                  backend: str | None = None) -> PairEvaluation:
    """Reward of one pair; one check."""
    coal = coal if isinstance(coal, Coalition) else coalition(coal)
    view = state.view(coal, j)
    res = solve_pair(view, domain, target, counter, backend)
    if res.status is Status.INFEASIBLE:
        # empty SRS: the attacker sits inside a capture region
        return PairEvaluation(coal, j, int(j in state.active), float("inf"), None, None)
    phi = max(res.value, 0.0)
    reward = int(j in state.active and phi > EPS_WIN)
    ads = active_defense_set(view, res) if (reward and with_ads) else None
    return PairEvaluation(coal, j, reward, phi, res.primal_q, ads)


def gamma_value(assignment: CoalitionAssignment, evaluations) -> int:
    """Sum of rewards over assigned pairs.

    ``evaluations`` maps ``(coalition, attacker_id)`` to a PairEvaluation or
    to a 0/1 reward.
    """
    total = 0
    for j, c in assignment.pairs.items():
        try:
            ev = evaluations[(c, j)]
        except KeyError:
            raise InvalidInputError(f"no reward known for pair ({c}, {j})") from None
        total += int(ev.reward if isinstance(ev, PairEvaluation) else ev)
    return total


# -- irreducible sub-pairs ----------------------------------------------------

def irreducible_subpairs(coal, attacker_id: int, state: TeamState, domain: ConvexRegion,
                         target: ConvexRegion, counter: CheckCounter | None,
                         evaluations: dict | None = None, backend: str | None = None) -> list:
    """Irreducible feasible sub-pairs of a feasible pair.

    Subsets of size 1..n of the shrinking residual set are checked in
    lexicographic order; every feasible one is emitted and its members leave
    the residual set.  When the coalition itself has size ``i`` at level
    ``i`` it is emitted without a solve.  Returns a list of
    ``(Coalition, attacker_id)`` in emission order; ``evaluations`` (if
    given) receives the PairEvaluation of each solved subset.
    """
    coal = coal if isinstance(coal, Coalition) else coalition(coal)
    n = state.dim
    out = []
    residual = list(coal.defender_ids)
    for i in range(1, n + 1):
        if len(residual) < i:
            break
        if len(coal) == i:
            out.append((coal, attacker_id))
            break
        for sub in combinations(tuple(residual), i):
            if not set(sub) <= set(residual):
                continue
            ev = evaluate_pair(state, sub, attacker_id, domain, target, counter,
                               with_ads=False, backend=backend)
            if evaluations is not None:
                evaluations[ev.key] = ev
            if ev.reward:
                out.append((ev.coalition, attacker_id))
                residual = [d for d in residual if d not in sub]
    return out


# -- exact assignment ---------------------------------------------------------

def solve_ilp_exact(candidate_pairs) -> tuple:
    """Best conflict-free, redundancy-free subset of the candidate pairs.

    Branch and bound over attackers in increasing id; each attacker tries its
    coalitions in lexicographic order and then "unassigned".  Only strict
    improvements replace the incumbent, so among optima the lexicographically
    smallest ``(attacker_id, coalition)`` choice wins.

    Returns ``(CoalitionAssignment, value)``.
    """
    by_att: dict[int, list] = {}
    for ev in candidate_pairs:
        if ev.reward:
            by_att.setdefault(ev.attacker_id, set()).add(ev.coalition)
    order = sorted(by_att)
    options = [sorted(by_att[j]) for j in order]
    best = {"value": -1, "pairs": {}}
    chosen: dict[int, Coalition] = {}

    def dfs(k: int, used: frozenset, value: int):
        if value + (len(order) - k) <= best["value"]:
            return
        if k == len(order):
            best["value"] = value
            best["pairs"] = dict(chosen)
            return
        j = order[k]
        for c in options[k]:
            if used.isdisjoint(c.defender_ids):
                chosen[j] = c
                dfs(k + 1, used | set(c.defender_ids), value + 1)
                del chosen[j]
        dfs(k + 1, used, value)

    dfs(0, frozenset(), 0)
    return CoalitionAssignment(best["pairs"]), max(best["value"], 0)


def exact_allocation(state: TeamState, domain: ConvexRegion, target: ConvexRegion,
                     counter: CheckCounter | None, max_size: int | None = None,
                     backend: str | None = None) -> tuple:
    """Optimal assignment over every coalition of size <= n (small instances only).

    Returns ``(assignment, value, evaluations)``.
    """
    n = state.dim if max_size is None else max_size
    ids = state.defender_ids
    if len(ids) > EXACT_MAX_DEFENDERS or len(state.active) > EXACT_MAX_ATTACKERS:
        raise InvalidInputError(
            f"exact allocation is limited to {EXACT_MAX_DEFENDERS} defenders and "
            f"{EXACT_MAX_ATTACKERS} attackers")
    evaluations = {}
    for j in state.active_ids:
        for size in range(1, min(n, len(ids)) + 1):
            for sub in combinations(ids, size):
                ev = evaluate_pair(state, sub, j, domain, target, counter,
                                   with_ads=False, backend=backend)
                evaluations[ev.key] = ev
    assignment, value = solve_ilp_exact(list(evaluations.values()))
    return assignment, value, evaluations


# -- HILP ---------------------------------------------------------------------

@dataclass
class HilpResult:
    assignment: CoalitionAssignment
    check_count: int
    iterations: int
    mr_empty_after_first: bool
    max_ads_size: int
    evaluations: dict

    @property
    def gamma(self) -> int:
        return gamma_value(self.assignment, self.evaluations)


def hilp(state: TeamState, domain: ConvexRegion, target: ConvexRegion,
         counter: CheckCounter | None = None, backend: str | None = None) -> HilpResult:
    """Hierarchical restriction of the assignment problem.

    Each round checks ``(N_r, j)`` for every remaining attacker, reduces the
    feasible ones to the irreducible sub-pairs of their active defense set,
    solves the assignment exactly over that pool and removes the assigned
    defenders and attackers.
    """
    local = CheckCounter()
    n_rem = list(state.defender_ids)
    m_rem = list(state.active_ids)
    pairs: dict[int, Coalition] = {}
    evaluations: dict = {}
    iterations = 0
    mr_empty_first = False
    max_ads = 0
    while n_rem and m_rem:
        iterations += 1
        pool = []
        for j in list(m_rem):
            ev = evaluate_pair(state, n_rem, j, domain, target, local, backend=backend)
            evaluations[ev.key] = ev
            if not ev.reward:
                m_rem.remove(j)
                continue
            ads = ev.ads
            max_ads = max(max_ads, len(ads))
            for key in irreducible_subpairs(ads, j, state, domain, target, local,
                                            evaluations, backend=backend):
                if key not in evaluations:
                    # the ADS itself: feasible with the same value as (N_r, j)
                    evaluations[key] = PairEvaluation(key[0], j, 1, ev.phi, ev.waypoint, ads)
                pool.append(evaluations[key])
        if not pool:
            if iterations == 1:
                mr_empty_first = not m_rem
            break
        sol, _ = solve_ilp_exact(pool)
        pairs.update(sol.pairs)
        n_rem = [i for i in n_rem if i not in sol.defenders]
        m_rem = [j for j in m_rem if j not in sol.pairs]
        if iterations == 1:
            mr_empty_first = not m_rem
    if iterations == 0:
        mr_empty_first = not m_rem
    if counter is not None:
        counter.increment(local.count)
    return HilpResult(CoalitionAssignment(pairs), local.count, iterations,
                      mr_empty_first, max_ads, evaluations)


def check_bound(n: int, m_active: int) -> float:
    """Upper bound on HILP checks when every active defense set has size <= n."""
    return 2 ** (n - 1) * m_active * (1 + m_active)


# -- MDEA ---------------------------------------------------------------------

@dataclass
class MdeaResult:
    assignment: CoalitionAssignment
    part1: CoalitionAssignment
    gamma: int
    adopted: bool
    context: MdeaContext
    check_count: int = 0


def _nonzero_columns(assignment: CoalitionAssignment) -> int:
    return len(assignment.pairs)


def greedy_fill(state: TeamState, assignment: CoalitionAssignment) -> CoalitionAssignment:
    """Send each idle defender to the nearest active attacker without defenders.

    Defenders sent to the same attacker form one coalition.  Ties go to the
    smallest attacker id.
    """
    busy = assignment.defenders
    idle = [i for i in state.defender_ids if i not in busy]
    free = [j for j in state.active_ids if j not in assignment.pairs]
    pairs = dict(assignment.pairs)
    if not idle or not free:
        return CoalitionAssignment(pairs)
    groups: dict[int, list] = {}
    for i in idle:
        p = state.defender(i).position
        dists = [float(np.linalg.norm(p - state.attacker(j).position)) for j in free]
        jmin = free[int(np.argmin(dists))]
        groups.setdefault(jmin, []).append(i)
    for j, ids in groups.items():
        pairs[j] = coalition(ids)
    return CoalitionAssignment(pairs)


def mdea(state: TeamState, hilp_assignment, context: MdeaContext | None,
         domain: ConvexRegion, target: ConvexRegion, counter: CheckCounter | None = None,
         hilp_gamma: int | None = None, backend: str | None = None) -> MdeaResult:
    """Monotone allocation update followed by the greedy pass.

    Part I adopts the HILP assignment on the first call, and afterwards only
    when its objective strictly exceeds that of the previous Part I
    assignment re-evaluated at the current state, with columns of attackers
    no longer active zeroed.  Part II hands idle defenders to the nearest
    attacker left without defenders.

    Parameters
    ----------
    hilp_assignment : CoalitionAssignment or HilpResult
    context : MdeaContext or None
        Previous Part I assignment and active set; None on the first call.
    counter : CheckCounter, optional
        Receives the checks spent re-evaluating the previous assignment.
    """
    if isinstance(hilp_assignment, HilpResult):
        hilp_gamma = hilp_assignment.gamma if hilp_gamma is None else hilp_gamma
        hilp_assignment = hilp_assignment.assignment
    active = frozenset(state.active)
    if not active:
        empty = CoalitionAssignment()
        return MdeaResult(empty, empty, 0, context is None, MdeaContext(empty, active))
    hilp_assignment = hilp_assignment.restricted(active)
    if hilp_gamma is None:
        hilp_gamma = _nonzero_columns(hilp_assignment)
    local = CheckCounter()
    if context is None:
        part1, gamma, adopted = hilp_assignment, hilp_gamma, True
    else:
        prev = context.previous_assignment.restricted(active)
        evals = {}
        for j, c in prev.pairs.items():
            ev = evaluate_pair(state, c, j, domain, target, local, with_ads=False, backend=backend)
            evals[ev.key] = ev
        prev_gamma = gamma_value(prev, evals)
        if prev_gamma != _nonzero_columns(prev):
            log.warning("previous assignment lost %d feasible pair(s) since the last allocation",
                        _nonzero_columns(prev) - prev_gamma)
        if hilp_gamma > prev_gamma:
            part1, gamma, adopted = hilp_assignment, hilp_gamma, True
        else:
            part1, gamma, adopted = prev, prev_gamma, False
    if counter is not None:
        counter.increment(local.count)
    final = greedy_fill(state, part1)
    return MdeaResult(final, part1, gamma, adopted, MdeaContext(part1, active), local.count)


# -- control inputs -----------------------------------------------------------

def defense_inputs(assignment: CoalitionAssignment, state: TeamState, domain: ConvexRegion,
                   target: ConvexRegion, counter: CheckCounter | None,
                   outcomes: dict | None = None, backend: str | None = None) -> dict:
    """Per-defender velocities: DMSDC for every assigned active pair, zero otherwise.

    ``outcomes`` (if given) receives the CoordinationOutcome of each pair,
    keyed by attacker id.
    """
    vel = {i: np.zeros(state.dim) for i in state.defender_ids}
    for j, c in assignment.pairs.items():
        if j not in state.active:
            continue
        out: CoordinationOutcome = dmsdc_step(state.view(c, j), domain, target, counter,
                                              backend=backend)
        vel.update(out.defender_velocities)
        if outcomes is not None:
            outcomes[j] = out
    return vel

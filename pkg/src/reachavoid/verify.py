"""Invariant checks on a single scenario."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocation import check_bound
from .coordination import solve_pair
from .engine import AttackerStatus, ScenarioConfig, initial_state, run_game, team_state
from .solver import Status, kkt_residual, solve_min_distance

KKT_TOL = 1e-6
MULTISTART_TOL = 1e-6
PHI_STEP_TOL = 1e-2


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}" + (f": {self.detail}" if self.detail else "")


def _solver_checks(cfg: ScenarioConfig, rng) -> list:
    team = team_state(initial_state(cfg), cfg)
    out = []
    worst_kkt, worst_ms = 0.0, 0.0
    for j in team.active_ids:
        view = team.view(team.defender_ids, j)
        res = solve_pair(view, cfg.domain, cfg.target, None)
        if res.status is not Status.OPTIMAL:
            continue
        srs = view.srs(cfg.domain)
        worst_kkt = max(worst_kkt, kkt_residual(res, (srs, cfg.target)))
        if res.value > 1e-6:
            lo, hi = cfg.domain.box_bounds or (None, None)
            for _ in range(3):
                if lo is None:
                    break
                s = (rng.uniform(lo, hi), rng.uniform(lo, hi))
                alt = solve_min_distance(srs, cfg.target, None, start=s)
                if alt.status is Status.OPTIMAL:
                    worst_ms = max(worst_ms, abs(alt.value - res.value))
    out.append(Check("solver KKT residual", worst_kkt <= KKT_TOL, f"max {worst_kkt:.2e}"))
    out.append(Check("solver multi-start agreement", worst_ms <= MULTISTART_TOL, f"max {worst_ms:.2e}"))
    return out


def _game_checks(cfg: ScenarioConfig, attack: str) -> list:
    tr = run_game(cfg, "mdea", attack)
    M = len(cfg.attackers)
    out = []
    cons = all(s.count(AttackerStatus.CAPTURED) + s.count(AttackerStatus.REACHED) + len(s.active) == M
               for s in tr.states)
    out.append(Check("status conservation", cons))
    s = tr.summary()
    out.append(Check("payoff bound", s["payoff"] <= s["payoff_bound"],
                     f"payoff {s['payoff']} bound {s['payoff_bound']}"))
    tot = [a.gamma + a.n_captured for a in tr.allocations]
    mono = all(b >= a for a, b in zip(tot, tot[1:]))
    out.append(Check("gamma + captures non-decreasing", mono))
    flags = [a.check_count < check_bound(cfg.dim, a.n_active)
             for a in tr.allocations if a.n_active and a.max_ads_size <= cfg.dim]
    out.append(Check("check-number bound", all(flags), f"{len(flags)} allocations checked"))
    frozen = True
    for a, b in zip(tr.states, tr.states[1:]):
        for j, st in enumerate(a.attacker_status):
            if st is not AttackerStatus.ACTIVE and not np.array_equal(a.attacker_positions[j],
                                                                       b.attacker_positions[j]):
                frozen = False
    out.append(Check("resolved attackers frozen", frozen))
    return out


def _single_attack_checks(cfg: ScenarioConfig, attack: str) -> list:
    tr = run_game(cfg, "coalition", attack)
    phi = np.array(tr.phi)
    if not phi.size or not phi[0] > 0.0:
        return [Check("single-attack monotonicity", True, "phi(0) = 0, not applicable")]
    drop = float(np.max(phi[:-1] - phi[1:])) if phi.size > 1 else 0.0
    return [Check("single-attack monotonicity", drop <= PHI_STEP_TOL, f"max drop {drop:.2e}"),
            Check("single-attack no entry", tr.reached == 0)]


def verify_scenario(cfg: ScenarioConfig, attack: str = "optimal", seed: int = 0) -> list:
    """Run every applicable invariant on one scenario and return the checks."""
    rng = np.random.default_rng(seed)
    checks = _solver_checks(cfg, rng)
    if cfg.defenders and cfg.attackers:
        checks += _game_checks(cfg, attack)
        if len(cfg.attackers) == 1:
            checks += _single_attack_checks(cfg, attack)
    return checks

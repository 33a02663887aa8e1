import csv
import io
import json

import numpy as np
import pytest

from reachavoid.engine import (AttackerStatus, JointState, ScenarioConfig, initial_state, payoff,
                               run_game, step, trace_csv, trace_summary_json, update_status)
from reachavoid.errors import ConfigError, InvalidInputError
from reachavoid.geometry import ball, box

DOM = box([-5, -5], [5, 5])
TGT = ball([0, 0], 1.0)


def cfg(defenders, attackers, **kw):
    return ScenarioConfig(2, DOM, TGT, defenders, attackers, **kw)


def test_step_examples():
    c = cfg([((0, 0), 1.0, 0.1)], [((4.95, 0), 1.0)], dt=0.1)
    s0 = initial_state(c)
    s = step(s0, {}, {}, c)
    assert np.array_equal(s.defender_positions, s0.defender_positions)
    s = step(s0, {1: [1, 0]}, {1: [1, 0]}, c)
    assert np.allclose(s.defender_positions[0], [0.1, 0])
    assert np.allclose(s.attacker_positions[0], [5, 0])
    assert s.time == pytest.approx(0.1)


def test_step_speed_violations():
    c = cfg([((0, 0), 1.0, 0.1)], [((4, 4), 1.0)])
    s0 = initial_state(c)
    with pytest.raises(InvalidInputError):
        step(s0, {1: [2, 0]}, {}, c)
    with pytest.raises(InvalidInputError):
        step(s0, {}, {1: [0, 1.5]}, c)
    frozen = JointState(0.0, s0.defender_positions, s0.attacker_positions, (AttackerStatus.CAPTURED,))
    with pytest.raises(InvalidInputError):
        step(frozen, {}, {1: [0, 0.5]}, c)


@pytest.mark.parametrize("dist, expected", [(1.0, AttackerStatus.ACTIVE), (0.9, AttackerStatus.CAPTURED)])
def test_capture_strict(dist, expected):
    c = cfg([((3, 0), 1.0, 1.0)], [((3 - dist, 3), 1.0)])
    s = initial_state(c)
    s = JointState(0.0, s.defender_positions, np.array([[3.0, dist]]), s.attacker_status)
    assert update_status(s, c).attacker_status[0] is expected


def test_reached_and_capture_precedence():
    c = cfg([((4, 4), 1.0, 0.5)], [((3, 3), 1.0)])
    s = initial_state(c)
    s = JointState(0.0, s.defender_positions, np.array([[0.0, 0.5]]), s.attacker_status)
    assert update_status(s, c).attacker_status[0] is AttackerStatus.REACHED
    s = JointState(0.0, np.array([[0.0, 0.8]]), np.array([[0.0, 0.5]]), s.attacker_status)
    assert update_status(s, c).attacker_status[0] is AttackerStatus.CAPTURED


def test_config_validation():
    with pytest.raises(ConfigError, match="speed ratio"):
        cfg([((3, 3), 1.0, 0.1)], [((-3, 3), 2.0)]).validate()
    with pytest.raises(ConfigError, match="inside the target"):
        cfg([((3, 3), 1.0, 0.1)], [((0, 0), 1.0)]).validate()
    with pytest.raises(ConfigError, match="capture radius"):
        cfg([((3, 3), 1.0, 1.0)], [((3, 3.5), 1.0)]).validate()
    with pytest.raises(ConfigError, match="allocation_period"):
        cfg([], [], dt=0.1, allocation_period=0.05).validate()
    with pytest.raises(ConfigError, match="contained"):
        ScenarioConfig(2, DOM, ball([6, 0], 2.0), [], []).validate()


def test_zero_attackers():
    tr = run_game(cfg([((3, 3), 1.0, 0.1)], []))
    assert tr.termination_reason == "resolved" and payoff(tr) == 0 and len(tr.states) == 1


def test_winning_single_attack_no_entry():
    c = cfg([((0, -2.5), 1.0, 0.3)], [((0, -4.5), 1.0)], t_max=20)
    tr = run_game(c, "coalition", "optimal")
    assert tr.phi[0] > 0
    assert tr.reached == 0


def test_undefended_straight_entry():
    c = cfg([((4.5, 4.5), 1.0, 0.1)], [((-3, -3), 1.0)], t_max=20)
    tr = run_game(c, "mdea", "straight")
    assert payoff(tr) == 1 and tr.reached == 1


def test_mixed_payoff_and_invariants():
    c = cfg([((4.5, 4.5), 1.0, 0.3), ((0, -2.2), 1.0, 0.3)], [((-3, -3), 1.0), ((0, -4), 1.0)], t_max=30)
    tr = run_game(c, "mdea", "optimal")
    M = 2
    for s in tr.states:
        assert s.count(AttackerStatus.CAPTURED) + s.count(AttackerStatus.REACHED) + len(s.active) == M
        assert all(DOM.contains(p) for p in s.attacker_positions)
    for a, b in zip(tr.states, tr.states[1:]):
        for j, st in enumerate(a.attacker_status):
            if st is not AttackerStatus.ACTIVE:
                assert np.array_equal(a.attacker_positions[j], b.attacker_positions[j])
    s = tr.summary()
    assert s["payoff"] <= s["payoff_bound"]
    tot = [g + n for g, n in zip(s["gamma"], s["n_c"])]
    assert tot == sorted(tot)


def test_determinism_and_csv():
    c = cfg([((2, 2), 1.0, 0.3), ((-2, 2), 1.2, 0.3)], [((-4, 4), 1.0), ((4, -4), 1.0)],
            t_max=3, rng_seed=5)
    t1, t2 = run_game(c, "mdea", "random"), run_game(c, "mdea", "random")
    assert trace_csv(t1) == trace_csv(t2)
    assert trace_summary_json(t1) == trace_summary_json(t2)
    rows = list(csv.reader(io.StringIO(trace_csv(t1))))
    assert rows[0] == ["t", "agent_id", "kind", "x", "y", "status"]
    assert len(rows) == 1 + 4 * len(t1.states)
    s = json.loads(trace_summary_json(t1))
    for key in ("payoff", "captures", "reached", "timeouts", "gamma", "n_c", "check_count",
                "termination_reason"):
        assert key in s


def test_timeout_reported():
    c = cfg([((0, -2.5), 1.0, 0.0)], [((0, -4.5), 1.0)], t_max=0.5)
    tr = run_game(c, "coalition", "random")
    assert tr.termination_reason == "timeout" and tr.timed_out == 1


def test_initial_only_allocates_once():
    c = cfg([((2, 2), 1.0, 0.3)], [((-4, 4), 1.0)], t_max=2)
    assert len(run_game(c, "initial", "straight").allocations) == 1
    assert len(run_game(c, "mdea", "straight").allocations) > 1
    assert run_game(c, "none", "straight").allocations == []


def test_coalition_policy_needs_one_attacker():
    c = cfg([((2, 2), 1.0, 0.3)], [((-4, 4), 1.0), ((4, -4), 1.0)])
    with pytest.raises(InvalidInputError):
        run_game(c, "coalition")

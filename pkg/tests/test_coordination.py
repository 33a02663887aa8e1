import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reachavoid.coordination import (EPS_WIN, Mode, dmsdc_step, is_defense_winning,
                                     optimal_attack_input, recovery_waypoint, single_attack_value,
                                     solve_pair, straight_line_attack_input, value_gradients)
from reachavoid.errors import InvalidInputError
from reachavoid.geometry import ball, box, normalize
from reachavoid.solver import CheckCounter

from conftest import make_view


@pytest.fixture
def bis_view():
    return make_view([[0, 2]], [0, -2])


def test_single_attack_value_bisector(bis_view, dom2, bisector_target):
    phi, xi = single_attack_value(bis_view, dom2, bisector_target, None)
    assert phi == pytest.approx(4.0, abs=1e-6)
    assert np.allclose(xi, [0, 0], atol=1e-6)
    assert is_defense_winning(bis_view, dom2, bisector_target, None)


def test_attacker_inside_target(dom2, bisector_target):
    v = make_view([[4, -4]], [0, 3])
    phi, xi = single_attack_value(v, dom2, bisector_target, None)
    assert phi == pytest.approx(0.0, abs=1e-9)
    assert bisector_target.contains(xi, 1e-6)
    assert not is_defense_winning(v, dom2, bisector_target, None)


def test_empty_coalition_phi_zero(dom2, bisector_target):
    v = make_view([], [-4, -4])
    phi, _ = single_attack_value(v, dom2, bisector_target, None)
    assert phi == pytest.approx(0.0, abs=1e-9)


def test_eps_win_strict(monkeypatch, bis_view, dom2, bisector_target):
    import reachavoid.coordination as co
    monkeypatch.setattr(co, "single_attack_value", lambda *a, **k: (EPS_WIN / 2, np.zeros(2)))
    assert not co.is_defense_winning(bis_view, dom2, bisector_target, None)
    monkeypatch.setattr(co, "single_attack_value", lambda *a, **k: (EPS_WIN, np.zeros(2)))
    assert not co.is_defense_winning(bis_view, dom2, bisector_target, None)


def test_dmsdc_winning(bis_view, dom2, bisector_target):
    c = CheckCounter()
    out = dmsdc_step(bis_view, dom2, bisector_target, c)
    assert out.mode is Mode.WINNING and out.phi > 0
    assert np.allclose(out.defender_velocities[1], [0, -1], atol=1e-6)
    assert c.count == 1
    u = optimal_attack_input(bis_view, dom2, bisector_target, None, out)
    assert np.allclose(u, [0, 1], atol=1e-6)


def test_defender_at_waypoint_stays():
    from reachavoid.coordination import _heading
    w = np.array([0.5, -1.0])
    assert np.array_equal(_heading(1.0, w, w.copy()), np.zeros(2))


def test_dmsdc_recovery_direction(dom2, bisector_target):
    # defender far away: attacker can enter, defenders head for the projection xi_bar
    v = make_view([[4, -4]], [0, 0.5], gammas=[1.2], radii=[0.1])
    out = dmsdc_step(v, dom2, bisector_target, None)
    assert out.mode is Mode.RECOVERY and out.phi == 0.0
    rec = recovery_waypoint(v, dom2, bisector_target)
    assert np.allclose(out.waypoint, rec.primal_q)
    assert np.allclose(out.defender_velocities[1], 1.2 * normalize(rec.primal_q - np.array([4.0, -4.0])))
    u = optimal_attack_input(v, dom2, bisector_target, None)
    assert np.allclose(u, normalize(rec.primal_q - np.array([0.0, 0.5])))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-4.5, 4.5), min_size=4, max_size=4), st.floats(1.0, 1.5), st.floats(0.0, 0.5))
def test_mode_consistency(xy, g, r):
    d, a = np.array(xy[:2]), np.array(xy[2:])
    if np.linalg.norm(d - a) <= r:
        return
    out = dmsdc_step(make_view([d], a, [g], [r]), box([-5, -5], [5, 5]), ball([0, 3], 1.0), None)
    assert (out.mode is Mode.WINNING) == (out.phi > 0)
    for vel in out.defender_velocities.values():
        assert np.linalg.norm(vel) <= g + 1e-12


@pytest.mark.parametrize("p, target, expected", [
    ((0, 0), box([-5, 5], [5, 5]), (0, 1)),
    ((0, 5), box([-5, 5], [5, 5]), (0, 0)),
    ((3, 4), ball([0, 0], 0.0), (-0.6, -0.8)),
])
def test_straight_line(p, target, expected):
    assert np.allclose(straight_line_attack_input(p, 1.0, target), expected, atol=1e-6)


def test_value_gradients_match_fd(dom2):
    tgt = ball([0, 0], 1.0)
    d, a = [np.array([2.0, 1.5]), np.array([-1.0, 2.5])], np.array([0.3, 3.8])
    v = make_view(d, a, [1.2, 1.0], [0.2, 0.1])
    res = solve_pair(v, dom2, tgt, None)
    gd, ga = value_gradients(v, res)
    h = 1e-5
    for c in range(2):
        e = np.zeros(2)
        e[c] = h
        fp = solve_pair(make_view(d, a + e, [1.2, 1.0], [0.2, 0.1]), dom2, tgt, None).value
        fm = solve_pair(make_view(d, a - e, [1.2, 1.0], [0.2, 0.1]), dom2, tgt, None).value
        assert ga[c] == pytest.approx((fp - fm) / (2 * h), rel=1e-4, abs=1e-6)
    assert set(gd) == {1, 2}


def test_view_validation():
    with pytest.raises(InvalidInputError):
        make_view([[0, 1]], [0, 0], gammas=[0.5])
    with pytest.raises(InvalidInputError):
        make_view([[0, 1], [1, 1]], [0, 0], ids=(2, 1))

import itertools

import numpy as np
import pytest

from reachavoid.allocation import (Coalition, CoalitionAssignment, MdeaContext, PairEvaluation,
                                   active_defense_set, check_bound, coalition, defense_inputs,
                                   evaluate_pair, exact_allocation, gamma_value, greedy_fill, hilp,
                                   irreducible_subpairs, mdea, solve_ilp_exact)
from reachavoid.coordination import dmsdc_step, solve_pair
from reachavoid.errors import InvalidInputError
from reachavoid.geometry import ball, box
from reachavoid.solver import CheckCounter

from conftest import make_team, make_view

DOM = box([-5, -5], [5, 5])
TGT = ball([0, 3], 1.0)


def ev(c, j, reward=1):
    return PairEvaluation(coalition(c), j, reward, 1.0 if reward else 0.0, None)


def test_coalition_and_assignment_validation():
    assert coalition(3, 1) == coalition([1, 3])
    with pytest.raises(InvalidInputError):
        CoalitionAssignment({1: coalition(1, 2), 2: coalition(2)})
    a = CoalitionAssignment({2: [3], 1: [1, 2]})
    assert list(a.pairs) == [1, 2] and a.attacker_of(3) == 2 and a.attacker_of(9) is None


def test_gamma_value():
    assert gamma_value(CoalitionAssignment(), {}) == 0
    a = CoalitionAssignment({1: [1], 2: [2]})
    assert gamma_value(a, {(coalition(1), 1): 1, (coalition(2), 2): 0}) == 1
    with pytest.raises(InvalidInputError):
        gamma_value(a, {(coalition(1), 1): 1})


def test_ads_examples():
    v = make_view([[0, 2], [10, 10]], [0, -2])
    res = solve_pair(v, DOM, TGT, None)
    assert active_defense_set(v, res) == coalition(1)
    pinch = make_view([[-1, 2], [1, 2]], [0, -2])
    assert active_defense_set(pinch, solve_pair(pinch, DOM, TGT, None)) == coalition(1, 2)
    single = make_view([[0, 2]], [0, -2])
    assert active_defense_set(single, solve_pair(single, DOM, TGT, None)) == coalition(1)


def test_ads_keeps_value():
    team = make_team([[-1, 2], [1, 2], [4, -4], [-4, 4]], [[0, -2]])
    full = evaluate_pair(team, (1, 2, 3, 4), 1, DOM, TGT, None)
    sub = evaluate_pair(team, full.ads, 1, DOM, TGT, None)
    assert sub.reward == 1 and sub.phi == pytest.approx(full.phi, abs=1e-6)


def test_irreducible_singleton_no_solve():
    team = make_team([[0, 2]], [[0, -2]])
    c = CheckCounter()
    assert irreducible_subpairs((1,), 1, team, DOM, TGT, c) == [(coalition(1), 1)]
    assert c.count == 0


def test_irreducible_two_singletons():
    team = make_team([[0, 2], [0.5, 2]], [[0, -2]])
    out = irreducible_subpairs((1, 2), 1, team, DOM, TGT, None)
    assert out == [(coalition(1), 1), (coalition(2), 1)]


def test_irreducible_flanking_pair():
    team = make_team([[-3, 0], [3, 0]], [[0, -2]])
    for i in (1, 2):
        assert evaluate_pair(team, (i,), 1, DOM, TGT, None).reward == 0
    assert irreducible_subpairs((1, 2), 1, team, DOM, TGT, None) == [(coalition(1, 2), 1)]


def test_ilp_exact_examples():
    assert solve_ilp_exact([]) == (CoalitionAssignment(), 0)
    sol, val = solve_ilp_exact([ev((1,), 2), ev((1,), 1)])
    assert val == 1 and sol.pairs == {1: coalition(1)}
    sol, val = solve_ilp_exact([ev((1, 2), 1), ev((1,), 1), ev((2,), 2)])
    assert val == 2 and sol.pairs == {1: coalition(1), 2: coalition(2)}


def _brute_force(cands):
    best = 0
    feas = [c for c in cands if c.reward]
    for k in range(len(feas) + 1):
        for combo in itertools.combinations(feas, k):
            atts = [c.attacker_id for c in combo]
            used = [i for c in combo for i in c.coalition.defender_ids]
            if len(set(atts)) == len(atts) and len(set(used)) == len(used):
                best = max(best, len(combo))
    return best


def test_ilp_matches_enumeration(rng):
    for _ in range(50):
        cands = []
        for _ in range(int(rng.integers(1, 12))):
            size = int(rng.integers(1, 3))
            c = tuple(sorted(rng.choice(np.arange(1, 6), size, replace=False).tolist()))
            cands.append(ev(c, int(rng.integers(1, 5)), int(rng.random() < 0.8)))
        sol, val = solve_ilp_exact(cands)
        assert val == _brute_force(cands)
        assert len(sol) == val


def test_hilp_single_pair_count():
    team = make_team([[0, 2]], [[0, -2]])
    c = CheckCounter()
    res = hilp(team, DOM, TGT, c)
    assert res.assignment.pairs == {1: coalition(1)} and res.gamma == 1
    assert res.check_count == 1 == c.count


def test_hilp_no_feasible_pairs():
    team = make_team([[4, -4]], [[0, 1.5]])
    res = hilp(team, DOM, TGT)
    assert len(res.assignment) == 0 and res.gamma == 0


def test_hilp_disjoint_ads_matches_exact():
    team = make_team([[-3, 2], [3, 2], [0, 2.5]], [[-3, -1], [3, -1], [0, -3]])
    res = hilp(team, DOM, TGT)
    _, val, _ = exact_allocation(team, DOM, TGT, None)
    assert res.mr_empty_after_first
    assert res.gamma == val
    assert res.check_count < check_bound(2, 3)


def test_check_bound():
    assert check_bound(2, 3) == 2 * 3 * 4
    assert check_bound(3, 1) == 8


def test_exact_allocation_guard():
    team = make_team([[0, 0]] * 9, [[1, 1]])
    with pytest.raises(InvalidInputError):
        exact_allocation(team, DOM, TGT, None)


def test_greedy_nearest():
    team = make_team([[0, 0]], [[1, 0], [5, 0]])
    out = greedy_fill(team, CoalitionAssignment())
    assert out.pairs == {1: coalition(1)}


def test_mdea_adopt_and_keep():
    team = make_team([[0, 2], [0.5, 2]], [[0, -2], [4, -3]])
    ctx = MdeaContext(CoalitionAssignment({1: [1]}), frozenset({1, 2}))
    new = CoalitionAssignment({1: [1], 2: [2]})
    res = mdea(team, new, ctx, DOM, TGT, hilp_gamma=2)
    assert res.adopted and res.part1 == new
    same = CoalitionAssignment({1: [2]})
    res = mdea(team, same, ctx, DOM, TGT, hilp_gamma=1)
    assert not res.adopted and res.part1.pairs == {1: coalition(1)}
    assert mdea(make_team([[0, 0]], [[1, 1]], active=()), new, ctx, DOM, TGT).assignment.pairs == {}


def test_mdea_anti_oscillation():
    team = make_team([[0, 2], [0.5, 2]], [[0, -2]])
    first = mdea(team, hilp(team, DOM, TGT), None, DOM, TGT)
    ctx = first.context
    for _ in range(3):
        nxt = mdea(team, hilp(team, DOM, TGT), ctx, DOM, TGT)
        assert nxt.assignment == first.assignment
        ctx = nxt.context


def test_defense_inputs():
    team = make_team([[0, 2], [3, 3]], [[0, -2], [-4, -4]])
    empty = defense_inputs(CoalitionAssignment(), team, DOM, TGT, None)
    assert all(np.array_equal(v, np.zeros(2)) for v in empty.values())
    asg = CoalitionAssignment({1: [1], 2: [2]})
    got = defense_inputs(asg, team, DOM, TGT, None)
    for j, i in ((1, 1), (2, 2)):
        single = dmsdc_step(team.view((i,), j), DOM, TGT, None)
        assert np.allclose(got[i], single.defender_velocities[i])

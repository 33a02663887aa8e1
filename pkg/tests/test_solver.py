import dataclasses
import os
import subprocess
import sys

import numpy as np
import pytest

from reachavoid.errors import InvalidInputError
from reachavoid.geometry import Affine, Ball, CaptureFrontier, ConvexRegion, ball, box, build_srs
from reachavoid.solver import (AVAILABLE_BACKENDS, CheckCounter, Status, active_set, kkt_residual,
                               solve_min_distance, solve_projection)


@pytest.fixture
def bisector(dom2, bisector_target):
    srs = build_srs([[0, 2]], [0, -2], [1.0], [0.0], dom2)
    return srs, bisector_target


@pytest.fixture(params=AVAILABLE_BACKENDS)
def backend(request):
    return request.param


def test_bisector_case(bisector, backend):
    srs, tgt = bisector
    c = CheckCounter()
    res = solve_min_distance(srs, tgt, c, backend=backend)
    assert res.status is Status.OPTIMAL
    assert res.value == pytest.approx(4.0, abs=1e-6)
    assert np.allclose(res.primal_q, [0, 0], atol=1e-6)
    assert np.allclose(res.primal_qtilde, [0, 2], atol=1e-6)
    assert c.count == 1
    # the frontier (index 4, after the four box faces) and the target ball are active
    assert active_set(res) == [4, 5]
    assert kkt_residual(res, (srs, tgt)) <= 1e-6


def test_apollonius_case(dom2, backend):
    srs = build_srs([[3, 0]], [0, 0], [2.0], [0.0], dom2)
    res = solve_min_distance(srs, ball([4, 0], 0.0), None, backend=backend)
    assert res.value == pytest.approx(9.0, abs=1e-6)
    assert np.allclose(res.primal_q, [1, 0], atol=1e-6)
    assert kkt_residual(res, (srs, ball([4, 0], 0.0))) <= 1e-6


def test_near_grazing_frontier(dom2, backend):
    # attacker 0.0022 outside a capture disk: the SRS is a thin wedge at the apex
    srs = build_srs([[1.0889152, 1.51629688], [-3.26017003, -1.59336393]],
                    [-2.7665083, -1.50138109], [1.0, 1.0], [3.0, 0.5], dom2)
    tgt = ball([0, 0], 1.0)
    res = solve_min_distance(srs, tgt, None, backend=backend)
    assert res.status is Status.OPTIMAL
    assert kkt_residual(res, (srs, tgt)) <= 1e-6
    rng = np.random.default_rng(3)
    for _ in range(4):
        alt = solve_min_distance(srs, tgt, None, start=(rng.uniform(-5, 5, 2), rng.uniform(-5, 5, 2)),
                                 backend=backend)
        assert alt.value == pytest.approx(res.value, abs=1e-6)


@pytest.mark.parametrize("n", [2, 3])
def test_near_grazing_batch(n, backend):
    # several frontiers within 1e-4..1e-2 of capture: tiny SRS lenses around the attacker
    rng = np.random.default_rng(40 + n)
    dm = box([-5] * n, [5] * n)
    for _ in range(40):
        k = int(rng.integers(1, 4))
        a = rng.uniform(-4, 4, n)
        gam = rng.uniform(1.0, 1.6, k)
        r = rng.uniform(0.2, 2.5, k)
        ds = []
        for i in range(k):
            u = rng.normal(size=n)
            ds.append(a + (r[i] + 10 ** rng.uniform(-4, -2)) * u / np.linalg.norm(u))
        srs = build_srs(ds, a, gam, r, dm)
        tgt = ball(rng.uniform(-3, 3, n), float(rng.uniform(0.0, 1.0)))
        res = solve_min_distance(srs, tgt, None, backend=backend)
        assert res.status is Status.OPTIMAL
        assert kkt_residual(res, (srs, tgt)) <= 1e-6
        alt = solve_min_distance(srs, tgt, None, start=(rng.uniform(-5, 5, n), rng.uniform(-5, 5, n)),
                                 backend=backend)
        assert alt.status is Status.OPTIMAL
        assert alt.value == pytest.approx(res.value, abs=1e-6)


def test_overlapping_regions_zero(dom2):
    srs = build_srs([[4, -4]], [0, 1.5], [1.0], [0.2], dom2)
    res = solve_min_distance(srs, ball([0, 3], 1.0), None)
    assert res.status is Status.OPTIMAL
    assert res.value == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("point, region, xi, value", [
    ((0, 6), box([-5, -5], [5, 5]), (0, 5), 1.0),
    ((0, -2), ConvexRegion((Affine([0, -1], 0.0), Ball([0, 1], 3.0))), (0, 0), 4.0),
    ((1, 1), box([-5, -5], [5, 5]), (1, 1), 0.0),
])
def test_projection_cases(point, region, xi, value, backend):
    c = CheckCounter()
    res = solve_projection(point, region, c, backend=backend)
    assert res.value == pytest.approx(value, abs=1e-6)
    assert np.allclose(res.primal_q, xi, atol=1e-6)
    assert c.count == 0
    assert kkt_residual(res, region) <= 1e-6


def test_active_sets(dom2):
    inside = solve_projection([1, 1], dom2)
    assert active_set(inside) == []
    corner = solve_projection([7, 7], dom2)
    assert np.allclose(corner.primal_q, [5, 5], atol=1e-6)
    assert sorted(active_set(corner)) == [0, 2]


def test_kkt_hand_built(bisector):
    srs, tgt = bisector
    res = solve_min_distance(srs, tgt, None)
    # stationarity at q=(0,0), qt=(0,2): lambda_frontier = 1/2, lambda_ball = 2
    lam = np.zeros(len(res.atoms))
    lam[4], lam[5] = 0.5, 2.0
    exact = dataclasses.replace(res, primal_q=np.array([0.0, 0.0]),
                                primal_qtilde=np.array([0.0, 2.0]), multipliers=lam)
    assert kkt_residual(exact, (srs, tgt)) <= 1e-9
    assert np.allclose(res.multipliers, lam, atol=1e-6)
    bumped = dataclasses.replace(res, multipliers=res.multipliers + 0.1)
    assert kkt_residual(bumped, (srs, tgt)) > 1e-3


def test_kkt_residual_errors(bisector):
    srs, tgt = bisector
    res = solve_min_distance(srs, tgt, None)
    with pytest.raises(InvalidInputError):
        kkt_residual(res, (srs,))
    with pytest.raises(InvalidInputError):
        kkt_residual(res, (srs, ball([0, 0], 1.0).extended([Ball([0, 0], 2.0)])))


def test_infeasible_region(dom2):
    empty = ConvexRegion((Ball([0, 0], 1.0), Ball([5, 0], 1.0)))
    res = solve_min_distance(empty, ball([0, 3], 1.0), None)
    assert res.status is Status.INFEASIBLE


def test_equality_targets(dom3):
    face = box([-5, -5, -5], [5, 5, -5])
    srs = build_srs([[0, 0, 0]], [0, 0, 3], [1.0], [0.0], dom3)
    res = solve_min_distance(srs, face, None)
    assert res.status is Status.OPTIMAL
    # bisector plane z = 1.5: SRS is z >= 1.5, distance 6.5
    assert res.value == pytest.approx(6.5 ** 2, abs=1e-6)
    assert kkt_residual(res, (srs, face)) <= 1e-6


def _random_instance(rng, n):
    k = int(rng.integers(1, 4))
    dom = box([-5] * n, [5] * n)
    a = rng.uniform(-4, 4, n)
    ds = [rng.uniform(-4, 4, n) for _ in range(k)]
    g = rng.uniform(1.0, 1.5, k)
    r = rng.uniform(0.0, 0.5, k)
    srs = build_srs(ds, a, g, r, dom)
    tgt = ball(rng.uniform(-3, 3, n), float(rng.uniform(0.2, 1.0)))
    return srs, tgt, a


@pytest.mark.parametrize("n", [2, 3])
def test_random_kkt_and_multistart(n):
    rng = np.random.default_rng(n)
    checked = 0
    for _ in range(60):
        srs, tgt, a = _random_instance(rng, n)
        if not srs.contains(a, 0.0):
            continue
        res = solve_min_distance(srs, tgt, None)
        assert res.status is Status.OPTIMAL
        assert kkt_residual(res, (srs, tgt)) <= 1e-6
        if res.value > 1e-6:
            for _ in range(3):
                s = (rng.uniform(-5, 5, n), rng.uniform(-5, 5, n))
                alt = solve_min_distance(srs, tgt, None, start=s)
                assert abs(alt.value - res.value) <= 1e-6
            checked += 1
    assert checked >= 10


def test_determinism(bisector):
    srs, tgt = bisector
    r1 = solve_min_distance(srs, tgt, None)
    r2 = solve_min_distance(srs, tgt, None)
    assert r1.value == r2.value and np.array_equal(r1.primal_q, r2.primal_q)


@pytest.mark.skipif(len(AVAILABLE_BACKENDS) < 2, reason="compiled kernel not built")
def test_backend_parity():
    rng = np.random.default_rng(7)
    for _ in range(30):
        srs, tgt, a = _random_instance(rng, 2)
        if not srs.contains(a, 0.0):
            continue
        rc = solve_min_distance(srs, tgt, None, backend="compiled")
        rp = solve_min_distance(srs, tgt, None, backend="python")
        assert rc.status is rp.status
        assert abs(rc.value - rp.value) <= 1e-9
        assert np.allclose(rc.primal_q, rp.primal_q, atol=1e-7)


def test_counter_exactness(bisector):
    srs, tgt = bisector
    c = CheckCounter()
    for _ in range(5):
        solve_min_distance(srs, tgt, c)
        solve_projection([9, 9], box([-5, -5], [5, 5]), c)
    assert c.count == 5


def test_env_var_forces_python_backend():
    code = "from reachavoid.solver import DEFAULT_BACKEND; print(DEFAULT_BACKEND)"
    env = dict(os.environ, REACHAVOID_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"

import numpy as np
import pytest

from reachavoid.allocation import TeamState
from reachavoid.coordination import AgentState, CoalitionView
from reachavoid.geometry import ball, box


def make_view(defenders, attacker, gammas=None, radii=None, va=1.0, ids=None):
    """CoalitionView from plain positions; speeds follow from the gammas."""
    k = len(defenders)
    gammas = [1.0] * k if gammas is None else list(gammas)
    radii = [0.0] * k if radii is None else list(radii)
    ids = tuple(range(1, k + 1)) if ids is None else tuple(ids)
    return CoalitionView(ids, tuple(np.asarray(d, float) for d in defenders), tuple(gammas),
                         tuple(radii), tuple(g * va for g in gammas), 1,
                         np.asarray(attacker, float), va)


def make_team(defenders, attackers, radii=None, vd=1.0, va=1.0, active=None):
    radii = [0.0] * len(defenders) if radii is None else radii
    ds = [AgentState(i, np.asarray(p, float), vd, r) for i, (p, r) in enumerate(zip(defenders, radii), 1)]
    As = [AgentState(j, np.asarray(p, float), va) for j, p in enumerate(attackers, 1)]
    act = range(1, len(attackers) + 1) if active is None else active
    return TeamState(tuple(ds), tuple(As), frozenset(act))


@pytest.fixture
def dom2():
    return box([-5, -5], [5, 5])


@pytest.fixture
def dom3():
    return box([-5, -5, -5], [5, 5, 5])


@pytest.fixture
def bisector_target():
    return ball([0, 3], 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f": {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n[acceptance] {line}")
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

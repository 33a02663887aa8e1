"""Pure-Python log-barrier kernel.

Mirrors ``_ckernel.pyx`` step for step; used when the compiled extension is
missing or ``REACHAVOID_BACKEND=python`` is set.

The program solved is::

    minimize   x' Q x + c' x
    subject to g_i(x) <= 0   for every encoded atom row
               x = xp + Z y

Each atom row is ``[kind, block_offset, p0..p7]`` as produced by
``geometry.ConstraintAtom.row`` with the block offset filled in.
"""
from __future__ import annotations

import math

import numpy as np

OPTIMAL, INFEASIBLE, MAX_ITERATIONS = 0, 1, 2

MU0 = 1.0
MU_FACTOR = 10.0
N_CENTER = 11  # mu = 1, 0.1, ..., 1e-10
NEWTON_TOL = 1e-14
LS_ALPHA = 0.25
LS_BETA = 0.5
LS_MIN_STEP = 1e-12
MAX_INNER = 100
MAX_TOTAL = 1000
INFEAS_TOL = 1e-9
NORM_FLOOR = 1e-12
# frontier row flagged for the smooth barrier form (see barrier_eval)
SMOOTH_FRONTIER = 4


def atom_eval(row, x, n, want_hess=True):
    """Value, gradient and Hessian of one atom w.r.t. its block of ``x``."""
    kind = int(row[0])
    off = int(row[1])
    q = x[off:off + n]
    p = row[2:]
    if kind == 0:
        nrm = p[:n]
        return float(nrm @ q + p[3]), nrm.copy(), (np.zeros((n, n)) if want_hess else None)
    if kind == 1:
        u = q - p[:n]
        return float(u @ u - p[3] * p[3]), 2.0 * u, (2.0 * np.eye(n) if want_hess else None)
    if kind == 2:
        ax = int(p[0])
        u = q - p[1:1 + n]
        u[ax] = 0.0
        h = None
        if want_hess:
            h = 2.0 * np.eye(n)
            h[ax, ax] = 0.0
        return float(u @ u - p[4] * p[4]), 2.0 * u, h
    d = p[:n]
    a = p[3:3 + n]
    gam, r = p[6], p[7]
    u = q - a
    w = q - d
    sa = float(u @ u)
    rho = math.sqrt(sa)
    val = gam * gam * sa + 2.0 * r * gam * rho + r * r - float(w @ w)
    grad = 2.0 * gam * gam * u - 2.0 * w
    if rho > NORM_FLOOR:
        grad = grad + 2.0 * r * gam * u / rho
    h = None
    if want_hess:
        h = 2.0 * (gam * gam - 1.0) * np.eye(n)
        if rho > NORM_FLOOR:
            h += 2.0 * r * gam / rho * (np.eye(n) - np.outer(u, u) / sa)
        else:
            h += NORM_FLOOR * np.eye(n)
    return val, grad, h


def atom_values(rows, x, n):
    return np.array([atom_eval(r, x, n, False)[0] for r in rows])


def barrier_eval(row, x, n, want_hess=True):
    """Atom as seen by the barrier path.

    A frontier ``c = s rho - g`` with ``s = 2 r gamma`` has a kink at its apex
    ``q = a`` that stalls Newton steps when the attacker nearly grazes a
    capture disk. Rows of kind ``SMOOTH_FRONTIER`` are replaced by the smooth
    convex ``F = s^2 rho^2 / g - g``, which has the same sign as ``c`` and
    gradient ``2 grad c`` on the boundary. ``F`` lives on ``g > 0`` and is
    infinite outside, so line searches stay in that domain. Other atoms are
    unchanged; every other routine reads a smooth row as a plain frontier.
    """
    if int(row[0]) != SMOOTH_FRONTIER:
        return atom_eval(row, x, n, want_hess)
    off = int(row[1])
    q = x[off:off + n]
    p = row[2:]
    d = p[:n]
    a = p[3:3 + n]
    gam, r = p[6], p[7]
    u = q - a
    w = q - d
    sa = float(u @ u)
    g = float(w @ w) - gam * gam * sa - r * r
    if g <= 0.0:
        return math.inf, np.zeros(n), (np.zeros((n, n)) if want_hess else None)
    s2 = 4.0 * r * r * gam * gam
    dg = 2.0 * w - 2.0 * gam * gam * u
    val = s2 * sa / g - g
    grad = s2 * (2.0 * u / g - sa * dg / (g * g)) - dg
    h = None
    if want_hess:
        hg = 2.0 * (1.0 - gam * gam)
        ud = np.outer(u, dg)
        h = s2 * ((2.0 - sa * hg / g) * np.eye(n) / g - 2.0 * (ud + ud.T) / (g * g)
                  + 2.0 * sa * np.outer(dg, dg) / (g * g * g)) - hg * np.eye(n)
    return val, grad, h


def barrier_values(rows, x, n):
    return np.array([barrier_eval(r, x, n, False)[0] for r in rows])


def _solve_spd(H, g):
    """Solve ``H d = g`` with Cholesky, regularising the diagonal on failure."""
    reg = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(H))))) if H.size else 1.0
    for _ in range(30):
        try:
            L = np.linalg.cholesky(H + reg * np.eye(H.shape[0]))
            z = np.linalg.solve(L, g)
            return np.linalg.solve(L.T, z)
        except np.linalg.LinAlgError:
            reg = 1e-14 * scale if reg == 0.0 else reg * 10.0
    return np.linalg.lstsq(H, g, rcond=None)[0]


class _Problem:
    def __init__(self, Q, c, rows, n, xp, Z):
        self.Q, self.c, self.rows, self.n = Q, c, rows, n
        self.xp, self.Z = xp, Z
        self.nv = Q.shape[0]
        self.m = rows.shape[0]
        self.iters = 0

    def x_of(self, y):
        return self.xp + self.Z @ y

    def atoms(self, x, want_hess=True):
        vals, grads, hess = [], [], []
        for r in self.rows:
            v, g, h = barrier_eval(r, x, self.n, want_hess)
            off = int(r[1])
            vals.append(v)
            grads.append(self.Z[off:off + self.n].T @ g)
            if want_hess:
                Zb = self.Z[off:off + self.n]
                hess.append(Zb.T @ h @ Zb)
        return np.array(vals), grads, hess

    def fobj(self, x):
        return float(x @ self.Q @ x + self.c @ x)


def _phase1(pb, y, shift):
    """Find ``y`` with every atom strictly below ``shift``.

    Returns ``(y, status, max_value)`` where status is OPTIMAL when a strictly
    feasible point was found and INFEASIBLE otherwise.
    """
    nr = y.shape[0]
    x = pb.x_of(y)
    vals = barrier_values(pb.rows, x, pb.n) - shift
    s = float(np.max(vals)) + 1.0
    mu = MU0
    k = 0
    while True:
        inner = 0
        while True:
            x = pb.x_of(y)
            vals, grads, hess = pb.atoms(x)
            vals = vals - shift
            h = s - vals
            gy = np.zeros(nr)
            Hy = np.zeros((nr, nr))
            gs = 1.0 / mu
            Hys = np.zeros(nr)
            Hss = 0.0
            for i in range(pb.m):
                inv = 1.0 / h[i]
                gy += grads[i] * inv
                gs -= inv
                Hy += hess[i] * inv + np.outer(grads[i], grads[i]) * inv * inv
                Hys -= grads[i] * inv * inv
                Hss += inv * inv
            G = np.append(gy, gs)
            H = np.zeros((nr + 1, nr + 1))
            H[:nr, :nr] = Hy
            H[:nr, nr] = Hys
            H[nr, :nr] = Hys
            H[nr, nr] = Hss
            step = -_solve_spd(H, G)
            dec = -float(G @ step)
            if dec / 2.0 <= NEWTON_TOL:
                break
            F0 = s / mu - float(np.sum(np.log(h)))
            t = 1.0
            ok = False
            while t >= LS_MIN_STEP:
                yn = y + t * step[:nr]
                sn = s + t * step[nr]
                vn = barrier_values(pb.rows, pb.x_of(yn), pb.n) - shift
                hn = sn - vn
                if np.all(hn > 0):
                    Fn = sn / mu - float(np.sum(np.log(hn)))
                    if Fn <= F0 - LS_ALPHA * t * dec:
                        ok = True
                        break
                t *= LS_BETA
            pb.iters += 1
            inner += 1
            if not ok:
                break
            y, s = yn, sn
            if s < -1.0:
                return y, OPTIMAL, s
            if inner >= MAX_INNER or pb.iters >= MAX_TOTAL:
                break
        if s < 0.0:
            return y, OPTIMAL, s
        if pb.iters >= MAX_TOTAL:
            return y, MAX_ITERATIONS, s
        k += 1
        if k >= N_CENTER:
            return y, INFEASIBLE, s
        mu = MU0 / MU_FACTOR ** k


def barrier_solve(Q, c, rows, n, xp, Z, x_start):
    """Run phase 1 (if needed) and the barrier path.

    Returns ``(x, mu, shift, status, iterations)``; atom multipliers are
    ``mu / (shift - g_i(x))``.
    """
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    rows = np.asarray(rows, dtype=float).reshape(-1, 10)
    xp = np.asarray(xp, dtype=float)
    Z = np.asarray(Z, dtype=float)
    pb = _Problem(Q, c, rows, n, xp, Z)
    nr = Z.shape[1]
    y = Z.T @ (np.asarray(x_start, dtype=float) - xp)
    shift = 0.0

    if nr == 0:
        x = pb.x_of(y)
        if pb.m and np.max(atom_values(rows, x, n)) > INFEAS_TOL:
            return x, 0.0, 0.0, INFEASIBLE, 0
        return x, 0.0, 0.0, OPTIMAL, 0

    if pb.m:
        v0 = atom_values(rows, pb.x_of(y), n)
        if np.max(v0) >= 0.0:
            y, st, smax = _phase1(pb, y, 0.0)
            if st == MAX_ITERATIONS:
                return pb.x_of(y), MU0, 0.0, MAX_ITERATIONS, pb.iters
            if st == INFEASIBLE:
                pv = float(np.max(atom_values(rows, pb.x_of(y), n)))
                if pv > INFEAS_TOL:
                    return pb.x_of(y), MU0, 0.0, INFEASIBLE, pb.iters
                # nonempty but without interior: relax every atom slightly
                shift = max(pv, 0.0) + INFEAS_TOL

    Hf = Z.T @ (2.0 * Q) @ Z
    mu = MU0
    k = 0
    while True:
        inner = 0
        while True:
            x = pb.x_of(y)
            vals, grads, hess = pb.atoms(x)
            h = shift - vals
            G = Z.T @ (2.0 * Q @ x + c)
            H = Hf.copy()
            for i in range(pb.m):
                inv = 1.0 / h[i]
                G += mu * grads[i] * inv
                H += mu * (hess[i] * inv + np.outer(grads[i], grads[i]) * inv * inv)
            step = -_solve_spd(H, G)
            dec = -float(G @ step)
            if dec / 2.0 <= NEWTON_TOL:
                break
            F0 = pb.fobj(x) - mu * float(np.sum(np.log(h)))
            t = 1.0
            ok = False
            while t >= LS_MIN_STEP:
                yn = y + t * step
                xn = pb.x_of(yn)
                hn = shift - barrier_values(rows, xn, n)
                if pb.m == 0 or np.all(hn > 0):
                    Fn = pb.fobj(xn) - mu * float(np.sum(np.log(hn)))
                    if Fn <= F0 - LS_ALPHA * t * dec:
                        ok = True
                        break
                t *= LS_BETA
            pb.iters += 1
            inner += 1
            if not ok:
                break
            y = yn
            if inner >= MAX_INNER:
                break
            if pb.iters >= MAX_TOTAL:
                return pb.x_of(y), mu, shift, MAX_ITERATIONS, pb.iters
        k += 1
        if k >= N_CENTER or pb.m == 0:
            break
        mu = MU0 / MU_FACTOR ** k
    return pb.x_of(y), mu, shift, OPTIMAL, pb.iters


# weakly active atoms sit O(sqrt(mu)) away from their bound on the central path
REFINE_ACTIVE = 1e-4
REFINE_PASSES = 3
KKT_REG = 1e-12


def _stationarity(pb, x, lam):
    r = 2.0 * pb.Q @ x + pb.c
    vals = np.empty(pb.m)
    for i, row in enumerate(pb.rows):
        v, g, _ = atom_eval(row, x, pb.n, False)
        vals[i] = v
        off = int(row[1])
        r[off:off + pb.n] += lam[i] * g
    return float(np.linalg.norm(pb.Z.T @ r)), vals


def _newton_kkt(pb, act, x_in, lam_in):
    """Newton iterations on the KKT system with ``act`` held as equalities."""
    n, nr, k = pb.n, pb.Z.shape[1], len(act)
    y = pb.Z.T @ (x_in - pb.xp)
    la = lam_in[act].copy()
    x = x_in.copy()
    Hf = pb.Z.T @ (2.0 * pb.Q) @ pb.Z
    for _ in range(8):
        K = np.zeros((nr + k, nr + k))
        K[:nr, :nr] = Hf
        rhs = np.zeros(nr + k)
        rhs[:nr] = pb.Z.T @ (2.0 * pb.Q @ x + pb.c)
        for j, i in enumerate(act):
            v, g, h = atom_eval(pb.rows[i], x, n)
            off = int(pb.rows[i][1])
            Zb = pb.Z[off:off + n]
            gy = Zb.T @ g
            rhs[nr + j] = v
            rhs[:nr] += la[j] * gy
            K[:nr, nr + j] = gy
            K[nr + j, :nr] = gy
            K[:nr, :nr] += la[j] * (Zb.T @ h @ Zb)
        if np.max(np.abs(rhs)) <= 1e-14:
            break
        K[np.arange(nr), np.arange(nr)] += KKT_REG
        try:
            step = np.linalg.solve(K, -rhs)
        except np.linalg.LinAlgError:
            return None
        y = y + step[:nr]
        la = la + step[nr:]
        x = pb.x_of(y)
    return x, la


def _refine_once(pb, act, x_in, lam_in, r0):
    for npass in range(1, REFINE_PASSES + 1):
        out = _newton_kkt(pb, act, x_in, lam_in)
        if out is None:
            return None
        x, la = out
        neg = la < -1e-9
        if not neg.any():
            break
        act, la = act[~neg], la[~neg]
        if npass == REFINE_PASSES:
            return None
    # complementary slackness: atoms left out of the active set get no weight
    lam = np.zeros_like(lam_in)
    lam[act] = np.maximum(la, 0.0)
    r1, vals = _stationarity(pb, x, lam)
    if (np.any(vals > 1e-12) or np.linalg.norm(x - x_in) > 1e-4
            or not r1 <= max(r0, 1e-12)):
        return None
    return x, lam


def kkt_refine(Q, c, rows, n, xp, Z, x_in, lam_in):
    """Newton on the KKT system of the near-active atoms.

    Candidates are atoms within ``REFINE_ACTIVE`` of their bound; those that
    come out with a negative multiplier are dropped and the solve repeated.
    If that fails, the candidates are cut to the strongly active ones, whose
    barrier multiplier is at least their distance to the bound; an inactive
    atom just inside the window can otherwise make the system degenerate.
    Returns ``(x, lam, accepted)``; when no refined point passes the sanity
    checks the inputs are returned with ``accepted = False``.
    """
    pb = _Problem(np.asarray(Q, float), np.asarray(c, float),
                  np.asarray(rows, float).reshape(-1, 10), n,
                  np.asarray(xp, float), np.asarray(Z, float))
    x_in = np.asarray(x_in, float)
    lam_in = np.asarray(lam_in, float)
    r0, vals = _stationarity(pb, x_in, lam_in)
    near = np.flatnonzero(np.abs(vals) <= REFINE_ACTIVE)
    strong = near[lam_in[near] >= np.abs(vals[near])]
    for act in ((near, strong) if strong.size < near.size else (near,)):
        if act.size > pb.Z.shape[1]:
            continue
        out = _refine_once(pb, act, x_in, lam_in, r0)
        if out is not None:
            return out[0], out[1], True
    return x_in, lam_in, False


def eval_rows(rows, x, n):
    """Values and full-space gradients of every row at ``x``."""
    rows = np.asarray(rows, dtype=float).reshape(-1, 10)
    vals = np.empty(rows.shape[0])
    grads = np.zeros((rows.shape[0], x.shape[0]))
    for i, r in enumerate(rows):
        off = int(r[1])
        vals[i], grads[i, off:off + n], _ = atom_eval(r, x, n, False)
    return vals, grads

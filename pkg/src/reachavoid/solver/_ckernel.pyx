# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled log-barrier kernel; same algorithm and constants as ``_pykernel``."""
from libc.math cimport sqrt, log, fabs, INFINITY

import numpy as np

cdef enum:
    NV_MAX = 7
    MAX_ATOMS = 128
    ROW_WIDTH = 10

cdef int OPTIMAL = 0
cdef int INFEASIBLE = 1
cdef int MAX_ITERATIONS = 2

cdef double MU0 = 1.0
cdef double MU_FACTOR = 10.0
cdef int N_CENTER = 11
cdef double NEWTON_TOL = 1e-14
cdef double LS_ALPHA = 0.25
cdef double LS_BETA = 0.5
cdef double LS_MIN_STEP = 1e-12
cdef int MAX_INNER = 100
cdef int MAX_TOTAL = 1000
cdef double INFEAS_TOL = 1e-9
cdef double NORM_FLOOR = 1e-12
cdef int SMOOTH_FRONTIER = 4


cdef struct Prob:
    int n
    int nv
    int nr
    int m
    int iters
    double Q[NV_MAX * NV_MAX]
    double c[NV_MAX]
    double rows[MAX_ATOMS * ROW_WIDTH]
    double xp[NV_MAX]
    double Z[NV_MAX * NV_MAX]


cdef double atom_eval(const double* row, const double* x, int n, double* g, double* h, bint want) nogil:
    """Value of one atom; fills block gradient ``g`` and Hessian ``h`` (row-major n x n)."""
    cdef int kind = <int>row[0]
    cdef int off = <int>row[1]
    cdef const double* q = x + off
    cdef const double* p = row + 2
    cdef int i, j, ax
    cdef double val = 0.0, u[3], w[3], sa = 0.0, sw = 0.0, rho, gam, r, coef
    if want:
        for i in range(n * n):
            h[i] = 0.0
    if kind == 0:
        val = p[3]
        for i in range(n):
            val += p[i] * q[i]
            g[i] = p[i]
        return val
    if kind == 1:
        for i in range(n):
            u[i] = q[i] - p[i]
            val += u[i] * u[i]
            g[i] = 2.0 * u[i]
            if want:
                h[i * n + i] = 2.0
        return val - p[3] * p[3]
    if kind == 2:
        ax = <int>p[0]
        for i in range(n):
            if i == ax:
                g[i] = 0.0
                continue
            u[i] = q[i] - p[1 + i]
            val += u[i] * u[i]
            g[i] = 2.0 * u[i]
            if want:
                h[i * n + i] = 2.0
        return val - p[4] * p[4]
    gam = p[6]
    r = p[7]
    for i in range(n):
        u[i] = q[i] - p[3 + i]
        w[i] = q[i] - p[i]
        sa += u[i] * u[i]
        sw += w[i] * w[i]
    rho = sqrt(sa)
    val = gam * gam * sa + 2.0 * r * gam * rho + r * r - sw
    for i in range(n):
        g[i] = 2.0 * gam * gam * u[i] - 2.0 * w[i]
        if rho > NORM_FLOOR:
            g[i] += 2.0 * r * gam * u[i] / rho
    if want:
        for i in range(n):
            h[i * n + i] = 2.0 * (gam * gam - 1.0)
        if rho > NORM_FLOOR:
            coef = 2.0 * r * gam / rho
            for i in range(n):
                for j in range(n):
                    h[i * n + j] += coef * ((1.0 if i == j else 0.0) - u[i] * u[j] / sa)
        else:
            for i in range(n):
                h[i * n + i] += NORM_FLOOR
    return val


cdef double barrier_eval(const double* row, const double* x, int n, double* g, double* h, bint want) nogil:
    """Atom as seen by the barrier path; mirrors ``_pykernel.barrier_eval``."""
    cdef const double* q = x + <int>row[1]
    cdef const double* p = row + 2
    cdef int i, j
    cdef double u[3], w[3], dg[3], sa = 0.0, sw = 0.0, gam, r, s2, gm, hg, val
    if <int>row[0] != SMOOTH_FRONTIER:
        return atom_eval(row, x, n, g, h, want)
    gam = p[6]
    r = p[7]
    for i in range(n):
        u[i] = q[i] - p[3 + i]
        w[i] = q[i] - p[i]
        sa += u[i] * u[i]
        sw += w[i] * w[i]
    gm = sw - gam * gam * sa - r * r
    if gm <= 0.0:
        for i in range(n):
            g[i] = 0.0
        if want:
            for i in range(n * n):
                h[i] = 0.0
        return INFINITY
    s2 = 4.0 * r * r * gam * gam
    val = s2 * sa / gm - gm
    for i in range(n):
        dg[i] = 2.0 * w[i] - 2.0 * gam * gam * u[i]
        g[i] = s2 * (2.0 * u[i] / gm - sa * dg[i] / (gm * gm)) - dg[i]
    if want:
        hg = 2.0 * (1.0 - gam * gam)
        for i in range(n):
            for j in range(n):
                h[i * n + j] = s2 * (-2.0 * (u[i] * dg[j] + dg[i] * u[j]) / (gm * gm)
                                     + 2.0 * sa * dg[i] * dg[j] / (gm * gm * gm))
            h[i * n + i] += s2 * (2.0 - sa * hg / gm) / gm - hg
    return val


cdef void x_of(Prob* P, const double* y, double* x) nogil:
    cdef int i, j
    for i in range(P.nv):
        x[i] = P.xp[i]
        for j in range(P.nr):
            x[i] += P.Z[i * P.nr + j] * y[j]


cdef double max_value(Prob* P, const double* x, double* vals) nogil:
    cdef double g[3]
    cdef double mx = -1e300
    cdef int i
    for i in range(P.m):
        vals[i] = atom_eval(&P.rows[i * ROW_WIDTH], x, P.n, g, NULL, False)
        if vals[i] > mx:
            mx = vals[i]
    return mx


cdef double barrier_max(Prob* P, const double* x, double* vals) nogil:
    cdef double g[3]
    cdef double mx = -1e300
    cdef int i
    for i in range(P.m):
        vals[i] = barrier_eval(&P.rows[i * ROW_WIDTH], x, P.n, g, NULL, False)
        if vals[i] > mx:
            mx = vals[i]
    return mx


cdef double fobj(Prob* P, const double* x) nogil:
    cdef double f = 0.0
    cdef int i, j
    for i in range(P.nv):
        f += P.c[i] * x[i]
        for j in range(P.nv):
            f += x[i] * P.Q[i * P.nv + j] * x[j]
    return f


cdef void reduce_atom(Prob* P, int off, const double* g, const double* h,
                      double* gy, double* hy, bint want) nogil:
    """Map a block gradient/Hessian to reduced coordinates: Zb' g, Zb' h Zb."""
    cdef int n = P.n, nr = P.nr
    cdef int a, b, i, j
    cdef double s, tmp[NV_MAX * 3]
    for a in range(nr):
        s = 0.0
        for i in range(n):
            s += P.Z[(off + i) * nr + a] * g[i]
        gy[a] = s
    if not want:
        return
    # tmp = h Zb  (n x nr)
    for i in range(n):
        for b in range(nr):
            s = 0.0
            for j in range(n):
                s += h[i * n + j] * P.Z[(off + j) * nr + b]
            tmp[i * nr + b] = s
    for a in range(nr):
        for b in range(nr):
            s = 0.0
            for i in range(n):
                s += P.Z[(off + i) * nr + a] * tmp[i * nr + b]
            hy[a * nr + b] = s


cdef int cholesky(double* A, int k) nogil:
    """In-place lower Cholesky of a k x k row-major matrix; 0 on success."""
    cdef int i, j, l
    cdef double s
    for j in range(k):
        s = A[j * k + j]
        for l in range(j):
            s -= A[j * k + l] * A[j * k + l]
        if not s > 0.0:
            return 1
        A[j * k + j] = sqrt(s)
        for i in range(j + 1, k):
            s = A[i * k + j]
            for l in range(j):
                s -= A[i * k + l] * A[j * k + l]
            A[i * k + j] = s / A[j * k + j]
    return 0


cdef void solve_spd(const double* H, const double* g, double* out, int k) nogil:
    """out = H^{-1} g, adding diagonal regularisation when H is not positive definite."""
    cdef double L[NV_MAX * NV_MAX]
    cdef double z[NV_MAX]
    cdef double reg = 0.0, scale = 1.0, s
    cdef int i, j, attempt
    for i in range(k):
        if fabs(H[i * k + i]) > scale:
            scale = fabs(H[i * k + i])
    for attempt in range(30):
        for i in range(k * k):
            L[i] = H[i]
        for i in range(k):
            L[i * k + i] += reg
        if cholesky(L, k) == 0:
            for i in range(k):
                s = g[i]
                for j in range(i):
                    s -= L[i * k + j] * z[j]
                z[i] = s / L[i * k + i]
            for i in range(k - 1, -1, -1):
                s = z[i]
                for j in range(i + 1, k):
                    s -= L[j * k + i] * out[j]
                out[i] = s / L[i * k + i]
            return
        reg = 1e-14 * scale if reg == 0.0 else reg * 10.0
    for i in range(k):
        out[i] = 0.0


cdef int phase1(Prob* P, double* y, double* s_out) nogil:
    cdef int nr = P.nr, m = P.m, n = P.n, K = P.nr + 1
    cdef double x[NV_MAX], vals[MAX_ATOMS], hvals[MAX_ATOMS]
    cdef double g[3], hb[9], gy[NV_MAX], hy[NV_MAX * NV_MAX]
    cdef double G[NV_MAX], H[NV_MAX * NV_MAX], step[NV_MAX], yn[NV_MAX]
    cdef double s, sn, mu, inv, dec, F0, Fn, t
    cdef int i, a, b, inner, k = 0
    cdef bint ok, feas
    x_of(P, y, x)
    s = barrier_max(P, x, vals) + 1.0
    mu = MU0
    while True:
        inner = 0
        while True:
            x_of(P, y, x)
            for i in range(K):
                G[i] = 0.0
            for i in range(K * K):
                H[i] = 0.0
            G[nr] = 1.0 / mu
            F0 = s / mu
            for i in range(m):
                vals[i] = barrier_eval(&P.rows[i * ROW_WIDTH], x, n, g, hb, True)
                reduce_atom(P, <int>P.rows[i * ROW_WIDTH + 1], g, hb, gy, hy, True)
                hvals[i] = s - vals[i]
                inv = 1.0 / hvals[i]
                F0 -= log(hvals[i])
                for a in range(nr):
                    G[a] += gy[a] * inv
                    for b in range(nr):
                        H[a * K + b] += hy[a * nr + b] * inv + gy[a] * gy[b] * inv * inv
                    H[a * K + nr] -= gy[a] * inv * inv
                    H[nr * K + a] -= gy[a] * inv * inv
                G[nr] -= inv
                H[nr * K + nr] += inv * inv
            solve_spd(H, G, step, K)
            dec = 0.0
            for i in range(K):
                step[i] = -step[i]
                dec -= G[i] * step[i]
            if dec / 2.0 <= NEWTON_TOL:
                break
            t = 1.0
            ok = False
            while t >= LS_MIN_STEP:
                for a in range(nr):
                    yn[a] = y[a] + t * step[a]
                sn = s + t * step[nr]
                x_of(P, yn, x)
                barrier_max(P, x, vals)
                feas = True
                Fn = sn / mu
                for i in range(m):
                    if not sn - vals[i] > 0.0:
                        feas = False
                        break
                    Fn -= log(sn - vals[i])
                if feas and Fn <= F0 - LS_ALPHA * t * dec:
                    ok = True
                    break
                t *= LS_BETA
            P.iters += 1
            inner += 1
            if not ok:
                break
            for a in range(nr):
                y[a] = yn[a]
            s = sn
            if s < -1.0:
                s_out[0] = s
                return OPTIMAL
            if inner >= MAX_INNER or P.iters >= MAX_TOTAL:
                break
        s_out[0] = s
        if s < 0.0:
            return OPTIMAL
        if P.iters >= MAX_TOTAL:
            return MAX_ITERATIONS
        k += 1
        if k >= N_CENTER:
            return INFEASIBLE
        mu = MU0 / MU_FACTOR ** k


cdef int phase2(Prob* P, double* y, double shift, double* mu_out) nogil:
    cdef int nr = P.nr, m = P.m, n = P.n, nv = P.nv
    cdef double x[NV_MAX], vals[MAX_ATOMS]
    cdef double g[3], hb[9], gy[NV_MAX], hy[NV_MAX * NV_MAX], qx[NV_MAX]
    cdef double Hf[NV_MAX * NV_MAX], G[NV_MAX], H[NV_MAX * NV_MAX], step[NV_MAX], yn[NV_MAX]
    cdef double mu, inv, dec, F0, Fn, t, s, hv
    cdef int i, j, a, b, inner, k = 0
    cdef bint ok, feas
    # Hf = Z' (2Q) Z
    for a in range(nr):
        for b in range(nr):
            s = 0.0
            for i in range(nv):
                for j in range(nv):
                    s += P.Z[i * nr + a] * 2.0 * P.Q[i * nv + j] * P.Z[j * nr + b]
            Hf[a * nr + b] = s
    mu = MU0
    while True:
        inner = 0
        while True:
            x_of(P, y, x)
            for i in range(nv):
                qx[i] = P.c[i]
                for j in range(nv):
                    qx[i] += 2.0 * P.Q[i * nv + j] * x[j]
            for a in range(nr):
                s = 0.0
                for i in range(nv):
                    s += P.Z[i * nr + a] * qx[i]
                G[a] = s
            for i in range(nr * nr):
                H[i] = Hf[i]
            F0 = fobj(P, x)
            for i in range(m):
                vals[i] = barrier_eval(&P.rows[i * ROW_WIDTH], x, n, g, hb, True)
                reduce_atom(P, <int>P.rows[i * ROW_WIDTH + 1], g, hb, gy, hy, True)
                hv = shift - vals[i]
                inv = 1.0 / hv
                F0 -= mu * log(hv)
                for a in range(nr):
                    G[a] += mu * gy[a] * inv
                    for b in range(nr):
                        H[a * nr + b] += mu * (hy[a * nr + b] * inv + gy[a] * gy[b] * inv * inv)
            solve_spd(H, G, step, nr)
            dec = 0.0
            for a in range(nr):
                step[a] = -step[a]
                dec -= G[a] * step[a]
            if dec / 2.0 <= NEWTON_TOL:
                break
            t = 1.0
            ok = False
            while t >= LS_MIN_STEP:
                for a in range(nr):
                    yn[a] = y[a] + t * step[a]
                x_of(P, yn, x)
                barrier_max(P, x, vals)
                feas = True
                Fn = fobj(P, x)
                for i in range(m):
                    hv = shift - vals[i]
                    if not hv > 0.0:
                        feas = False
                        break
                    Fn -= mu * log(hv)
                if feas and Fn <= F0 - LS_ALPHA * t * dec:
                    ok = True
                    break
                t *= LS_BETA
            P.iters += 1
            inner += 1
            if not ok:
                break
            for a in range(nr):
                y[a] = yn[a]
            if inner >= MAX_INNER:
                break
            if P.iters >= MAX_TOTAL:
                mu_out[0] = mu
                return MAX_ITERATIONS
        k += 1
        if k >= N_CENTER or m == 0:
            break
        mu = MU0 / MU_FACTOR ** k
    mu_out[0] = mu
    return OPTIMAL


def barrier_solve(double[:, ::1] Q, double[::1] c, double[:, ::1] rows, int n,
                  double[::1] xp, double[:, ::1] Z, double[::1] x_start):
    """Run phase 1 (if needed) and the barrier path.

    Returns ``(x, mu, shift, status, iterations)``; atom multipliers are
    ``mu / (shift - g_i(x))``.
    """
    cdef Prob P
    cdef int i, j, st
    cdef double y[NV_MAX], x[NV_MAX], vals[MAX_ATOMS]
    cdef double shift = 0.0, mu = MU0, smax, pv
    P.n = n
    P.nv = Q.shape[0]
    P.nr = Z.shape[1]
    P.m = rows.shape[0]
    P.iters = 0
    if P.nv > NV_MAX - 1 or P.m > MAX_ATOMS or n > 3:
        raise ValueError("problem exceeds the compiled kernel's fixed sizes")
    for i in range(P.nv):
        P.c[i] = c[i]
        P.xp[i] = xp[i]
        for j in range(P.nv):
            P.Q[i * P.nv + j] = Q[i, j]
        for j in range(P.nr):
            P.Z[i * P.nr + j] = Z[i, j]
    for i in range(P.m):
        for j in range(ROW_WIDTH):
            P.rows[i * ROW_WIDTH + j] = rows[i, j]
    for j in range(P.nr):
        y[j] = 0.0
        for i in range(P.nv):
            y[j] += P.Z[i * P.nr + j] * (x_start[i] - xp[i])

    with nogil:
        st = OPTIMAL
        if P.nr == 0:
            x_of(&P, y, x)
            mu = 0.0
            if P.m and max_value(&P, x, vals) > INFEAS_TOL:
                st = INFEASIBLE
        else:
            if P.m:
                x_of(&P, y, x)
                if max_value(&P, x, vals) >= 0.0:
                    st = phase1(&P, y, &smax)
                    if st == INFEASIBLE:
                        x_of(&P, y, x)
                        pv = max_value(&P, x, vals)
                        if pv <= INFEAS_TOL:
                            shift = (pv if pv > 0.0 else 0.0) + INFEAS_TOL
                            st = OPTIMAL
                    elif st == OPTIMAL:
                        pass
            if st == OPTIMAL:
                st = phase2(&P, y, shift, &mu)
            x_of(&P, y, x)
    out = np.empty(P.nv)
    for i in range(P.nv):
        out[i] = x[i]
    if st != OPTIMAL and st != MAX_ITERATIONS:
        shift = 0.0
    return out, mu, shift, st, P.iters


cdef enum:
    KMAX = 2 * NV_MAX

# weakly active atoms sit O(sqrt(mu)) away from their bound on the central path
cdef double REFINE_ACTIVE = 1e-4
cdef int REFINE_PASSES = 3
cdef double KKT_REG = 1e-12


cdef int gauss_solve(double* A, double* b, int k) nogil:
    """Solve A x = b in place (result in b) with partial pivoting; 1 if singular."""
    cdef int i, j, l, piv
    cdef double mx, tmp, f
    for j in range(k):
        piv = j
        mx = fabs(A[j * k + j])
        for i in range(j + 1, k):
            if fabs(A[i * k + j]) > mx:
                mx = fabs(A[i * k + j])
                piv = i
        if mx < 1e-300:
            return 1
        if piv != j:
            for l in range(k):
                tmp = A[j * k + l]
                A[j * k + l] = A[piv * k + l]
                A[piv * k + l] = tmp
            tmp = b[j]
            b[j] = b[piv]
            b[piv] = tmp
        for i in range(j + 1, k):
            f = A[i * k + j] / A[j * k + j]
            if f != 0.0:
                for l in range(j, k):
                    A[i * k + l] -= f * A[j * k + l]
                b[i] -= f * b[j]
    for i in range(k - 1, -1, -1):
        tmp = b[i]
        for l in range(i + 1, k):
            tmp -= A[i * k + l] * b[l]
        b[i] = tmp / A[i * k + i]
    return 0


cdef double stationarity(Prob* P, const double* x, const double* lam, double* vals) nogil:
    """Norm of Z'(grad f + sum lam_i grad g_i); fills atom values."""
    cdef int i, j, a, off, n = P.n, nv = P.nv, nr = P.nr
    cdef double r[NV_MAX], g[3], s, tot = 0.0
    for i in range(nv):
        r[i] = P.c[i]
        for j in range(nv):
            r[i] += 2.0 * P.Q[i * nv + j] * x[j]
    for i in range(P.m):
        vals[i] = atom_eval(&P.rows[i * ROW_WIDTH], x, n, g, NULL, False)
        off = <int>P.rows[i * ROW_WIDTH + 1]
        for j in range(n):
            r[off + j] += lam[i] * g[j]
    for a in range(nr):
        s = 0.0
        for i in range(nv):
            s += P.Z[i * nr + a] * r[i]
        tot += s * s
    return sqrt(tot)


cdef int newton_kkt(Prob* P, const int* act, int k, const double* x_in,
                    const double* lam_in, double* x, double* la) nogil:
    """Newton iterations on the KKT system with ``act`` held as equalities."""
    cdef int i, j, a, b, it, off, n = P.n, nv = P.nv, nr = P.nr, K = P.nr + k
    cdef double y[NV_MAX], g[3], hb[9], gy[NV_MAX], hy[NV_MAX * NV_MAX]
    cdef double KM[KMAX * KMAX], rhs[KMAX], qx[NV_MAX]
    cdef double s, mx
    for i in range(nv):
        x[i] = x_in[i]
    for j in range(k):
        la[j] = lam_in[act[j]]
    for a in range(nr):
        y[a] = 0.0
        for i in range(nv):
            y[a] += P.Z[i * nr + a] * (x[i] - P.xp[i])
    for it in range(8):
        for i in range(K * K):
            KM[i] = 0.0
        for i in range(nv):
            qx[i] = P.c[i]
            for j in range(nv):
                qx[i] += 2.0 * P.Q[i * nv + j] * x[j]
        for a in range(nr):
            s = 0.0
            for i in range(nv):
                s += P.Z[i * nr + a] * qx[i]
            rhs[a] = s
            for b in range(nr):
                s = 0.0
                for i in range(nv):
                    for j in range(nv):
                        s += P.Z[i * nr + a] * 2.0 * P.Q[i * nv + j] * P.Z[j * nr + b]
                KM[a * K + b] = s
        for j in range(k):
            i = act[j]
            off = <int>P.rows[i * ROW_WIDTH + 1]
            rhs[nr + j] = atom_eval(&P.rows[i * ROW_WIDTH], x, n, g, hb, True)
            reduce_atom(P, off, g, hb, gy, hy, True)
            for a in range(nr):
                rhs[a] += la[j] * gy[a]
                KM[a * K + nr + j] = gy[a]
                KM[(nr + j) * K + a] = gy[a]
                for b in range(nr):
                    KM[a * K + b] += la[j] * hy[a * nr + b]
        mx = 0.0
        for i in range(K):
            if fabs(rhs[i]) > mx:
                mx = fabs(rhs[i])
            rhs[i] = -rhs[i]
        if mx <= 1e-14:
            break
        for a in range(nr):
            KM[a * K + a] += KKT_REG
        if gauss_solve(KM, rhs, K):
            return 1
        for a in range(nr):
            y[a] += rhs[a]
        for j in range(k):
            la[j] += rhs[nr + j]
        x_of(P, y, x)
    return 0


cdef bint refine_once(Prob* P, int* act, int k, const double* x0, const double* lam0, double r0,
                      double* x, double* lam, double* vals) nogil:
    """One refinement attempt from candidate set ``act``; mirrors ``_pykernel._refine_once``."""
    cdef double la[NV_MAX]
    cdef double r1, dx
    cdef int i, j, kk, npass = 0
    cdef bint neg
    for i in range(P.m):
        lam[i] = 0.0
    while True:
        npass += 1
        if newton_kkt(P, act, k, x0, lam0, x, la):
            return False
        neg = False
        kk = 0
        for j in range(k):
            if la[j] < -1e-9:
                neg = True
            else:
                act[kk] = act[j]
                la[kk] = la[j]
                kk += 1
        if not neg:
            break
        k = kk
        if npass >= REFINE_PASSES:
            return False
    for j in range(k):
        lam[act[j]] = la[j] if la[j] > 0.0 else 0.0
    r1 = stationarity(P, x, lam, vals)
    for i in range(P.m):
        if vals[i] > 1e-12:
            return False
    dx = 0.0
    for i in range(P.nv):
        dx += (x[i] - x0[i]) * (x[i] - x0[i])
    if sqrt(dx) > 1e-4 or not r1 <= (r0 if r0 > 1e-12 else 1e-12):
        return False
    return True


def kkt_refine(double[:, ::1] Q, double[::1] c, double[:, ::1] rows, int n,
               double[::1] xp, double[:, ::1] Z, double[::1] x_in, double[::1] lam_in):
    """Newton on the KKT system of the near-active atoms.

    Mirrors ``_pykernel.kkt_refine``: the near-active candidates first, then
    only the strongly active ones if that attempt is rejected.
    Returns ``(x, lam, accepted)``.
    """
    cdef Prob P
    cdef int i, j, k = 0, ks = 0, attempt
    cdef int near[MAX_ATOMS]
    cdef int strong[MAX_ATOMS]
    cdef int act[MAX_ATOMS]
    cdef double x0[NV_MAX], x[NV_MAX], lam0[MAX_ATOMS], lam[MAX_ATOMS], vals[MAX_ATOMS]
    cdef double r0
    cdef bint ok = False
    P.n = n
    P.nv = Q.shape[0]
    P.nr = Z.shape[1]
    P.m = rows.shape[0]
    if P.nv > NV_MAX - 1 or P.m > MAX_ATOMS or n > 3:
        raise ValueError("problem exceeds the compiled kernel's fixed sizes")
    for i in range(P.nv):
        P.c[i] = c[i]
        P.xp[i] = xp[i]
        x0[i] = x_in[i]
        x[i] = x_in[i]
        for j in range(P.nv):
            P.Q[i * P.nv + j] = Q[i, j]
        for j in range(P.nr):
            P.Z[i * P.nr + j] = Z[i, j]
    for i in range(P.m):
        lam0[i] = lam_in[i]
        for j in range(ROW_WIDTH):
            P.rows[i * ROW_WIDTH + j] = rows[i, j]
    with nogil:
        r0 = stationarity(&P, x0, lam0, vals)
        for i in range(P.m):
            if fabs(vals[i]) <= REFINE_ACTIVE:
                near[k] = i
                k += 1
                if lam0[i] >= fabs(vals[i]):
                    strong[ks] = i
                    ks += 1
        for attempt in range(2):
            if attempt == 1:
                if ks == k:
                    break
                k = ks
                for j in range(k):
                    near[j] = strong[j]
            if k > P.nr:
                continue
            for j in range(k):
                act[j] = near[j]
            if refine_once(&P, act, k, x0, lam0, r0, x, lam, vals):
                ok = True
                break
    x_out = np.empty(P.nv)
    lam_out = np.empty(P.m)
    for i in range(P.nv):
        x_out[i] = x[i] if ok else x0[i]
    for i in range(P.m):
        lam_out[i] = lam[i] if ok else lam0[i]
    return x_out, lam_out, ok


def eval_rows(double[:, ::1] rows, double[::1] x, int n):
    """Values and full-space gradients of every row at ``x``."""
    cdef int m = rows.shape[0], nv = x.shape[0], i, k, off
    cdef double g[3]
    cdef double h[9]
    vals = np.empty(m)
    grads = np.zeros((m, nv))
    cdef double[::1] vv = vals
    cdef double[:, ::1] gg = grads
    if n > 3:
        raise ValueError("dimension above 3")
    for i in range(m):
        if <int>rows[i, 1] + n > nv:
            raise ValueError("row offset out of range")
    with nogil:
        for i in range(m):
            off = <int>rows[i, 1]
            vv[i] = atom_eval(&rows[i, 0], &x[0], n, g, h, False)
            for k in range(n):
                gg[i, off + k] = g[k]
    return vals, grads

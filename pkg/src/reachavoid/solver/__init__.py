"""Dense interior-point solver for the two small convex programs of the game.

``solve_min_distance``
    squared distance between two convex regions, ``min |q - qt|**2`` with
    ``q`` in the first region and ``qt`` in the second.
``solve_projection``
    squared distance from a point to a region.

Both run a primal log-barrier method (phase 1 when the start is infeasible,
then Newton centering along ``mu = 1, 0.1, ..., 1e-10``).  Degenerate atoms
such as zero-radius balls or opposing half-space pairs are eliminated as
affine equalities first.  Capture frontiers enter the barrier in a smooth
equivalent form, since the original one has a kink at the attacker.  The
barrier iterate is finished by a few Newton steps on the KKT system of the
active atoms, which pins the primal point to the active boundary and gives
multipliers accurate to rounding.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError
from ..geometry import (Affine, AxisCylinder, Ball, CaptureFrontier, ConvexRegion,
                        as_vec)
from . import _pykernel
from ._backend import AVAILABLE as AVAILABLE_BACKENDS
from ._backend import DEFAULT as DEFAULT_BACKEND
from ._backend import get_kernel

__all__ = [
    "Status", "CheckCounter", "SolveResult", "solve_min_distance", "solve_projection",
    "active_set", "kkt_residual", "AVAILABLE_BACKENDS", "DEFAULT_BACKEND",
]

EPS_ACTIVE = 1e-6


class Status(enum.Enum):
    OPTIMAL = 0
    INFEASIBLE = 1
    MAX_ITERATIONS = 2


@dataclass
class CheckCounter:
    """Number of minimum-distance solves performed so far."""

    count: int = 0

    def increment(self, k: int = 1) -> None:
        self.count += k


@dataclass
class SolveResult:
    """Outcome of one convex program.

    ``multipliers`` and ``atom_values`` are aligned with ``atoms``, the atoms
    of the first region followed by those of the second (min-distance only).
    """

    value: float
    primal_q: np.ndarray
    primal_qtilde: np.ndarray | None
    multipliers: np.ndarray
    active_set: list
    status: Status
    iterations: int = 0
    atoms: tuple = ()
    atom_values: np.ndarray | None = None
    kind: str = "min_distance"
    point: np.ndarray | None = None
    mu: float = 0.0
    shift: float = 0.0
    split: int = field(default=0)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


# -- assembly -----------------------------------------------------------------

def interior_guess(region: ConvexRegion, n: int) -> np.ndarray:
    """Deterministic starting guess, preferably strictly inside ``region``."""
    for a in region.atoms:
        if isinstance(a, CaptureFrontier):
            return a.attacker_pos.copy()
    cached = region.__dict__.get("_guess")
    if cached is not None and cached.shape[0] == n:
        return cached.copy()
    x = _static_guess(region, n)
    region.__dict__["_guess"] = x
    return x.copy()


def _static_guess(region: ConvexRegion, n: int) -> np.ndarray:
    balls = [a for a in region.atoms if isinstance(a, Ball)]
    if balls:
        return min(balls, key=lambda b: b.radius).center.copy()
    lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
    for a in region.atoms:
        if isinstance(a, Affine):
            nz = np.flatnonzero(a.normal)
            if nz.size == 1:
                k = nz[0]
                bound = -a.offset / a.normal[k]
                if a.normal[k] > 0:
                    hi[k] = min(hi[k], bound)
                else:
                    lo[k] = max(lo[k], bound)
    x = np.zeros(n)
    for a in region.atoms:
        if isinstance(a, AxisCylinder):
            x = a.center_full.copy()
            break
    both = np.isfinite(lo) & np.isfinite(hi)
    x[both] = 0.5 * (lo[both] + hi[both])
    x[np.isfinite(lo) & ~both] = np.maximum(x, lo + 1.0)[np.isfinite(lo) & ~both]
    x[np.isfinite(hi) & ~both] = np.minimum(x, hi - 1.0)[np.isfinite(hi) & ~both]
    return x


class _Assembly:
    """Stacked rows, equality elimination and bookkeeping for 1 or 2 blocks."""

    def __init__(self, regions, n, backend=None):
        self.regions = regions
        self.n = n
        self.nv = n * len(regions)
        self.kern = get_kernel(backend)
        self.atoms = tuple(a for r in regions for a in r.atoms)
        self.consistent = True
        xps, Zs, blocks, keep = [], [], [], []
        A_rows, pair_map = [], []
        base = 0
        for b, reg in enumerate(regions):
            eq = reg.equalities
            off = b * n
            if eq.basis is None:
                xps.append(np.zeros(n))
                Zs.append(np.eye(n))
            else:
                self.consistent &= eq.consistent
                xps.append(eq.particular)
                Zs.append(eq.basis)
                for k in range(eq.A.shape[0]):
                    row = np.zeros(self.nv)
                    row[off:off + n] = eq.A[k]
                    A_rows.append(row)
                    pair_map.append(tuple((base + i, s) for i, s in eq.pair_map[k]))
            m = len(reg.atoms)
            if m:
                rr = reg.rows.copy()
                rr[:, 1] = off
                blocks.append(rr)
                keep.extend(base + i for i in range(m) if i not in eq.consumed)
            base += m
        self.xp = np.concatenate(xps)
        if len(Zs) == 1:
            self.Z = np.ascontiguousarray(Zs[0])
        else:
            self.Z = np.zeros((self.nv, sum(z.shape[1] for z in Zs)))
            col = 0
            for b, z in enumerate(Zs):
                self.Z[b * n:(b + 1) * n, col:col + z.shape[1]] = z
                col += z.shape[1]
        self.all_rows = np.ascontiguousarray(np.vstack(blocks)) if blocks else np.zeros((0, 10))
        self.keep = np.array(keep, dtype=int)
        self.rows = np.ascontiguousarray(self.all_rows[self.keep]) if len(keep) else np.zeros((0, 10))
        self.A = np.array(A_rows).reshape(-1, self.nv)
        self.pair_map = pair_map


def _full_multipliers(Q, c, asm: _Assembly, x, lam_ineq):
    """Scatter inequality multipliers and recover those of eliminated atoms."""
    lam = np.zeros(len(asm.atoms))
    lam[asm.keep] = lam_ineq
    if asm.A.shape[0]:
        _, grads = asm.kern.eval_rows(asm.rows, np.ascontiguousarray(x, dtype=float), asm.n)
        r = 2.0 * Q @ x + c + grads.T @ lam_ineq
        nu = np.linalg.lstsq(asm.A.T, -r, rcond=None)[0]
        for k, entries in enumerate(asm.pair_map):
            for idx, scale in entries:
                lam[idx] = max(scale * nu[k], 0.0)
    return lam


def _frontier_margin(row, n, q):
    """``|q - d|^2 - gamma^2 |q - a|^2 - r^2`` for a frontier row."""
    d, a, gam, r = row[2:2 + n], row[5:5 + n], row[8], row[9]
    return float((q - d) @ (q - d) - gam * gam * (q - a) @ (q - a) - r * r)


def _frontier_value(row, n, q):
    a, gam, r = row[5:5 + n], row[8], row[9]
    return 2.0 * r * gam * float(np.linalg.norm(q - a)) - _frontier_margin(row, n, q)


def _barrier_rows(rows, n, x):
    """Rows and start for the barrier path.

    Frontiers with a positive radius that hold strictly at their attacker are
    flagged for the kernels' smooth form, which is only defined where the
    margin is positive and blows up near its edge. Each such frontier region
    is convex with the attacker inside, so halving the offset from the
    attacker makes the start satisfy every flagged frontier strictly.
    """
    rows = np.array(rows, dtype=float)
    x = np.array(x, dtype=float)
    for off in range(0, x.size, n):
        idx = [i for i, row in enumerate(rows)
               if int(row[0]) == 3 and int(row[1]) == off and row[9] > 0.0
               and _frontier_value(row, n, row[5:5 + n]) < 0.0]
        if not idx:
            continue
        rows[idx, 0] = _pykernel.SMOOTH_FRONTIER
        a = rows[idx[0], 5:5 + n]
        q = x[off:off + n]
        for _ in range(200):
            if all(_frontier_value(rows[i], n, q) < 0.0 for i in idx):
                break
            q = a + 0.5 * (q - a)
        else:
            q = a.copy()
        x[off:off + n] = q
    return rows, x


def _run(Q, c, regions, n, start, backend):
    asm = _Assembly(regions, n, backend)
    kern = asm.kern
    if not asm.consistent:
        x0 = np.asarray(start, dtype=float)
        return asm, x0, np.zeros(len(asm.atoms)), Status.INFEASIBLE, 0, 0.0, 0.0
    brows, x0 = _barrier_rows(asm.rows, n, start)
    x, mu, shift, st, iters = kern.barrier_solve(
        np.ascontiguousarray(Q), np.ascontiguousarray(c), np.ascontiguousarray(brows),
        n, np.ascontiguousarray(asm.xp), np.ascontiguousarray(asm.Z), np.ascontiguousarray(x0))
    x = np.asarray(x, dtype=float)
    status = Status(st)
    m = asm.rows.shape[0]
    lam = np.zeros(m)
    if m and mu > 0 and status is Status.OPTIMAL:
        gap = shift - kern.eval_rows(asm.rows, x, n)[0]
        lam = np.where(gap > 0, mu / np.where(gap > 0, gap, 1.0), 0.0)
    if status is Status.OPTIMAL and m and shift == 0.0:
        x, lam, _ = kern.kkt_refine(
            Q, c, asm.rows, n, asm.xp, asm.Z, np.ascontiguousarray(x), np.ascontiguousarray(lam))
        x = np.asarray(x, dtype=float)
        lam = np.asarray(lam, dtype=float)
    lam_full = _full_multipliers(Q, c, asm, x, lam)
    return asm, x, lam_full, status, iters, mu, shift


def _result(kind, value, q, qt, asm, x, lam, status, iters, mu, shift, point=None):
    split = _split(asm)
    vals = asm.kern.eval_rows(asm.all_rows, np.ascontiguousarray(x, dtype=float), asm.n)[0]
    act = np.flatnonzero(np.abs(vals) <= EPS_ACTIVE).tolist() if status is Status.OPTIMAL else []
    return SolveResult(value=value, primal_q=q, primal_qtilde=qt, multipliers=lam,
                       active_set=act, status=status, iterations=iters, atoms=asm.atoms,
                       atom_values=vals, kind=kind, point=point, mu=mu, shift=shift,
                       split=split)


def _split(asm):
    return len(asm.regions[0].atoms)


def _dim(*regions, point=None):
    dims = {r.dim for r in regions if r.dim is not None}
    if point is not None:
        dims.add(point.shape[0])
    if len(dims) > 1:
        raise InvalidInputError(f"regions of mixed dimension {sorted(dims)}")
    if not dims:
        raise InvalidInputError("cannot infer the dimension of unconstrained regions")
    return dims.pop()


_QCACHE = {}


def _min_distance_Q(n):
    Q = _QCACHE.get(n)
    if Q is None:
        eye = np.eye(n)
        Q = _QCACHE[n] = np.block([[eye, -eye], [-eye, eye]])
    return Q


def solve_min_distance(region_a: ConvexRegion, region_b: ConvexRegion,
                       counter: CheckCounter | None, start=None,
                       backend: str | None = None) -> SolveResult:
    """Minimum squared distance between ``region_a`` and ``region_b``.

    Parameters
    ----------
    region_a, region_b : ConvexRegion
        The two sets; typically a safe-reachable set and the target.
    counter : CheckCounter or None
        Incremented once per call.
    start : tuple of two vectors, optional
        Initial ``(q, qt)``.  Defaults to a deterministic interior guess.
    backend : {"compiled", "python"}, optional
        Kernel override.

    Returns
    -------
    SolveResult
        ``value`` is the squared distance, ``primal_q`` and ``primal_qtilde``
        the closest pair.
    """
    if counter is not None:
        counter.increment()
    n = _dim(region_a, region_b)
    if start is None:
        x0 = np.concatenate([interior_guess(region_a, n), interior_guess(region_b, n)])
    else:
        x0 = np.concatenate([as_vec(start[0], n), as_vec(start[1], n)])
    Q = _min_distance_Q(n)
    c = np.zeros(2 * n)
    asm, x, lam, status, iters, mu, shift = _run(Q, c, (region_a, region_b), n, x0, backend)
    q, qt = x[:n].copy(), x[n:].copy()
    diff = q - qt
    value = float(diff @ diff)
    return _result("min_distance", value, q, qt, asm, x, lam, status, iters, mu, shift)


def solve_projection(point, region: ConvexRegion, counter: CheckCounter | None = None,
                     start=None, backend: str | None = None) -> SolveResult:
    """Euclidean projection of ``point`` onto ``region``.

    ``counter`` is accepted for symmetry but never incremented: only
    minimum-distance solves count as checks.
    """
    n = _dim(region) if region.dim is not None else None
    p = as_vec(point, n)
    n = p.shape[0]
    if not region.atoms:
        asm = _Assembly((region,), n)
        return _result("projection", 0.0, p.copy(), None, asm, p.copy(), np.zeros(0),
                       Status.OPTIMAL, 0, 0.0, 0.0, point=p)
    if region.max_value(p) <= 0.0:
        x0 = p
    else:
        x0 = interior_guess(region, n) if start is None else as_vec(start, n)
    Q = np.eye(n)
    c = -2.0 * p
    asm, x, lam, status, iters, mu, shift = _run(Q, c, (region,), n, x0, backend)
    diff = x - p
    return _result("projection", float(diff @ diff), x.copy(), None, asm, x, lam,
                   status, iters, mu, shift, point=p)


def active_set(result: SolveResult, eps_active: float = EPS_ACTIVE) -> list:
    """Indices of atoms with ``|value| <= eps_active`` at the primal solution."""
    if result.atom_values is None:
        raise InvalidInputError("result carries no atom values")
    return [i for i, v in enumerate(result.atom_values) if abs(v) <= eps_active]


def kkt_residual(result: SolveResult, regions) -> float:
    """Norm of the Lagrangian gradient at ``result``, within the equality tangent space.

    ``regions`` is ``(region_a, region_b)`` for a min-distance result and a
    single region (or 1-tuple) for a projection.
    """
    if isinstance(regions, ConvexRegion):
        regions = (regions,)
    regions = tuple(regions)
    q = as_vec(result.primal_q)
    n = q.shape[0]
    if result.kind == "min_distance":
        if len(regions) != 2:
            raise InvalidInputError("min-distance residual needs two regions")
        qt = as_vec(result.primal_qtilde, n)
        x = np.concatenate([q, qt])
        grad = np.concatenate([2.0 * (q - qt), 2.0 * (qt - q)])
    else:
        x = q
        grad = 2.0 * (q - as_vec(result.point, n))
    asm = _Assembly(regions, n)
    lam = np.asarray(result.multipliers, dtype=float)
    if lam.shape[0] != len(asm.atoms):
        raise InvalidInputError("multipliers do not match the regions' atoms")
    base = 0
    for b, reg in enumerate(regions):
        xb = x[b * n:(b + 1) * n]
        for a in reg.atoms:
            grad[b * n:(b + 1) * n] += lam[base] * a.gradient(xb)
            base += 1
    return float(np.linalg.norm(asm.Z.T @ grad))

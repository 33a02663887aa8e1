"""Convex constraint atoms, regions and safe-reachable-set construction.

Every region is an intersection of zero sublevel sets ``{q : g(q) <= 0}`` of
smooth convex atoms.  Four atom kinds cover the domains and targets used in
practice (boxes, slabs, faces, balls, points, cylinders) plus the capture
frontier of one defender against one attacker::

    c(q) = (gamma * |q - a| + r)**2 - |q - d|**2

Atoms know how to serialise themselves to a fixed-width float row, which is
the format the barrier kernels consume.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import math

import numpy as np

from .errors import DegeneratePointError, InvalidInputError

ROW_WIDTH = 10
KIND_AFFINE, KIND_BALL, KIND_CYLINDER, KIND_FRONTIER = 0, 1, 2, 3

DEFAULT_EPS = 1e-9
# Below this distance to the attacker the norm term of a capture frontier is
# treated as non-differentiable.
NORM_FLOOR = 1e-12


def as_vec(q, n: int | None = None) -> np.ndarray:
    """Return ``q`` as a finite float vector of length 2 or 3 (or ``n``)."""
    if type(q) is np.ndarray and q.dtype == np.float64 and q.ndim == 1:
        k = q.shape[0]
        # fast path for the common case; any failure falls through to the full checks
        if (k == n if n is not None else k in (2, 3)) and math.isfinite(q.sum()):
            return q
    v = np.asarray(q, dtype=float).reshape(-1)
    if n is not None and v.shape[0] != n:
        raise InvalidInputError(f"expected a vector of length {n}, got {v.shape[0]}")
    if v.shape[0] not in (2, 3):
        raise InvalidInputError(f"vectors must have length 2 or 3, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"non-finite coordinates: {v}")
    return v


def normalize(v: np.ndarray) -> np.ndarray:
    """Unit vector along ``v``; the zero vector maps to zero."""
    nrm = float(np.sqrt(np.dot(v, v)))
    if nrm == 0.0:
        return np.zeros_like(v)
    return v / nrm


class ConstraintAtom:
    """Base class for a smooth convex scalar constraint ``g(q) <= 0``."""

    kind: int
    dim: int

    def value(self, q: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def row(self) -> np.ndarray:
        raise NotImplementedError

    def _check(self, q) -> np.ndarray:
        return as_vec(q, self.dim)


@dataclass(frozen=True, eq=False)
class Affine(ConstraintAtom):
    """Half-space ``normal . q + offset <= 0``."""

    normal: np.ndarray
    offset: float
    kind = KIND_AFFINE

    def __post_init__(self):
        object.__setattr__(self, "normal", as_vec(self.normal))
        object.__setattr__(self, "offset", float(self.offset))
        if not np.any(self.normal):
            raise InvalidInputError("affine atom needs a nonzero normal")

    @property
    def dim(self) -> int:
        return self.normal.shape[0]

    def value(self, q):
        return float(np.dot(self.normal, self._check(q)) + self.offset)

    def gradient(self, q):
        self._check(q)
        return self.normal.copy()

    def hessian(self, q):
        return np.zeros((self.dim, self.dim))

    def row(self):
        r = np.zeros(ROW_WIDTH)
        r[0] = KIND_AFFINE
        r[2:2 + self.dim] = self.normal
        r[5] = self.offset
        return r


@dataclass(frozen=True, eq=False)
class Ball(ConstraintAtom):
    """Closed ball, value ``|q - center|**2 - radius**2``."""

    center: np.ndarray
    radius: float
    kind = KIND_BALL

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius >= 0.0:
            raise InvalidInputError(f"ball radius must be >= 0, got {self.radius}")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def value(self, q):
        u = self._check(q) - self.center
        return float(np.dot(u, u) - self.radius ** 2)

    def gradient(self, q):
        return 2.0 * (self._check(q) - self.center)

    def hessian(self, q):
        return 2.0 * np.eye(self.dim)

    def row(self):
        r = np.zeros(ROW_WIDTH)
        r[0] = KIND_BALL
        r[2:2 + self.dim] = self.center
        r[5] = self.radius
        return r


@dataclass(frozen=True, eq=False)
class AxisCylinder(ConstraintAtom):
    """Infinite cylinder around a coordinate axis.

    ``center2d`` holds the center in the remaining coordinates, in order; in
    2D the "cylinder" is a slab of half-width ``radius``.
    """

    axis: int
    center2d: np.ndarray
    radius: float
    kind = KIND_CYLINDER

    def __post_init__(self):
        c = np.asarray(self.center2d, dtype=float).reshape(-1)
        if c.shape[0] not in (1, 2) or not np.all(np.isfinite(c)):
            raise InvalidInputError("cylinder center must have 1 or 2 finite coordinates")
        object.__setattr__(self, "center2d", c)
        object.__setattr__(self, "radius", float(self.radius))
        if not 0 <= int(self.axis) <= c.shape[0]:
            raise InvalidInputError(f"cylinder axis {self.axis} out of range")
        object.__setattr__(self, "axis", int(self.axis))
        if not self.radius >= 0.0:
            raise InvalidInputError(f"cylinder radius must be >= 0, got {self.radius}")

    @property
    def dim(self) -> int:
        return self.center2d.shape[0] + 1

    @cached_property
    def _mask(self) -> np.ndarray:
        m = np.ones(self.dim)
        m[self.axis] = 0.0
        return m

    @cached_property
    def center_full(self) -> np.ndarray:
        c = np.zeros(self.dim)
        c[self._mask.astype(bool)] = self.center2d
        return c

    def value(self, q):
        u = (self._check(q) - self.center_full) * self._mask
        return float(np.dot(u, u) - self.radius ** 2)

    def gradient(self, q):
        return 2.0 * (self._check(q) - self.center_full) * self._mask

    def hessian(self, q):
        return 2.0 * np.diag(self._mask)

    def row(self):
        r = np.zeros(ROW_WIDTH)
        r[0] = KIND_CYLINDER
        r[2] = self.axis
        r[3:3 + self.dim] = self.center_full
        r[6] = self.radius
        return r


@dataclass(frozen=True, eq=False)
class CaptureFrontier(ConstraintAtom):
    """Boundary of the region an attacker can reach before a defender.

    ``value(q) = (gamma*|q - a| + r)**2 - |q - d|**2`` is convex in ``q``
    whenever ``gamma >= 1`` and ``r >= 0``.
    """

    defender_pos: np.ndarray
    attacker_pos: np.ndarray
    gamma: float
    capture_radius: float
    kind = KIND_FRONTIER

    def __post_init__(self):
        d = as_vec(self.defender_pos)
        a = as_vec(self.attacker_pos, d.shape[0])
        object.__setattr__(self, "defender_pos", d)
        object.__setattr__(self, "attacker_pos", a)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "capture_radius", float(self.capture_radius))
        if not self.gamma >= 1.0:
            raise InvalidInputError(
                f"speed ratio gamma={self.gamma} < 1: defenders must be at least as fast as attackers")
        if not self.capture_radius >= 0.0:
            raise InvalidInputError(f"capture radius must be >= 0, got {self.capture_radius}")

    @property
    def dim(self) -> int:
        return self.defender_pos.shape[0]

    def value(self, q):
        q = self._check(q)
        u = q - self.attacker_pos
        w = q - self.defender_pos
        sa = float(np.dot(u, u))
        g, r = self.gamma, self.capture_radius
        # expanded form keeps gamma=1, r=0 an exact difference of squares
        return g * g * sa + 2.0 * r * g * np.sqrt(sa) + r * r - float(np.dot(w, w))

    def gradient(self, q):
        q = self._check(q)
        u = q - self.attacker_pos
        rho = float(np.sqrt(np.dot(u, u)))
        g, r = self.gamma, self.capture_radius
        grad = 2.0 * g * g * u - 2.0 * (q - self.defender_pos)
        if rho > NORM_FLOOR:
            grad += 2.0 * r * g * u / rho
        return grad

    def hessian(self, q):
        q = self._check(q)
        u = q - self.attacker_pos
        rho = float(np.sqrt(np.dot(u, u)))
        g, r = self.gamma, self.capture_radius
        n = self.dim
        h = 2.0 * (g * g - 1.0) * np.eye(n)
        if rho > NORM_FLOOR:
            h += 2.0 * r * g / rho * (np.eye(n) - np.outer(u, u) / (rho * rho))
        else:
            h += NORM_FLOOR * np.eye(n)
        return h

    def row(self):
        r = np.zeros(ROW_WIDTH)
        r[0] = KIND_FRONTIER
        n = self.dim
        r[2:2 + n] = self.defender_pos
        r[5:5 + n] = self.attacker_pos
        r[8] = self.gamma
        r[9] = self.capture_radius
        return r


def atom_value(atom: ConstraintAtom, q) -> float:
    """Scalar constraint value of ``atom`` at ``q``."""
    return atom.value(q)


def atom_gradient(atom: ConstraintAtom, q) -> np.ndarray:
    """Gradient of ``atom`` at ``q``.

    At ``q == attacker_pos`` a capture frontier returns the subgradient whose
    norm-term direction is zero.
    """
    return atom.gradient(q)


def capture_frontier_param_gradients(atom: CaptureFrontier, q):
    """Partial derivatives of a capture frontier w.r.t. both agent positions.

    Returns ``(grad_d, grad_a)`` with ``grad_d = 2 (q - d)`` and
    ``grad_a = -2 zeta (q - a)``, ``zeta = gamma**2 + r*gamma/|q - a|``.
    """
    if not isinstance(atom, CaptureFrontier):
        raise InvalidInputError("parameter gradients are defined for capture frontiers only")
    q = atom._check(q)
    u = q - atom.attacker_pos
    rho = float(np.sqrt(np.dot(u, u)))
    if rho == 0.0:
        raise DegeneratePointError("capture frontier is not differentiable at the attacker position")
    zeta = atom.gamma ** 2 + atom.capture_radius * atom.gamma / rho
    return 2.0 * (q - atom.defender_pos), -2.0 * zeta * u


@dataclass(frozen=True)
class EqualityInfo:
    """Affine equalities implied by degenerate atoms of one region.

    ``A q = b`` collects zero-radius balls and cylinders and pairs of opposing
    half-spaces.  ``consumed`` lists atom indices replaced by the equalities;
    ``pair_map[k]`` lists ``(atom_index, scale)`` such that a multiplier
    ``nu_k`` on row ``k`` corresponds to atom multiplier ``max(scale*nu_k, 0)``.
    """

    A: np.ndarray
    b: np.ndarray
    consumed: frozenset
    pair_map: tuple
    # particular solution, null-space basis; None when no equalities
    particular: np.ndarray | None
    basis: np.ndarray | None
    consistent: bool


def _detect_equalities(atoms: Sequence[ConstraintAtom], n: int) -> EqualityInfo:
    rows, rhs, pair_map = [], [], []
    consumed: set[int] = set()
    for i, atom in enumerate(atoms):
        if isinstance(atom, Ball) and atom.radius == 0.0:
            for k in range(n):
                e = np.zeros(n)
                e[k] = 1.0
                rows.append(e)
                rhs.append(atom.center[k])
                pair_map.append(())
            consumed.add(i)
        elif isinstance(atom, AxisCylinder) and atom.radius == 0.0:
            for k in range(n):
                if k == atom.axis:
                    continue
                e = np.zeros(n)
                e[k] = 1.0
                rows.append(e)
                rhs.append(atom.center_full[k])
                pair_map.append(())
            consumed.add(i)
    affine = [(i, a) for i, a in enumerate(atoms) if isinstance(a, Affine) and i not in consumed]
    for p, (i, ai) in enumerate(affine):
        if i in consumed:
            continue
        ni = np.linalg.norm(ai.normal)
        ui, oi = ai.normal / ni, ai.offset / ni
        for j, aj in affine[p + 1:]:
            if j in consumed:
                continue
            nj = np.linalg.norm(aj.normal)
            uj, oj = aj.normal / nj, aj.offset / nj
            if np.max(np.abs(ui + uj)) <= 1e-12 and abs(oi + oj) <= 1e-12 * (1 + abs(oi)):
                rows.append(ui)
                rhs.append(-oi)
                pair_map.append(((i, 1.0 / ni), (j, -1.0 / nj)))
                consumed.update((i, j))
                break
    if not rows:
        return EqualityInfo(np.zeros((0, n)), np.zeros(0), frozenset(), (), None, None, True)
    A = np.array(rows)
    b = np.array(rhs)
    x_p, *_ = np.linalg.lstsq(A, b, rcond=None)
    consistent = bool(np.max(np.abs(A @ x_p - b)) <= 1e-9)
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
    basis = vt[rank:].T.copy()
    return EqualityInfo(A, b, frozenset(consumed), tuple(pair_map), x_p, basis, consistent)


@dataclass(frozen=True, eq=False)
class ConvexRegion:
    """Intersection of atoms; an empty atom list is the whole space."""

    atoms: tuple = ()
    _eq_source: "ConvexRegion | None" = field(default=None, repr=False)

    def __post_init__(self):
        atoms = tuple(self.atoms)
        dims = {a.dim for a in atoms}
        if len(dims) > 1:
            raise InvalidInputError(f"atoms of mixed dimension {sorted(dims)}")
        object.__setattr__(self, "atoms", atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def dim(self) -> int | None:
        return self.atoms[0].dim if self.atoms else None

    @cached_property
    def rows(self) -> np.ndarray:
        if not self.atoms:
            return np.zeros((0, ROW_WIDTH))
        return np.vstack([a.row() for a in self.atoms])

    @cached_property
    def equalities(self) -> EqualityInfo:
        n = self.dim or 0
        if self._eq_source is not None:
            return self._eq_source.equalities
        return _detect_equalities(self.atoms, n)

    @cached_property
    def box_bounds(self):
        """``(lo, hi)`` if every atom is an axis-aligned half-space, else None."""
        if not self.atoms or not all(isinstance(a, Affine) for a in self.atoms):
            return None
        n = self.dim
        lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
        for a in self.atoms:
            nz = np.flatnonzero(a.normal)
            if nz.size != 1:
                return None
            k = nz[0]
            bound = -a.offset / a.normal[k]
            if a.normal[k] > 0:
                hi[k] = min(hi[k], bound)
            else:
                lo[k] = max(lo[k], bound)
        return lo, hi

    def values(self, q) -> np.ndarray:
        return np.array([a.value(q) for a in self.atoms])

    def max_value(self, q) -> float:
        if not self.atoms:
            return -np.inf
        bounds = self._unit_box
        if bounds is not None:
            q = as_vec(q, self.dim)
            lo, hi = bounds
            return float(max(np.max(lo - q), np.max(q - hi)))
        return max(a.value(q) for a in self.atoms)

    @cached_property
    def _unit_box(self):
        # box regions built from unit axis normals: atom values are plain coordinate gaps
        if self.box_bounds is None or not all(np.max(np.abs(a.normal)) == 1.0 for a in self.atoms):
            return None
        return self.box_bounds

    def contains(self, q, eps: float = DEFAULT_EPS) -> bool:
        return region_contains(self, q, eps)

    def extended(self, extra: Iterable[ConstraintAtom]) -> "ConvexRegion":
        """New region with ``extra`` atoms appended.

        Capture frontiers never create equalities, so when only frontiers are
        added the equality analysis of ``self`` is reused.
        """
        extra = tuple(extra)
        src = self if all(isinstance(a, CaptureFrontier) for a in extra) else None
        if src is not None and src._eq_source is not None:
            src = src._eq_source
        out = ConvexRegion(self.atoms + extra, _eq_source=src)
        if extra and "rows" in self.__dict__:
            out.__dict__["rows"] = np.vstack([self.rows] + [a.row() for a in extra])
        return out


def region_contains(region: ConvexRegion, q, eps: float = DEFAULT_EPS) -> bool:
    """True iff every atom value at ``q`` is at most ``eps``."""
    if eps < 0:
        raise InvalidInputError("eps must be >= 0")
    if not region.atoms:
        return True
    return region.max_value(q) <= eps


def build_srs(defender_positions, attacker_position, gammas, radii,
              domain: ConvexRegion) -> ConvexRegion:
    """Safe-reachable set of one attacker against a coalition of defenders.

    The result is ``domain`` intersected with one capture frontier per
    defender; an empty coalition returns ``domain`` itself.
    """
    defender_positions = list(defender_positions)
    gammas, radii = list(gammas), list(radii)
    if not len(defender_positions) == len(gammas) == len(radii):
        raise InvalidInputError("defender positions, gammas and radii differ in length")
    if not defender_positions:
        return domain
    a = as_vec(attacker_position, domain.dim)
    frontiers = [CaptureFrontier(d, a, g, r)
                 for d, g, r in zip(defender_positions, gammas, radii)]
    return domain.extended(frontiers)


# -- shape constructors -------------------------------------------------------

def box(lo, hi) -> ConvexRegion:
    """Axis-aligned box; ``lo[k] == hi[k]`` yields a flat face or segment."""
    lo, hi = as_vec(lo), as_vec(hi)
    if lo.shape != hi.shape or np.any(lo > hi):
        raise InvalidInputError(f"invalid box bounds lo={lo}, hi={hi}")
    n = lo.shape[0]
    atoms = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        atoms.append(Affine(e, -hi[k]))
        atoms.append(Affine(-e, lo[k]))
    return ConvexRegion(tuple(atoms))


def ball(center, radius) -> ConvexRegion:
    return ConvexRegion((Ball(center, radius),))


def cylinder(axis: int, center2d, radius, lo: float, hi: float) -> ConvexRegion:
    """Finite cylinder around ``axis`` between heights ``lo`` and ``hi``."""
    cyl = AxisCylinder(axis, center2d, radius)
    e = np.zeros(cyl.dim)
    e[axis] = 1.0
    return ConvexRegion((cyl, Affine(e, -hi), Affine(-e, lo)))


def project_to_domain(domain: ConvexRegion, q, counter=None) -> np.ndarray:
    """Euclidean projection of ``q`` onto ``domain``.

    Points already inside are returned unchanged.  Boxes are clamped exactly;
    other domains go through the solver's projection program.
    """
    q = as_vec(q, domain.dim)
    if region_contains(domain, q, 0.0):
        return q
    bounds = domain.box_bounds
    if bounds is not None:
        return np.clip(q, bounds[0], bounds[1])
    from .errors import SolverError
    from .solver import Status, solve_projection

    res = solve_projection(q, domain, counter)
    if res.status is Status.INFEASIBLE:
        raise SolverError("projection onto an empty domain")
    return res.primal_q

"""SVG plots of safe-reachable sets and game traces.

Region boundaries are traced by ray marching: from a point inside the region,
bisect along each ray for the last point that still satisfies every atom.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .allocation import Coalition
from .coordination import single_attack_value
from .engine import ScenarioConfig, team_state, initial_state
from .errors import InvalidInputError, UnsupportedDimensionError
from .geometry import ConvexRegion
from .solver import interior_guess

N_RAYS = 360
BISECT_STEPS = 48
SIZE = 480


def ray_march(region: ConvexRegion, origin, directions, t_max: float) -> np.ndarray:
    """Distance along each unit direction to the region boundary.

    ``origin`` must lie in the region; rays are cut at ``t_max``.
    """
    origin = np.asarray(origin, float)
    out = np.empty(len(directions))
    for k, u in enumerate(directions):
        lo, hi = 0.0, t_max
        if region.contains(origin + hi * u, 0.0):
            out[k] = hi
            continue
        for _ in range(BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            if region.contains(origin + mid * u, 0.0):
                lo = mid
            else:
                hi = mid
        out[k] = lo
    return out


def boundary_polyline(region: ConvexRegion, origin, t_max: float, n_rays: int = N_RAYS) -> np.ndarray:
    """2D boundary points of a region that contains ``origin``."""
    th = np.linspace(0.0, 2.0 * np.pi, n_rays, endpoint=False)
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    t = ray_march(region, origin, dirs, t_max)
    return np.asarray(origin, float) + t[:, None] * dirs


def sphere_directions(n: int) -> np.ndarray:
    """Roughly uniform unit vectors on the sphere (Fibonacci lattice)."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    s = np.sqrt(1.0 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def _extent(cfg: ScenarioConfig):
    bounds = cfg.domain.box_bounds
    if bounds is None:
        raise InvalidInputError("plotting needs a bounded box domain")
    lo, hi = bounds
    if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
        raise InvalidInputError("plotting needs a bounded box domain")
    return np.asarray(lo, float), np.asarray(hi, float)


def _srs_view(cfg: ScenarioConfig, attacker_id: int, coalition):
    team = team_state(initial_state(cfg), cfg)
    ids = Coalition(tuple(coalition) if coalition else team.defender_ids)
    return team.view(ids, attacker_id)


class _Svg:
    def __init__(self, lo, hi):
        self.lo, self.hi = lo, hi
        span = float(np.max(hi - lo))
        self.scale = (SIZE - 40) / span
        self.parts = []

    def xy(self, p):
        x = 20 + (p[0] - self.lo[0]) * self.scale
        y = SIZE - 20 - (p[1] - self.lo[1]) * self.scale
        return f"{x:.2f},{y:.2f}"

    def poly(self, pts, fill, stroke, opacity=0.5, closed=True):
        tag = "polygon" if closed else "polyline"
        pts = " ".join(self.xy(p) for p in pts)
        self.parts.append(f'<{tag} points="{pts}" fill="{fill}" fill-opacity="{opacity}" '
                          f'stroke="{stroke}" stroke-width="1"/>')

    def circle(self, c, r, fill, opacity=0.5):
        x, y = self.xy(c).split(",")
        self.parts.append(f'<circle cx="{x}" cy="{y}" r="{max(r * self.scale, 2.0):.2f}" '
                          f'fill="{fill}" fill-opacity="{opacity}"/>')

    def text(self, p, s, color="black"):
        x, y = self.xy(p).split(",")
        self.parts.append(f'<text x="{x}" y="{y}" font-size="14" fill="{color}">{s}</text>')

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
                f'viewBox="0 0 {SIZE} {SIZE}">\n{body}\n</svg>\n')


def emit_srs_plot(scenario: ScenarioConfig, attacker_id: int, coalition, path) -> Path:
    """Write an SVG of domain, target, capture disks, SRS boundary and waypoint.

    Parameters
    ----------
    scenario : ScenarioConfig
        A 2D scenario; 3D input raises UnsupportedDimensionError (use
        ``emit_srs_point_cloud``).
    attacker_id : int
    coalition : iterable of int or None
        Defenders forming the SRS; None means all defenders.
    path : path-like
    """
    if scenario.dim != 2:
        raise UnsupportedDimensionError("SRS plots are 2D only; use emit_srs_point_cloud for 3D")
    lo, hi = _extent(scenario)
    view = _srs_view(scenario, attacker_id, coalition)
    srs = view.srs(scenario.domain)
    diam = float(np.linalg.norm(hi - lo))
    svg = _Svg(lo, hi)
    svg.poly([lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]], "white", "black", 1.0)
    tc = interior_guess(scenario.target, 2)
    svg.poly(boundary_polyline(scenario.target, tc, diam), "green", "darkgreen", 0.4)
    for d, r in zip(view.defender_positions, view.radii):
        svg.circle(d, r, "blue", 0.35)
        svg.circle(d, 0.0, "blue", 1.0)
    a = view.attacker_position
    if srs.contains(a, 0.0):
        svg.poly(boundary_polyline(srs, a, diam), "red", "darkred", 0.35)
        phi, xi = single_attack_value(view, scenario.domain, scenario.target, None)
        if xi is not None:
            svg.circle(xi, 0.0, "orange", 1.0)
            svg.text(xi, f"xi (phi={phi:.3g})", "darkorange")
    else:
        svg.text(a, "empty SRS: attacker inside a capture region", "darkred")
    svg.circle(a, 0.0, "red", 1.0)
    path = Path(path)
    path.write_text(svg.render())
    return path


def emit_srs_point_cloud(scenario: ScenarioConfig, attacker_id: int, coalition, path,
                         n_rays: int = 2000) -> Path:
    """CSV of SRS boundary points (x, y[, z]); empty body when the SRS is empty."""
    lo, hi = _extent(scenario)
    view = _srs_view(scenario, attacker_id, coalition)
    srs = view.srs(scenario.domain)
    a = view.attacker_position
    cols = ["x", "y", "z"][: scenario.dim]
    lines = [",".join(cols)]
    if srs.contains(a, 0.0):
        if scenario.dim == 2:
            pts = boundary_polyline(srs, a, float(np.linalg.norm(hi - lo)), n_rays)
        else:
            dirs = sphere_directions(n_rays)
            t = ray_march(srs, a, dirs, float(np.linalg.norm(hi - lo)))
            pts = a + t[:, None] * dirs
        lines += [",".join(repr(float(x)) for x in p) for p in pts]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_trace_plot(trace, path) -> Path:
    """SVG of agent trajectories from a 2D game trace."""
    cfg = trace.config
    if cfg.dim != 2:
        raise UnsupportedDimensionError("trajectory plots are 2D only")
    lo, hi = _extent(cfg)
    svg = _Svg(lo, hi)
    svg.poly([lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]], "white", "black", 1.0)
    svg.poly(boundary_polyline(cfg.target, interior_guess(cfg.target, 2), float(np.linalg.norm(hi - lo))),
             "green", "darkgreen", 0.4)
    for i in range(len(cfg.defenders)):
        svg.poly([s.defender_positions[i] for s in trace.states], "none", "blue", 0.0, closed=False)
    for j in range(len(cfg.attackers)):
        svg.poly([s.attacker_positions[j] for s in trace.states], "none", "red", 0.0, closed=False)
    path = Path(path)
    path.write_text(svg.render())
    return path

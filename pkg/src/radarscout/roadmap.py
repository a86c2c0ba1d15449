"""Voronoi-style roadmaps around threat sites, plus shortest paths on them.

Two constructions share one graph type.  With fully known radars the roadmap
is a multiplicatively weighted Voronoi diagram: every edge is a maximal piece
of a pairwise Apollonius circle (or perpendicular bisector) on which its two
generators are weighted-nearest, clipped to the operating region, with the
region boundary itself added as traversable edges.  With estimated radars the
partition instead labels a dense grid by the radar most likely to violate the
detection threshold, extracts the label boundaries, and fits cubic splines to
them.  Paths come from A* over arc lengths.

Construction is sampling-based on purpose: circles are sampled and refined by
bisection at dominance changes, which is simple to verify against brute-force
dominance oracles at configurable resolution.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .bspline import BSplineTrajectory, fit_to_path, sample_polyline
from .core import Position2, Region, TWO_PI
from .estimator import RadarEstimate
from .pd_uncertainty import (
    KnownParamBelief,
    pd_below_zscore,
    pd_belief_batch,
    per_radar_zscores,
)
from .radar import pd_field

_DOMINANCE_RTOL = 1e-9
_CIRCLE_SAMPLES = 256
_EDGE_SAMPLE_POINTS = 33
_SPLIT_SAMPLE_POINTS = 65


@dataclass(frozen=True)
class WeightedSite:
    position: Position2
    weight: float

    def __post_init__(self):
        if self.weight <= 0.0:
            raise ValueError("site weight must be positive")


@dataclass(frozen=True)
class ArcEdge:
    """Circular-arc edge: CCW from theta0 to thetaf about center."""

    center: Position2
    radius: float
    theta0: float
    thetaf: float
    site_i: int = -1
    site_j: int = -1

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("arc radius must be positive")
        if not self.thetaf > self.theta0:
            raise ValueError("arc must sweep a positive angle")

    def point_at(self, theta):
        th = np.asarray(theta, dtype=float)
        c = self.center.as_array()
        out = np.stack(
            [c[0] + self.radius * np.cos(th), c[1] + self.radius * np.sin(th)],
            axis=-1,
        )
        return out

    def sample(self, n: int) -> np.ndarray:
        return self.point_at(np.linspace(self.theta0, self.thetaf, n))

    @property
    def arc_length(self) -> float:
        return self.radius * (self.thetaf - self.theta0)


@dataclass(frozen=True)
class SegmentGeometry:
    a: Position2
    b: Position2

    def sample(self, n: int) -> np.ndarray:
        t = np.linspace(0.0, 1.0, n)[:, None]
        return (1.0 - t) * self.a.as_array()[None, :] + t * self.b.as_array()[None, :]

    @property
    def arc_length(self) -> float:
        return self.a.distance_to(self.b)


@dataclass(frozen=True)
class SplineEdge:
    """Cubic curve fitted to a sampled label boundary."""

    curve: BSplineTrajectory
    site_i: int = -1
    site_j: int = -1

    def sample(self, n: int) -> np.ndarray:
        return sample_polyline(self.curve, n)

    @property
    def arc_length(self) -> float:
        pts = self.sample(128)
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


@dataclass(frozen=True, eq=False)
class PolylineGeometry:
    """Piecewise-linear geometry for the surviving pieces of a split edge."""

    points: np.ndarray

    def sample(self, n: int) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        if s[-1] <= 0.0:
            return np.repeat(self.points[:1], n, axis=0)
        t = np.linspace(0.0, s[-1], n)
        return np.column_stack([
            np.interp(t, s, self.points[:, 0]),
            np.interp(t, s, self.points[:, 1]),
        ])

    @property
    def arc_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


@dataclass(frozen=True)
class BisectorLine:
    """Unbounded equal-weight locus: a perpendicular bisector."""

    point: Position2
    direction: Position2  # unit vector


@dataclass
class GraphEdge:
    u: int
    v: int
    geometry: ArcEdge | SegmentGeometry | SplineEdge | PolylineGeometry
    length: float
    samples: np.ndarray  # polyline from u to v
    kind: str            # arc | bisector | boundary | spline | connector
    sites: tuple[int, int] | None = None


@dataclass
class RoadmapGraph:
    vertices: np.ndarray         # (n, 2)
    edges: list[GraphEdge]
    region: Region

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def adjacency(self) -> list[list[tuple[int, int]]]:
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_vertices)]
        for idx, e in enumerate(self.edges):
            adj[e.u].append((idx, e.v))
            adj[e.v].append((idx, e.u))
        return adj

    def without_edges(self, drop: set[int]) -> "RoadmapGraph":
        kept = [e for i, e in enumerate(self.edges) if i not in drop]
        return RoadmapGraph(self.vertices.copy(), kept, self.region)

    def nearest_vertices(self, point, k: int) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        d = np.linalg.norm(self.vertices - p[None, :], axis=1)
        return np.argsort(d, kind="stable")[:k]


class _GraphBuilder:
    """Accumulates vertices with tolerance-based merging, then edges."""

    def __init__(self, region: Region, merge_tol: float):
        self.region = region
        self.merge_tol = merge_tol
        self.points: list[np.ndarray] = []
        self.edges: list[GraphEdge] = []

    def vertex(self, p) -> int:
        p = np.asarray(p, dtype=float).reshape(2)
        for i, q in enumerate(self.points):
            if abs(p[0] - q[0]) <= self.merge_tol and abs(p[1] - q[1]) <= self.merge_tol:
                if np.hypot(*(p - q)) <= self.merge_tol:
                    return i
        self.points.append(p)
        return len(self.points) - 1

    def add_edge(self, u: int, v: int, geometry, kind: str,
                 sites: tuple[int, int] | None = None) -> None:
        samples = geometry.sample(_EDGE_SAMPLE_POINTS)
        length = float(np.linalg.norm(np.diff(samples, axis=0), axis=1).sum())
        if isinstance(geometry, (ArcEdge, SegmentGeometry)):
            length = geometry.arc_length
        if length <= 4.0 * self.merge_tol:
            return
        self.edges.append(GraphEdge(u, v, geometry, length, samples, kind, sites))

    def build(self) -> RoadmapGraph:
        verts = (np.asarray(self.points) if self.points
                 else np.zeros((0, 2)))
        return RoadmapGraph(verts, self.edges, self.region)


def apollonius_circle(site_i: WeightedSite, site_j: WeightedSite):
    """Locus of equal weighted distance to two sites.

    Equal weights give the perpendicular bisector; otherwise the circle of
    distance ratio k = w_i/w_j, which wraps around the lighter-weight site.
    """
    a = site_i.position.as_array()
    b = site_j.position.as_array()
    gap = float(np.linalg.norm(a - b))
    if gap <= 0.0:
        raise ValueError("generators must be distinct")
    w_i, w_j = site_i.weight, site_j.weight
    if abs(w_i - w_j) <= 1e-12 * (w_i + w_j):
        mid = 0.5 * (a + b)
        d = (b - a) / gap
        return BisectorLine(Position2.from_array(mid),
                            Position2(-d[1], d[0]))
    k = w_i / w_j
    denom = 1.0 - k * k
    center = (a - k * k * b) / denom
    radius = k * gap / abs(denom)
    return ArcEdge(Position2.from_array(center), radius, 0.0, TWO_PI,
                   site_i=-1, site_j=-1)


def _weighted_distances(points: np.ndarray, sites: Sequence[WeightedSite]) -> np.ndarray:
    pos = np.stack([s.position.as_array() for s in sites])
    w = np.array([s.weight for s in sites])
    d = np.linalg.norm(points[:, None, :] - pos[None, :, :], axis=2)
    return d / w[None, :]


def _dominance_flags(points: np.ndarray, sites, i: int, j: int,
                     region: Region) -> np.ndarray:
    """True where the pair (i, j) is weighted-nearest and the point is inside."""
    wd = _weighted_distances(points, sites)
    own = 0.5 * (wd[:, i] + wd[:, j])
    best = wd.min(axis=1)
    dominant = own <= best * (1.0 + _DOMINANCE_RTOL) + 1e-12
    inside = region.contains(points, slack=1e-9 * region.diagonal)
    return dominant & inside


def _refine_boundary(p_of, t_true: float, t_false: float, sites, i, j,
                     region: Region, iters: int = 48) -> float:
    """Bisect the dominance predicate along a 1-parameter family."""
    for _ in range(iters):
        mid = 0.5 * (t_true + t_false)
        ok = bool(_dominance_flags(p_of(np.array([mid])), sites, i, j, region)[0])
        if ok:
            t_true = mid
        else:
            t_false = mid
    return t_true


def _runs_circular(flags: np.ndarray) -> list[tuple[int, int]] | None:
    """Index runs of True in a circular array; None when all True."""
    n = flags.size
    if flags.all():
        return None
    if not flags.any():
        return []
    runs = []
    starts = np.nonzero(flags & ~np.roll(flags, 1))[0]
    for s in starts:
        e = s
        while flags[(e + 1) % n]:
            e += 1
        runs.append((int(s), int(e)))
    return runs


def _clip_line_to_region(line: BisectorLine, region: Region):
    """Parameter interval of the line inside the rectangle (slab clipping)."""
    p = line.point.as_array()
    d = line.direction.as_array()
    t_lo, t_hi = -math.inf, math.inf
    for axis, (lo, hi) in enumerate(
        [(region.lower.x, region.upper.x), (region.lower.y, region.upper.y)]
    ):
        if abs(d[axis]) < 1e-15:
            if not (lo <= p[axis] <= hi):
                return None
            continue
        t0 = (lo - p[axis]) / d[axis]
        t1 = (hi - p[axis]) / d[axis]
        t_lo = max(t_lo, min(t0, t1))
        t_hi = min(t_hi, max(t0, t1))
    if not t_lo < t_hi:
        return None
    return t_lo, t_hi


def _collect_pair_pieces(sites, i: int, j: int, region: Region):
    """Maximal dominant pieces of one pair's equal-distance locus.

    Returns a list of geometry objects (arcs or segments) ready for the graph.
    """
    locus = apollonius_circle(sites[i], sites[j])
    pieces = []
    if isinstance(locus, ArcEdge):
        c = locus.center.as_array()
        r = locus.radius

        def p_of(theta):
            th = np.atleast_1d(theta)
            return np.stack([c[0] + r * np.cos(th), c[1] + r * np.sin(th)], axis=1)

        thetas = np.arange(_CIRCLE_SAMPLES) * (TWO_PI / _CIRCLE_SAMPLES)
        flags = _dominance_flags(p_of(thetas), sites, i, j, region)
        runs = _runs_circular(flags)
        if runs is None:
            # Whole circle survives: split into two arcs for a sane graph.
            half = math.pi
            pieces.append(replace(locus, theta0=0.0, thetaf=half,
                                  site_i=i, site_j=j))
            pieces.append(replace(locus, theta0=half, thetaf=TWO_PI,
                                  site_i=i, site_j=j))
            return pieces
        step = TWO_PI / _CIRCLE_SAMPLES
        for s, e in runs:
            th_lo = s * step
            th_hi = e * step
            th_lo = _refine_boundary(p_of, th_lo, th_lo - step, sites, i, j, region)
            th_hi = _refine_boundary(p_of, th_hi, th_hi + step, sites, i, j, region)
            if th_hi <= th_lo:
                th_hi += TWO_PI
            span = th_hi - th_lo
            if span * r <= 1e-9 * region.diagonal:
                continue
            th_lo = math.remainder(th_lo, TWO_PI)
            if th_lo < 0.0:
                th_lo += TWO_PI
            pieces.append(replace(locus, theta0=th_lo, thetaf=th_lo + span,
                                  site_i=i, site_j=j))
        return pieces
    clip = _clip_line_to_region(locus, region)
    if clip is None:
        return pieces
    p0 = locus.point.as_array()
    d = locus.direction.as_array()

    def p_of(t):
        tt = np.atleast_1d(t)
        return p0[None, :] + tt[:, None] * d[None, :]

    t_lo, t_hi = clip
    ts = np.linspace(t_lo, t_hi, _CIRCLE_SAMPLES)
    flags = _dominance_flags(p_of(ts), sites, i, j, region)
    if not flags.any():
        return pieces
    k = 0
    n = flags.size
    while k < n:
        if not flags[k]:
            k += 1
            continue
        e = k
        while e + 1 < n and flags[e + 1]:
            e += 1
        a = ts[k]
        b = ts[e]
        if k > 0:
            a = _refine_boundary(p_of, ts[k], ts[k - 1], sites, i, j, region)
        if e + 1 < n:
            b = _refine_boundary(p_of, ts[e], ts[e + 1], sites, i, j, region)
        pa = p_of(np.array([a]))[0]
        pb = p_of(np.array([b]))[0]
        if np.linalg.norm(pb - pa) > 1e-9 * region.diagonal:
            pieces.append((Position2.from_array(pa), Position2.from_array(pb), i, j))
        k = e + 1
    return pieces


def _perimeter_param(region: Region, p: np.ndarray) -> float:
    """Arc-length position of a boundary point along the perimeter (CCW)."""
    lx, ly = region.lower.x, region.lower.y
    ux, uy = region.upper.x, region.upper.y
    w, h = region.width, region.height
    d_bottom = abs(p[1] - ly)
    d_right = abs(p[0] - ux)
    d_top = abs(p[1] - uy)
    d_left = abs(p[0] - lx)
    side = int(np.argmin([d_bottom, d_right, d_top, d_left]))
    if side == 0:
        return float(np.clip(p[0] - lx, 0.0, w))
    if side == 1:
        return w + float(np.clip(p[1] - ly, 0.0, h))
    if side == 2:
        return w + h + float(np.clip(ux - p[0], 0.0, w))
    return 2.0 * w + h + float(np.clip(uy - p[1], 0.0, h))


def _on_boundary(region: Region, p: np.ndarray, tol: float) -> bool:
    near_x = min(abs(p[0] - region.lower.x), abs(p[0] - region.upper.x)) <= tol
    near_y = min(abs(p[1] - region.lower.y), abs(p[1] - region.upper.y)) <= tol
    inside = region.contains(p, slack=tol)
    return inside and (near_x or near_y)


def _add_boundary_cycle(builder: _GraphBuilder, boundary_tol: float) -> None:
    """Close the region boundary through every vertex sitting on it."""
    region = builder.region
    entries = []
    for idx, p in enumerate(builder.points):
        if _on_boundary(region, p, boundary_tol):
            entries.append((_perimeter_param(region, p), idx))
    for corner in region.corners():
        idx = builder.vertex(corner)
        param = _perimeter_param(region, corner)
        if not any(i == idx for _, i in entries):
            entries.append((param, idx))
    entries.sort()
    n = len(entries)
    for k in range(n):
        _, u = entries[k]
        _, v = entries[(k + 1) % n]
        if u == v:
            continue
        geom = SegmentGeometry(Position2.from_array(builder.points[u]),
                               Position2.from_array(builder.points[v]))
        builder.add_edge(u, v, geom, "boundary")


def build_weighted_diagram(sites: Sequence[WeightedSite],
                           region: Region) -> RoadmapGraph:
    """Weighted Voronoi roadmap: dominant Apollonius pieces plus the boundary."""
    if len(sites) == 0:
        raise ValueError("need at least one site")
    for s in sites:
        if not region.contains(s.position.as_array(), slack=1e-9 * region.diagonal):
            raise ValueError("sites must lie inside the region")
    merge_tol = 2.5e-5 * region.diagonal
    builder = _GraphBuilder(region, merge_tol)
    n = len(sites)
    for i in range(n):
        for j in range(i + 1, n):
            for piece in _collect_pair_pieces(sites, i, j, region):
                if isinstance(piece, ArcEdge):
                    u = builder.vertex(piece.point_at(piece.theta0))
                    v = builder.vertex(piece.point_at(piece.thetaf))
                    if u == v and piece.arc_length <= 8.0 * merge_tol:
                        continue
                    builder.add_edge(u, v, piece, "arc", (i, j))
                else:
                    pa, pb, si, sj = piece
                    u = builder.vertex(pa.as_array())
                    v = builder.vertex(pb.as_array())
                    if u == v:
                        continue
                    builder.add_edge(u, v, SegmentGeometry(pa, pb),
                                     "bisector", (si, sj))
    _add_boundary_cycle(builder, 4.0 * merge_tol)
    return builder.build()


def arc_closest_point(edge: ArcEdge, q: Position2) -> Position2:
    """Nearest point of an arc to a query: angular projection or an endpoint.

    A query at the center is equidistant from the whole arc; the arc start is
    returned as the documented tie-break.
    """
    c = edge.center.as_array()
    v = q.as_array() - c
    r = float(np.linalg.norm(v))
    if r <= 1e-12:
        return Position2.from_array(edge.point_at(edge.theta0))
    phi = math.atan2(v[1], v[0])
    # Lift phi into [theta0, theta0 + 2pi) so the range test is direct.
    lifted = edge.theta0 + math.remainder(phi - edge.theta0, TWO_PI)
    if lifted < edge.theta0:
        lifted += TWO_PI
    if lifted <= edge.thetaf:
        return Position2.from_array(edge.point_at(lifted))
    p0 = edge.point_at(edge.theta0)
    p1 = edge.point_at(edge.thetaf)
    d0 = np.linalg.norm(q.as_array() - p0)
    d1 = np.linalg.norm(q.as_array() - p1)
    return Position2.from_array(p0 if d0 <= d1 else p1)


def _edge_max_pd_points(edge: GraphEdge, radar_positions: np.ndarray) -> np.ndarray:
    """Candidate maximizer points of detection probability along an edge."""
    pts = [edge.samples]
    if isinstance(edge.geometry, ArcEdge):
        closest = [
            arc_closest_point(edge.geometry, Position2(*rp)).as_array()
            for rp in radar_positions
        ]
        if closest:
            pts.append(np.stack(closest))
    else:
        # Straight pieces: include each radar's perpendicular foot point.
        a = edge.samples[0]
        b = edge.samples[-1]
        ab = b - a
        denom = float(ab @ ab)
        if denom > 0.0 and radar_positions.size:
            t = np.clip(((radar_positions - a[None, :]) @ ab) / denom, 0.0, 1.0)
            pts.append(a[None, :] + t[:, None] * ab[None, :])
    return np.concatenate(pts, axis=0)


def _dense_edge_params(edge: GraphEdge, radar_positions: np.ndarray,
                       n: int) -> np.ndarray:
    """Ordered sample points along an edge, exact pd maximizers merged in."""
    geom = edge.geometry
    if isinstance(geom, ArcEdge):
        thetas = list(np.linspace(geom.theta0, geom.thetaf, n))
        c = geom.center.as_array()
        for rp in radar_positions:
            v = rp - c
            if np.linalg.norm(v) <= 1e-12:
                continue
            lifted = geom.theta0 + math.remainder(
                math.atan2(v[1], v[0]) - geom.theta0, TWO_PI)
            if lifted < geom.theta0:
                lifted += TWO_PI
            if geom.theta0 < lifted < geom.thetaf:
                thetas.append(lifted)
        return geom.point_at(np.array(sorted(thetas)))
    if isinstance(geom, SegmentGeometry):
        a = geom.a.as_array()
        b = geom.b.as_array()
        ab = b - a
        denom = float(ab @ ab)
        ts = list(np.linspace(0.0, 1.0, n))
        if denom > 0.0 and radar_positions.size:
            ts.extend(np.clip(((radar_positions - a[None, :]) @ ab) / denom,
                              0.0, 1.0))
        ts = np.array(sorted(ts))
        return a[None, :] + ts[:, None] * ab[None, :]
    return geom.sample(n)


def _split_safe_runs(graph_edges: list[GraphEdge], graph: RoadmapGraph,
                     dense_fn, mask_fn) -> RoadmapGraph:
    """Keep each edge's maximal safe stretches, cutting at unsafe samples.

    Fully safe edges survive untouched.  Partial edges become polyline
    fragments with fresh vertices at the interior cut points; samples flagged
    unsafe are excluded, so fragments stay strictly inside the safe set at
    the sampling resolution.
    """
    new_vertices = [graph.vertices] if graph.n_vertices else []
    next_id = graph.n_vertices
    kept: list[GraphEdge] = []
    for edge in graph_edges:
        dense = dense_fn(edge)
        ok = np.asarray(mask_fn(dense), dtype=bool)
        if ok.all():
            kept.append(edge)
            continue
        if not ok.any():
            continue
        padded = np.concatenate([[False], ok, [False]])
        starts = np.nonzero(padded[1:-1] & ~padded[:-2])[0]
        ends = np.nonzero(padded[1:-1] & ~padded[2:])[0]
        for i0, i1 in zip(starts, ends):
            if i1 <= i0:
                continue
            pts = dense[i0:i1 + 1]
            geom = PolylineGeometry(pts)
            length = geom.arc_length
            if length <= 1e-9:
                continue
            if i0 == 0:
                u = edge.u
            else:
                new_vertices.append(pts[:1])
                u = next_id
                next_id += 1
            if i1 == dense.shape[0] - 1:
                v = edge.v
            else:
                new_vertices.append(pts[-1:])
                v = next_id
                next_id += 1
            kept.append(GraphEdge(u, v, geom, length, pts, edge.kind,
                                  edge.sites))
    verts = (np.concatenate(new_vertices, axis=0) if new_vertices
             else np.zeros((0, 2)))
    return RoadmapGraph(verts, kept, graph.region)


def trim_deterministic(graph: RoadmapGraph, radars, agent,
                       pd_threshold: float) -> RoadmapGraph:
    """Cut away every edge stretch whose detection probability tops the limit.

    Arc and segment maxima are dominated by the points nearest each radar, so
    those exact candidates are merged into the sample set before cutting.
    Edges safe along part of their length survive as fragments rather than
    being discarded whole, which preserves narrow corridors.
    """
    if not radars:
        return graph.without_edges(set())
    radar_pos = np.stack([r.position.as_array() for r in radars])
    radar_list = list(radars)

    def dense_fn(edge: GraphEdge) -> np.ndarray:
        return _dense_edge_params(edge, radar_pos, _SPLIT_SAMPLE_POINTS)

    def mask_fn(pts: np.ndarray) -> np.ndarray:
        return pd_field(pts, radar_list, agent.rcs_m2) <= pd_threshold

    return _split_safe_runs(graph.edges, graph, dense_fn, mask_fn)


def diagram_labels(estimates: Sequence[RadarEstimate], priors, known,
                   region: Region, grid_n: int,
                   pd_threshold: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grid labels for the generalized diagram: most-threatening radar index.

    Cells go to the radar with the least standardized below-threshold margin;
    ties go to the lowest index.  Returns (labels (n, n), xs, ys).
    """
    pts, xs, ys = region.grid(grid_n)
    flat = pts.reshape(-1, 2)
    labels = np.empty(flat.shape[0], dtype=np.int32)
    chunk = 4096
    for k in range(0, flat.shape[0], chunk):
        z = per_radar_zscores(flat[k:k + chunk], known, priors, estimates,
                              pd_threshold)
        labels[k:k + chunk] = np.argmin(z, axis=1)
    return labels.reshape(grid_n, grid_n), xs, ys


def _boundary_midpoints(labels: np.ndarray, xs: np.ndarray,
                        ys: np.ndarray) -> dict[tuple[int, int], list[np.ndarray]]:
    """Midpoints between unlike-labeled adjacent cells, keyed by label pair."""
    out: dict[tuple[int, int], list[np.ndarray]] = {}
    n = labels.shape[0]
    for r in range(n):
        for c in range(n - 1):
            a, b = int(labels[r, c]), int(labels[r, c + 1])
            if a != b:
                key = (min(a, b), max(a, b))
                out.setdefault(key, []).append(
                    np.array([0.5 * (xs[c] + xs[c + 1]), ys[r]])
                )
    for r in range(n - 1):
        for c in range(n):
            a, b = int(labels[r, c]), int(labels[r + 1, c])
            if a != b:
                key = (min(a, b), max(a, b))
                out.setdefault(key, []).append(
                    np.array([xs[c], 0.5 * (ys[r] + ys[r + 1])])
                )
    return out


def _chain_points(points: np.ndarray, radius: float) -> list[np.ndarray]:
    """Order scattered boundary samples into polyline chains greedily."""
    n = points.shape[0]
    if n == 0:
        return []
    unused = np.ones(n, dtype=bool)
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    neighbor_count = (d <= radius).sum(axis=1)
    chains = []
    while unused.any():
        cands = np.nonzero(unused)[0]
        # Prefer an endpoint-looking seed: fewest near neighbors.
        seed = cands[np.argmin(neighbor_count[cands], )]
        chain = [seed]
        unused[seed] = False
        # Walk outward twice (both directions from the seed).
        for _ in range(2):
            cur = chain[-1]
            while True:
                dists = np.where(unused, d[cur], np.inf)
                nxt = int(np.argmin(dists))
                if not np.isfinite(dists[nxt]) or dists[nxt] > radius:
                    break
                chain.append(nxt)
                unused[nxt] = False
                cur = nxt
            chain.reverse()
        chains.append(points[np.array(chain)])
    return chains


def _snap_to_boundary(region: Region, p: np.ndarray) -> np.ndarray:
    """Project a near-boundary point onto the closest rectangle side."""
    q = region.clamp(p)
    gaps = np.array([
        q[1] - region.lower.y,
        region.upper.x - q[0],
        region.upper.y - q[1],
        q[0] - region.lower.x,
    ])
    side = int(np.argmin(gaps))
    q = q.copy()
    if side == 0:
        q[1] = region.lower.y
    elif side == 1:
        q[0] = region.upper.x
    elif side == 2:
        q[1] = region.upper.y
    else:
        q[0] = region.lower.x
    return q


def build_generalized_diagram(
    estimates: Sequence[RadarEstimate],
    priors,
    known: KnownParamBelief,
    region: Region,
    grid_n: int = 201,
    pd_threshold: float = 0.15,
) -> RoadmapGraph:
    """Roadmap between estimated threats under the below-threshold criterion.

    Labels a cell-center grid by the most dangerous radar, chains the label
    boundaries, fits a cubic curve to each chain, and closes the region
    boundary.  One estimate partitions nothing, leaving only the boundary.
    """
    if len(estimates) == 0:
        raise ValueError("need at least one radar estimate")
    if grid_n < 32:
        raise ValueError("grid too coarse to resolve boundaries")
    labels, xs, ys = diagram_labels(estimates, priors, known, region, grid_n,
                                    pd_threshold)
    cell = max(region.width, region.height) / grid_n
    merge_tol = 2.0 * cell
    builder = _GraphBuilder(region, merge_tol)
    boundary_tol = 1.5 * cell
    for (si, sj), pts in sorted(_boundary_midpoints(labels, xs, ys).items()):
        for chain in _chain_points(np.stack(pts), 1.6 * cell):
            if chain.shape[0] < 4:
                continue
            ends = [chain[0], chain[-1]]
            for e_idx, e in enumerate(ends):
                if _on_boundary(region, e, boundary_tol) or not region.contains(
                    e, slack=-boundary_tol
                ):
                    ends[e_idx] = _snap_to_boundary(region, e)
            chain = np.vstack([ends[0][None, :], chain[1:-1], ends[1][None, :]])
            if chain.shape[0] >= 8:
                n_ctrl = int(np.clip(chain.shape[0] // 3, 4, 24))
                fit = fit_to_path(chain, n_control=n_ctrl, degree=3)
                geom = SplineEdge(fit.trajectory, si, sj)
                p0 = sample_polyline(fit.trajectory, 2)[0]
                p1 = sample_polyline(fit.trajectory, 2)[-1]
            else:
                geom = SegmentGeometry(Position2.from_array(chain[0]),
                                       Position2.from_array(chain[-1]))
                p0, p1 = chain[0], chain[-1]
            u = builder.vertex(p0)
            v = builder.vertex(p1)
            if u == v and chain.shape[0] < 8:
                continue
            kind = "spline" if isinstance(geom, SplineEdge) else "bisector"
            builder.add_edge(u, v, geom, kind, (si, sj))
    _add_boundary_cycle(builder, boundary_tol)
    return builder.build()


def trim_uncertain(
    graph: RoadmapGraph,
    estimates: Sequence[RadarEstimate],
    priors,
    known: KnownParamBelief,
    pd_threshold: float,
    epsilon: float,
    samples_per_edge: int = 20,
) -> RoadmapGraph:
    """Cut away edge stretches failing the below-threshold chance requirement.

    Comparison happens on standardized margins, which order identically to
    the chance values but cannot saturate to 1.0 in floating point.  Partially
    acceptable edges survive as fragments.
    """
    from scipy.special import ndtri

    if epsilon <= 0.0:
        return graph.without_edges(set())
    z_req = math.inf if epsilon >= 1.0 else float(ndtri(epsilon))
    n_dense = max(samples_per_edge, _SPLIT_SAMPLE_POINTS)

    def dense_fn(edge: GraphEdge) -> np.ndarray:
        return edge.geometry.sample(n_dense)

    def mask_fn(pts: np.ndarray) -> np.ndarray:
        mean, var = pd_belief_batch(pts, known, priors, estimates)
        return pd_below_zscore(mean, var, pd_threshold) >= z_req

    return _split_safe_runs(graph.edges, graph, dense_fn, mask_fn)


@dataclass
class PathResult:
    found: bool
    total_length: float = math.inf
    vertex_ids: list[int] = field(default_factory=list)
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    reason: str = ""


def _astar(vertices: np.ndarray, adjacency, lengths, start: int, goal: int):
    """A* with Euclidean heuristic; ties broken toward lower node index."""
    n = vertices.shape[0]
    goal_p = vertices[goal]
    h = np.linalg.norm(vertices - goal_p[None, :], axis=1)
    dist = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    parent_edge = np.full(n, -1, dtype=np.int64)
    dist[start] = 0.0
    heap = [(float(h[start]), start)]
    closed = np.zeros(n, dtype=bool)
    while heap:
        f, node = heapq.heappop(heap)
        if closed[node]:
            continue
        if node == goal:
            break
        closed[node] = True
        for edge_idx, other in adjacency[node]:
            if closed[other]:
                continue
            cand = dist[node] + lengths[edge_idx]
            if cand < dist[other] - 1e-12:
                dist[other] = cand
                parent[other] = node
                parent_edge[other] = edge_idx
                heapq.heappush(heap, (float(cand + h[other]), other))
    if not np.isfinite(dist[goal]):
        return None
    order = [goal]
    edges_used = []
    while order[-1] != start:
        edges_used.append(int(parent_edge[order[-1]]))
        order.append(int(parent[order[-1]]))
    order.reverse()
    edges_used.reverse()
    return float(dist[goal]), order, edges_used


def shortest_path(
    graph: RoadmapGraph,
    start: Position2,
    goal: Position2,
    connector_ok: Callable[[np.ndarray], bool] | None = None,
    k_connect: int = 5,
) -> PathResult:
    """Minimum-arc-length route from start to goal over the roadmap.

    Both mission points attach to their nearest vertex whose straight
    connector passes the feasibility callback (up to k candidates each).
    Returns a disconnected result rather than raising when no route exists.
    """
    if graph.n_vertices == 0:
        return PathResult(False, reason="empty graph")
    verts = [graph.vertices]
    edges = list(graph.edges)
    next_id = graph.n_vertices
    degree = np.zeros(graph.n_vertices, dtype=np.int64)
    for e in graph.edges:
        degree[e.u] += 1
        degree[e.v] += 1
    attach_ids = []
    for p in (start, goal):
        pa = p.as_array()
        d = np.linalg.norm(graph.vertices - pa[None, :], axis=1)
        if float(d.min()) <= 1e-9 * graph.region.diagonal:
            attach_ids.append(int(np.argmin(d)))
            continue
        point_id = next_id
        next_id += 1
        verts.append(pa[None, :])
        n_attached = 0
        # Every admissible connector goes in; the search picks the best one.
        # Vertices stranded by trimming are not attachment candidates.
        for cand in graph.nearest_vertices(pa, 3 * k_connect):
            if degree[cand] == 0:
                continue
            geom = SegmentGeometry(p, Position2.from_array(graph.vertices[cand]))
            samples = geom.sample(_EDGE_SAMPLE_POINTS)
            if connector_ok is not None and not connector_ok(samples):
                continue
            edges.append(GraphEdge(point_id, int(cand), geom,
                                   geom.arc_length, samples, "connector"))
            n_attached += 1
            if n_attached >= k_connect:
                break
        if n_attached == 0:
            return PathResult(False, reason="could not attach mission point")
        attach_ids.append(point_id)
    all_verts = np.concatenate(verts, axis=0)
    adjacency: list[list[tuple[int, int]]] = [[] for _ in range(all_verts.shape[0])]
    lengths = np.array([e.length for e in edges])
    for idx, e in enumerate(edges):
        adjacency[e.u].append((idx, e.v))
        adjacency[e.v].append((idx, e.u))
    res = _astar(all_verts, adjacency, lengths, attach_ids[0], attach_ids[1])
    if res is None:
        return PathResult(False, reason="disconnected")
    total, order, edges_used = res
    chunks = []
    for step, edge_idx in enumerate(edges_used):
        e = edges[edge_idx]
        pts = e.samples
        if e.u != order[step]:
            pts = pts[::-1]
        chunks.append(pts if step == 0 else pts[1:])
    points = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 2))
    return PathResult(True, total, order, points)


def dijkstra_cost(graph_edges: list[GraphEdge], n_vertices: int,
                  start: int, goal: int) -> float:
    """Plain Dijkstra over the same weights; reference for the A* route cost."""
    adjacency: list[list[tuple[int, int]]] = [[] for _ in range(n_vertices)]
    for idx, e in enumerate(graph_edges):
        adjacency[e.u].append((idx, e.v))
        adjacency[e.v].append((idx, e.u))
    lengths = [e.length for e in graph_edges]
    dist = [math.inf] * n_vertices
    dist[start] = 0.0
    heap = [(0.0, start)]
    done = [False] * n_vertices
    while heap:
        d, node = heapq.heappop(heap)
        if done[node]:
            continue
        done[node] = True
        if node == goal:
            return d
        for edge_idx, other in adjacency[node]:
            nd = d + lengths[edge_idx]
            if nd < dist[other]:
                dist[other] = nd
                heapq.heappush(heap, (nd, other))
    return dist[goal]

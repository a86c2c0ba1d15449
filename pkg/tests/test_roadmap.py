import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.spatial import Voronoi

from radarscout.core import Position2, Region, ScenarioConfig, generate_scenario
from radarscout.estimator import RadarEstimate
from radarscout.pd_uncertainty import KnownParamBelief, UnknownPrior
from radarscout.radar import pd_field
from radarscout.roadmap import (
    ArcEdge,
    BisectorLine,
    PolylineGeometry,
    SegmentGeometry,
    WeightedSite,
    apollonius_circle,
    build_generalized_diagram,
    build_weighted_diagram,
    diagram_labels,
    dijkstra_cost,
    shortest_path,
    trim_deterministic,
    trim_uncertain,
)

UNIT_REGION = Region(Position2(0.0, 0.0), Position2(100.0, 100.0))


def weighted_table(points, sites):
    """Brute-force distance-over-weight table, one row per query point."""
    pos = np.stack([s.position.as_array() for s in sites])
    w = np.array([s.weight for s in sites])
    d = np.sqrt(((points[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2))
    return d / w[None, :]


def random_sites(rng, n, region=UNIT_REGION, weighted=True):
    lo, hi = region.lower.as_array(), region.upper.as_array()
    pts = rng.uniform(lo + 8.0, hi - 8.0, size=(n, 2))
    weights = rng.uniform(1.0, 3.0, size=n) if weighted else np.ones(n)
    return [WeightedSite(Position2(*p), float(w)) for p, w in zip(pts, weights)]


def test_apollonius_two_to_one_ratio_circle():
    # |p - a| / 1 == |p - b| / 2 passes through x = 1 and x = -3.
    a = WeightedSite(Position2(0.0, 0.0), 1.0)
    b = WeightedSite(Position2(3.0, 0.0), 2.0)
    locus = apollonius_circle(a, b)
    assert isinstance(locus, ArcEdge)
    assert locus.center.x == pytest.approx(-1.0, abs=1e-12)
    assert locus.center.y == pytest.approx(0.0, abs=1e-12)
    assert locus.radius == pytest.approx(2.0, abs=1e-12)
    wd = weighted_table(locus.sample(64), [a, b])
    assert np.allclose(wd[:, 0], wd[:, 1], rtol=1e-12, atol=1e-12)


def test_apollonius_wraps_lighter_site():
    a = WeightedSite(Position2(0.0, 0.0), 1.0)
    b = WeightedSite(Position2(3.0, 0.0), 2.0)
    locus = apollonius_circle(a, b)
    # Circle encloses the lighter generator and excludes the heavier one.
    assert a.position.distance_to(locus.center) < locus.radius
    assert b.position.distance_to(locus.center) > locus.radius


def test_apollonius_equal_weights_is_perpendicular_bisector():
    a = WeightedSite(Position2(1.0, 2.0), 1.5)
    b = WeightedSite(Position2(5.0, 4.0), 1.5)
    locus = apollonius_circle(a, b)
    assert isinstance(locus, BisectorLine)
    assert locus.point.x == pytest.approx(3.0)
    assert locus.point.y == pytest.approx(3.0)
    d = locus.direction.as_array()
    along = (b.position.as_array() - a.position.as_array())
    assert abs(float(d @ along)) < 1e-12
    for t in (-4.0, -0.5, 2.0, 7.0):
        p = locus.point.as_array() + t * d
        assert np.hypot(*(p - a.position.as_array())) == pytest.approx(
            np.hypot(*(p - b.position.as_array())))


def test_apollonius_rejects_coincident_generators():
    s = WeightedSite(Position2(2.0, 2.0), 1.0)
    with pytest.raises(ValueError):
        apollonius_circle(s, WeightedSite(Position2(2.0, 2.0), 2.0))
    with pytest.raises(ValueError):
        WeightedSite(Position2(0.0, 0.0), 0.0)


@pytest.mark.parametrize("seed,n", [(0, 4), (1, 6), (2, 8), (3, 9)])
def test_weighted_diagram_edges_equal_distance_and_dominant(seed, n):
    """Retained samples sit on the pair locus and are never beaten elsewhere."""
    rng = np.random.default_rng(200 + seed)
    sites = random_sites(rng, n)
    graph = build_weighted_diagram(sites, UNIT_REGION)
    checked = 0
    for edge in graph.edges:
        if edge.kind not in ("arc", "bisector"):
            continue
        i, j = edge.sites
        pts = edge.geometry.sample(41)[1:-1]  # skip bisection-refined tips
        wd = weighted_table(pts, sites)
        scale = np.maximum(wd[:, i], wd[:, j])
        assert np.all(np.abs(wd[:, i] - wd[:, j]) <= 1e-6 * scale + 1e-12)
        best = wd.min(axis=1)
        pair = 0.5 * (wd[:, i] + wd[:, j])
        assert np.all(pair <= best * (1.0 + 1e-6) + 1e-9)
        checked += 1
    assert checked >= n - 1


def test_weighted_diagram_rejects_outside_sites_and_empty():
    with pytest.raises(ValueError):
        build_weighted_diagram([], UNIT_REGION)
    with pytest.raises(ValueError):
        build_weighted_diagram([WeightedSite(Position2(150.0, 50.0), 1.0)],
                               UNIT_REGION)


def test_equal_weights_match_ordinary_voronoi_vertices():
    rng = np.random.default_rng(77)
    sites = random_sites(rng, 8, weighted=False)
    graph = build_weighted_diagram(sites, UNIT_REGION)
    for edge in graph.edges:
        assert edge.kind in ("bisector", "boundary")
    pos = np.stack([s.position.as_array() for s in sites])
    vor = Voronoi(pos)
    tol = 1e-6 * UNIT_REGION.diagonal
    inside = [v for v in vor.vertices
              if UNIT_REGION.contains(v, slack=-tol)]
    assert inside
    for v in inside:
        gap = np.linalg.norm(graph.vertices - v[None, :], axis=1).min()
        assert gap <= tol
    ridge_pairs = {tuple(sorted(p)) for p in vor.ridge_points.tolist()}
    for edge in graph.edges:
        if edge.kind == "bisector":
            assert tuple(sorted(edge.sites)) in ridge_pairs


def test_boundary_cycle_closes_rectangle():
    sites = [WeightedSite(Position2(30.0, 50.0), 1.0),
             WeightedSite(Position2(70.0, 50.0), 1.0)]
    graph = build_weighted_diagram(sites, UNIT_REGION)
    boundary = [e for e in graph.edges if e.kind == "boundary"]
    total = sum(e.length for e in boundary)
    assert total == pytest.approx(400.0, rel=1e-9)
    # Each boundary vertex has even boundary degree, so the cycle closes.
    deg = np.zeros(graph.n_vertices, dtype=int)
    for e in boundary:
        deg[e.u] += 1
        deg[e.v] += 1
    assert np.all(deg[deg > 0] % 2 == 0)


@pytest.mark.parametrize("trial", range(20))
def test_astar_cost_matches_dijkstra(trial):
    rng = np.random.default_rng(4000 + trial)
    sites = random_sites(rng, int(rng.integers(5, 10)))
    graph = build_weighted_diagram(sites, UNIT_REGION)
    if trial % 2:
        drop = set(rng.choice(len(graph.edges),
                              size=len(graph.edges) // 5, replace=False).tolist())
        graph = graph.without_edges(drop)
    u, v = rng.choice(graph.n_vertices, size=2, replace=False)
    ref = dijkstra_cost(graph.edges, graph.n_vertices, int(u), int(v))
    res = shortest_path(graph, Position2(*graph.vertices[u]),
                        Position2(*graph.vertices[v]))
    if math.isinf(ref):
        assert not res.found
    else:
        assert res.found
        assert res.total_length == ref


def test_shortest_path_connectors_and_endpoints():
    rng = np.random.default_rng(9)
    sites = random_sites(rng, 6)
    graph = build_weighted_diagram(sites, UNIT_REGION)
    start = Position2(5.0, 5.0)
    goal = Position2(95.0, 95.0)
    res = shortest_path(graph, start, goal)
    assert res.found
    assert np.allclose(res.points[0], start.as_array(), atol=1e-9)
    assert np.allclose(res.points[-1], goal.as_array(), atol=1e-9)
    steps = np.linalg.norm(np.diff(res.points, axis=0), axis=1)
    assert steps.sum() <= res.total_length * (1.0 + 1e-6)
    assert res.total_length >= start.distance_to(goal) - 1e-9


def test_shortest_path_reports_failure_reasons():
    sites = [WeightedSite(Position2(50.0, 50.0), 1.0)]
    graph = build_weighted_diagram(sites, UNIT_REGION)
    empty = graph.without_edges(set(range(len(graph.edges))))
    res = shortest_path(empty, Position2(10.0, 10.0), Position2(90.0, 90.0))
    assert not res.found
    assert res.reason
    veto = shortest_path(graph, Position2(10.0, 10.0), Position2(90.0, 90.0),
                         connector_ok=lambda pts: False)
    assert not veto.found
    assert "attach" in veto.reason


def test_polyline_geometry_sampling():
    pts = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 4.0]])
    geom = PolylineGeometry(pts)
    assert geom.arc_length == pytest.approx(7.0)
    s = geom.sample(8)
    assert s.shape == (8, 2)
    assert np.allclose(s[0], pts[0])
    assert np.allclose(s[-1], pts[-1])
    # Uniform arc-length spacing along the bend.
    gaps = np.linalg.norm(np.diff(s, axis=0), axis=1)
    assert np.allclose(gaps, 1.0, atol=1e-9)


def corridor_graph():
    """One straight edge crossing the whole region, for split-trim tests."""
    region = Region(Position2(0.0, 0.0), Position2(22000.0, 22000.0))
    a = Position2(1000.0, 1000.0)
    b = Position2(21000.0, 1000.0)
    geom = SegmentGeometry(a, b)
    from radarscout.roadmap import GraphEdge, RoadmapGraph

    edge = GraphEdge(0, 1, geom, geom.arc_length, geom.sample(40), "bisector",
                     (0, 1))
    return RoadmapGraph(np.stack([a.as_array(), b.as_array()]), [edge], region)


def test_trim_deterministic_splits_hot_middle():
    cfg = ScenarioConfig()
    radars = [replace(generate_scenario(cfg)[0],
                      position=Position2(11000.0, 1000.0))]
    graph = corridor_graph()
    agent = cfg.agent_params(Position2(1000.0, 1000.0))
    ends = np.stack([[1000.0, 1000.0], [21000.0, 1000.0]])
    mid = np.array([[11000.0, 1000.0]])
    threshold = 0.15
    assert np.all(pd_field(ends, radars, agent.rcs_m2) <= threshold)
    assert pd_field(mid, radars, agent.rcs_m2)[0] > threshold
    trimmed = trim_deterministic(graph, radars, agent, threshold)
    assert len(trimmed.edges) == 2
    assert trimmed.n_vertices == 4  # two originals plus two cut points
    for e in trimmed.edges:
        assert isinstance(e.geometry, PolylineGeometry)
        assert np.all(pd_field(e.samples, radars, agent.rcs_m2) <= threshold)
        assert 0 in (e.u, e.v) or 1 in (e.u, e.v)
    kept = sum(e.length for e in trimmed.edges)
    assert kept < graph.edges[0].length


def test_trim_deterministic_no_radars_keeps_graph():
    graph = corridor_graph()
    cfg = ScenarioConfig()
    agent = cfg.agent_params(Position2(1000.0, 1000.0))
    out = trim_deterministic(graph, [], agent, 0.15)
    assert len(out.edges) == 1
    assert out.edges[0].length == graph.edges[0].length


def uncertain_inputs(cfg, x=11000.0, y=1000.0, pos_sd=200.0):
    erp = cfg.p_t_default_w * 10.0 ** (cfg.g_t_default_db / 10.0)
    cov = np.diag([pos_sd**2, pos_sd**2, (0.05 * erp) ** 2])
    est = RadarEstimate(0, np.array([x, y, erp]), cov)
    priors = [UnknownPrior.from_config(cfg)]
    known = KnownParamBelief(np.array([cfg.rcs_m2, 1000.0, 1000.0]),
                             np.zeros((3, 3)))
    return [est], priors, known


def test_trim_uncertain_nonpositive_epsilon_keeps_all():
    graph = corridor_graph()
    ests, priors, known = uncertain_inputs(ScenarioConfig())
    out = trim_uncertain(graph, ests, priors, known, 0.15, 0.0)
    assert len(out.edges) == len(graph.edges)
    assert [e.length for e in out.edges] == [e.length for e in graph.edges]


def test_trim_uncertain_cuts_near_estimate_and_tightens():
    graph = corridor_graph()
    ests, priors, known = uncertain_inputs(ScenarioConfig())
    mild = trim_uncertain(graph, ests, priors, known, 0.15, 0.5)
    tight = trim_uncertain(graph, ests, priors, known, 0.15, 0.9)
    len_mild = sum(e.length for e in mild.edges)
    len_tight = sum(e.length for e in tight.edges)
    assert len_mild < graph.edges[0].length
    # Raising the required chance can only shrink the safe set.
    assert len_tight <= len_mild + 1e-9
    for e in tight.edges:
        assert isinstance(e.geometry, PolylineGeometry)


def test_generalized_diagram_validation():
    cfg = ScenarioConfig()
    ests, priors, known = uncertain_inputs(cfg)
    with pytest.raises(ValueError):
        build_generalized_diagram([], priors, known, cfg.region)
    with pytest.raises(ValueError):
        build_generalized_diagram(ests, priors, known, cfg.region, grid_n=16)


def test_generalized_diagram_two_threats():
    cfg = ScenarioConfig()
    erp = cfg.p_t_default_w * 10.0 ** (cfg.g_t_default_db / 10.0)
    cov = np.diag([150.0**2, 150.0**2, (0.05 * erp) ** 2])
    ests = [RadarEstimate(0, np.array([7000.0, 11000.0, erp]), cov),
            RadarEstimate(1, np.array([15000.0, 11000.0, erp]), cov)]
    priors = [UnknownPrior.from_config(cfg)] * 2
    known = KnownParamBelief(np.array([cfg.rcs_m2, 1000.0, 1000.0]),
                             np.zeros((3, 3)))
    graph = build_generalized_diagram(ests, priors, known, cfg.region,
                                      grid_n=101)
    kinds = {e.kind for e in graph.edges}
    assert "boundary" in kinds
    assert kinds & {"spline", "bisector"}
    sep = [e for e in graph.edges if e.sites == (0, 1)]
    assert sep
    # The separating chain runs near the equal-threat midline.
    mid_x = 11000.0
    for e in sep:
        xs = e.samples[:, 0]
        assert np.all(np.abs(xs - mid_x) < 4000.0)
    tol = 1e-6 * cfg.region.diagonal
    assert np.all(cfg.region.contains(graph.vertices, slack=tol))


def test_diagram_labels_partition():
    cfg = ScenarioConfig()
    ests, priors, known = uncertain_inputs(cfg)
    ests = ests + [RadarEstimate(1, np.array([4000.0, 18000.0, ests[0].state[2]]),
                                 ests[0].covariance)]
    priors = priors * 2
    labels, xs, ys = diagram_labels(ests, priors, known, cfg.region, 41, 0.15)
    assert labels.shape == (41, 41)
    assert set(np.unique(labels)) <= {0, 1}
    assert xs.shape == (41,) and ys.shape == (41,)
    # Points nearest each estimate take that estimate's label.
    ix0, iy0 = np.argmin(np.abs(xs - 11000.0)), np.argmin(np.abs(ys - 1000.0))
    ix1, iy1 = np.argmin(np.abs(xs - 4000.0)), np.argmin(np.abs(ys - 18000.0))
    assert labels[iy0, ix0] == 0
    assert labels[iy1, ix1] == 1

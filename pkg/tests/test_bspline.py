import math

import numpy as np
import pytest
from scipy.interpolate import BSpline as ScipyBSpline
from scipy.spatial import ConvexHull

from radarscout.bspline import (
    BSplineTrajectory,
    arc_length,
    basis_value,
    design_matrix,
    eval_curve,
    fit_to_path,
    flat_outputs,
    max_speed,
    retime,
    sample_polyline,
    speed_profile,
    uniform_knots,
)


def wiggly(n=12, degree=3, tf=7.0, seed=3):
    rng = np.random.default_rng(seed)
    cp = np.cumsum(rng.normal(scale=40.0, size=(n, 2)), axis=0)
    return BSplineTrajectory(cp, degree=degree, t0=0.0, tf=tf)


def test_uniform_knots_layout():
    k = uniform_knots(8, 3, 0.0, 10.0)
    assert k.shape == (12,)
    assert k[3] == pytest.approx(0.0)
    assert k[8] == pytest.approx(10.0)
    assert np.allclose(np.diff(k), 2.0)
    with pytest.raises(ValueError):
        uniform_knots(3, 3, 0.0, 1.0)
    with pytest.raises(ValueError):
        uniform_knots(8, 3, 1.0, 1.0)


def test_partition_of_unity():
    traj = wiggly()
    ts = np.linspace(traj.t0, traj.tf, 257)
    B = design_matrix(ts, traj.n_control, traj.degree, traj.knots())
    assert np.all(B >= -1e-15)
    assert np.max(np.abs(B.sum(axis=1) - 1.0)) <= 1e-12


def test_matches_scipy_reference():
    traj = wiggly()
    ts = np.linspace(traj.t0, traj.tf - 1e-9, 101)
    ref = ScipyBSpline(traj.knots(), traj.control_points, traj.degree)
    for order in (0, 1, 2):
        ours = eval_curve(traj, ts, order=order)
        theirs = ref.derivative(order)(ts) if order else ref(ts)
        assert np.allclose(ours, theirs, rtol=1e-9, atol=1e-9)


def test_basis_value_agrees_with_design_matrix():
    knots = uniform_knots(9, 3, 0.0, 5.0)
    ts = np.array([0.3, 1.7, 4.2])
    B = design_matrix(ts, 9, 3, knots)
    for r, t in enumerate(ts):
        for i in range(9):
            assert B[r, i] == pytest.approx(basis_value(i, 3, t, knots),
                                            abs=1e-12)


def test_convex_hull_membership():
    traj = wiggly(seed=9)
    hull = ConvexHull(traj.control_points)
    pts = sample_polyline(traj, 400)
    scale = np.abs(traj.control_points).max()
    dist = pts @ hull.equations[:, :2].T + hull.equations[:, 2][None, :]
    assert np.max(dist) <= 1e-9 * max(scale, 1.0)


def test_local_support():
    traj = wiggly(seed=4)
    i = 5
    knots = traj.knots()
    lo, hi = knots[i], knots[i + traj.degree + 1]
    cp = traj.control_points.copy()
    cp[i] += [37.0, -12.0]
    bumped = BSplineTrajectory(cp, traj.degree, traj.t0, traj.tf)
    outside = np.concatenate([
        np.linspace(traj.t0, max(lo - 1e-9, traj.t0), 40),
        np.linspace(min(hi + 1e-9, traj.tf), traj.tf, 40),
    ])
    assert np.array_equal(eval_curve(traj, outside), eval_curve(bumped, outside))
    inside = np.linspace(max(lo, traj.t0) + 0.05, min(hi, traj.tf) - 0.05, 20)
    assert not np.allclose(eval_curve(traj, inside), eval_curve(bumped, inside))


def test_retime_scales_speeds_exactly():
    traj = wiggly(tf=6.0)
    slow = retime(traj, 18.0)
    assert slow.duration == pytest.approx(18.0)
    s = np.linspace(0.0, 1.0, 73)
    p_old = eval_curve(traj, traj.t0 + s * traj.duration)
    p_new = eval_curve(slow, s * slow.duration)
    assert np.allclose(p_old, p_new, rtol=1e-12, atol=1e-9)
    v_old = eval_curve(traj, traj.t0 + s * traj.duration, order=1)
    v_new = eval_curve(slow, s * slow.duration, order=1)
    assert np.allclose(v_new * 3.0, v_old, rtol=1e-9)
    assert max_speed(slow) == pytest.approx(max_speed(traj) / 3.0, rel=1e-6)
    with pytest.raises(ValueError):
        retime(traj, 0.0)


def test_derivatives_match_finite_differences():
    traj = wiggly(seed=12)
    ts = np.linspace(traj.t0 + 0.1, traj.tf - 0.1, 25)
    h = 1e-6 * traj.duration
    d1 = eval_curve(traj, ts, order=1)
    fd1 = (eval_curve(traj, ts + h) - eval_curve(traj, ts - h)) / (2 * h)
    scale = np.abs(d1).max()
    assert np.max(np.abs(d1 - fd1)) <= 1e-6 * max(scale, 1.0)
    d2 = eval_curve(traj, ts, order=2)
    fd2 = (eval_curve(traj, ts + h, order=1)
           - eval_curve(traj, ts - h, order=1)) / (2 * h)
    assert np.max(np.abs(d2 - fd2)) <= 1e-6 * max(np.abs(d2).max(), 1.0)


def test_flat_outputs_against_direct_formula():
    traj = wiggly(seed=21)
    for t in (0.8, 3.3, 6.1):
        d1 = eval_curve(traj, t, order=1)
        d2 = eval_curve(traj, t, order=2)
        v = math.hypot(*d1)
        cross = d1[0] * d2[1] - d1[1] * d2[0]
        out = flat_outputs(traj, t)
        assert out.speed == pytest.approx(v, rel=1e-12)
        assert out.turn_rate == pytest.approx(cross / v**2, rel=1e-12)
        assert out.curvature == pytest.approx(cross / v**3, rel=1e-12)
    still = BSplineTrajectory(np.zeros((5, 2)), 3, 0.0, 1.0)
    with pytest.raises(ValueError):
        flat_outputs(still, 0.5)


def test_speed_profile_and_max_speed_consistency():
    traj = wiggly(seed=2)
    ts = np.linspace(traj.t0, traj.tf, 400)
    v = speed_profile(traj, ts)
    assert max_speed(traj) >= v.max() - 1e-9
    assert max_speed(traj) <= v.max() * 1.01


def test_fit_to_path_hits_waypoints():
    ts = np.linspace(0.0, 2.0 * math.pi, 160)
    path = np.column_stack([1000.0 * np.cos(ts), 600.0 * np.sin(ts)])
    fit = fit_to_path(path, n_control=40)
    assert fit.max_residual < 2.0
    ends = eval_curve(fit.trajectory, np.array([0.0, 1.0]))
    assert np.linalg.norm(ends[0] - path[0]) < 1.0
    assert np.linalg.norm(ends[1] - path[-1]) < 1.0
    with pytest.raises(ValueError):
        fit_to_path(path[:10], n_control=40)


def test_arc_length_straight_line():
    cp = np.column_stack([np.linspace(0.0, 90.0, 10), np.zeros(10)])
    traj = BSplineTrajectory(cp, 3, 0.0, 1.0)
    ends = eval_curve(traj, np.array([0.0, 1.0]))
    expected = float(np.linalg.norm(ends[1] - ends[0]))
    assert arc_length(traj) == pytest.approx(expected, rel=1e-6)


def test_serialization_round_trip():
    traj = wiggly(seed=8)
    again = BSplineTrajectory.from_dict(traj.to_dict())
    assert again.degree == traj.degree
    assert again.t0 == traj.t0 and again.tf == traj.tf
    assert np.array_equal(again.control_points, traj.control_points)


def test_domain_and_validation_errors():
    traj = wiggly()
    with pytest.raises(ValueError):
        eval_curve(traj, traj.tf + 0.5)
    with pytest.raises(ValueError):
        BSplineTrajectory(np.zeros((3, 2)), degree=3)
    with pytest.raises(ValueError):
        BSplineTrajectory(np.zeros((5, 3)), degree=3)
    with pytest.raises(ValueError):
        BSplineTrajectory(np.full((5, 2), np.nan), degree=3)

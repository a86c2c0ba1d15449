"""Planar B-spline trajectories on uniform unclamped knot vectors.

Degree-p curves with n_c control points over [t0, tf]; the knot vector
extends p uniform spacings beyond each end so every basis function in the
domain has full support and the basis sums to one on all of [t0, tf].
Derivatives up to order two feed speed / turn-rate / curvature recovery for
the constant-altitude aircraft model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np


def uniform_knots(n_control: int, degree: int, t0: float, tf: float) -> np.ndarray:
    """Uniform unclamped knot vector with n_control + degree + 1 entries.

    Spacing is (tf - t0) / (n_control - degree), which puts knot index
    `degree` at t0 and knot index `n_control` at tf.
    """
    if degree < 1:
        raise ValueError("degree must be at least 1")
    if n_control <= degree:
        raise ValueError("need more control points than the degree")
    if not tf > t0:
        raise ValueError("tf must exceed t0")
    dt = (tf - t0) / (n_control - degree)
    return t0 + (np.arange(n_control + degree + 1) - degree) * dt


def basis_value(i: int, degree: int, t: float, knots: np.ndarray) -> float:
    """Single basis function by the two-term recursion (0/0 terms drop)."""
    if degree == 0:
        return 1.0 if knots[i] <= t < knots[i + 1] else 0.0
    out = 0.0
    left = knots[i + degree] - knots[i]
    if left > 0.0:
        out += (t - knots[i]) / left * basis_value(i, degree - 1, t, knots)
    right = knots[i + degree + 1] - knots[i + 1]
    if right > 0.0:
        out += (knots[i + degree + 1] - t) / right * basis_value(
            i + 1, degree - 1, t, knots
        )
    return out


def _zero_order_matrix(ts: np.ndarray, knots: np.ndarray, n_funcs: int,
                       right_closed_at: float) -> np.ndarray:
    """Indicator functions per knot span, closing the final domain span on the
    right so t == tf evaluates inside the domain.

    The closure point must live in exactly one span: it is stripped from
    every half-open span first (it would otherwise also satisfy the span
    starting at tf, doubling the row) and re-added to the span it closes.
    """
    B = np.zeros((ts.size, n_funcs))
    at_end = ts == right_closed_at
    for i in range(n_funcs):
        inside = (ts >= knots[i]) & (ts < knots[i + 1]) & ~at_end
        if knots[i] < right_closed_at <= knots[i + 1]:
            inside |= at_end
        B[:, i] = inside
    return B


def design_matrix(
    ts,
    n_control: int,
    degree: int,
    knots: np.ndarray,
    deriv: int = 0,
    domain_end: float | None = None,
) -> np.ndarray:
    """Basis (or basis-derivative) values: shape (len(ts), n_control)."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if deriv > degree:
        return np.zeros((ts.size, n_control))
    end = knots[n_control] if domain_end is None else domain_end
    target = degree - deriv
    B = _zero_order_matrix(ts, knots, n_control + degree, end)
    for p in range(1, target + 1):
        n_funcs = n_control + degree - p
        nb = np.zeros((ts.size, n_funcs))
        for i in range(n_funcs):
            left = knots[i + p] - knots[i]
            if left > 0.0:
                nb[:, i] += (ts - knots[i]) / left * B[:, i]
            right = knots[i + p + 1] - knots[i + 1]
            if right > 0.0:
                nb[:, i] += (knots[i + p + 1] - ts) / right * B[:, i + 1]
        B = nb
    for d in range(deriv):
        p = target + d + 1
        n_funcs = n_control + degree - p
        nb = np.zeros((ts.size, n_funcs))
        for i in range(n_funcs):
            left = knots[i + p] - knots[i]
            if left > 0.0:
                nb[:, i] += p / left * B[:, i]
            right = knots[i + p + 1] - knots[i + 1]
            if right > 0.0:
                nb[:, i] -= p / right * B[:, i + 1]
        B = nb
    return B


@dataclass(frozen=True)
class BSplineTrajectory:
    control_points: np.ndarray  # (n_control, 2)
    degree: int = 3
    t0: float = 0.0
    tf: float = 1.0

    def __post_init__(self):
        pts = np.asarray(self.control_points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("control points must be an (n, 2) array")
        if pts.shape[0] <= self.degree:
            raise ValueError("need more control points than the degree")
        if not np.all(np.isfinite(pts)):
            raise ValueError("control points must be finite")
        if not self.tf > self.t0:
            raise ValueError("tf must exceed t0")
        object.__setattr__(self, "control_points", pts)

    @property
    def n_control(self) -> int:
        return self.control_points.shape[0]

    @property
    def duration(self) -> float:
        return self.tf - self.t0

    def knots(self) -> np.ndarray:
        return uniform_knots(self.n_control, self.degree, self.t0, self.tf)

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "t0": self.t0,
            "tf": self.tf,
            "control_points": self.control_points.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "BSplineTrajectory":
        return BSplineTrajectory(
            control_points=np.asarray(d["control_points"], dtype=float),
            degree=int(d["degree"]),
            t0=float(d["t0"]),
            tf=float(d["tf"]),
        )


def eval_curve(traj: BSplineTrajectory, t, order: int = 0) -> np.ndarray:
    """Evaluate the curve or a derivative. Scalar t -> (2,); array -> (n, 2)."""
    ts = np.asarray(t, dtype=float)
    scalar = ts.ndim == 0
    ts = np.atleast_1d(ts)
    slack = 1e-9 * max(1.0, abs(traj.duration))
    if np.any(ts < traj.t0 - slack) or np.any(ts > traj.tf + slack):
        raise ValueError("evaluation time outside the trajectory domain")
    ts = np.clip(ts, traj.t0, traj.tf)
    B = design_matrix(ts, traj.n_control, traj.degree, traj.knots(), deriv=order)
    out = B @ traj.control_points
    return out[0] if scalar else out


class FlatOutputs(NamedTuple):
    speed: float
    turn_rate: float
    curvature: float


def flat_outputs(traj: BSplineTrajectory, t) -> FlatOutputs:
    """Recover speed, turn rate, and curvature from the curve derivatives.

    Undefined where the parameterization is stationary (zero velocity).
    """
    d1 = eval_curve(traj, t, order=1)
    d2 = eval_curve(traj, t, order=2)
    v = float(np.hypot(d1[0], d1[1]))
    if v < 1e-12:
        raise ValueError("flat outputs undefined at a stationary point")
    cross = float(d1[0] * d2[1] - d1[1] * d2[0])
    u = cross / (v * v)
    return FlatOutputs(speed=v, turn_rate=u, curvature=u / v)


def speed_profile(traj: BSplineTrajectory, ts) -> np.ndarray:
    d1 = eval_curve(traj, ts, order=1)
    return np.hypot(d1[:, 0], d1[:, 1])


def max_speed(traj: BSplineTrajectory, n_dense: int = 1001) -> float:
    """Max speed over the domain: dense scan plus golden-section refinement."""
    ts = np.linspace(traj.t0, traj.tf, n_dense)
    v = speed_profile(traj, ts)
    k = int(np.argmax(v))
    lo = ts[max(k - 1, 0)]
    hi = ts[min(k + 1, n_dense - 1)]
    if hi <= lo:
        return float(v[k])
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc = -float(speed_profile(traj, np.array([c]))[0])
    fd = -float(speed_profile(traj, np.array([d]))[0])
    for _ in range(60):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = -float(speed_profile(traj, np.array([c]))[0])
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = -float(speed_profile(traj, np.array([d]))[0])
    best = -min(fc, fd)
    return max(float(v[k]), best)


class FitResult(NamedTuple):
    trajectory: BSplineTrajectory
    max_residual: float


def fit_to_path(
    points,
    n_control: int,
    degree: int = 3,
    endpoint_weight: float = 8.0,
) -> FitResult:
    """Least-squares fit of a [0, 1] spline to an ordered planar path.

    Parameterizes samples by normalized chord length, so the fitted curve
    traverses the path at roughly uniform speed.  Endpoints are weighted so
    the curve pins down to them tightly.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("path must be an (n, 2) array")
    if pts.shape[0] < n_control:
        raise ValueError("fit is underdetermined: fewer samples than controls")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    if total <= 0.0:
        raise ValueError("path has zero length")
    s = np.concatenate([[0.0], np.cumsum(seg)]) / total
    knots = uniform_knots(n_control, degree, 0.0, 1.0)
    A = design_matrix(s, n_control, degree, knots)
    w = np.ones(pts.shape[0])
    w[0] = w[-1] = endpoint_weight
    coef, *_ = np.linalg.lstsq(A * w[:, None], pts * w[:, None], rcond=None)
    traj = BSplineTrajectory(coef, degree, 0.0, 1.0)
    resid = np.linalg.norm(A @ coef - pts, axis=1)
    return FitResult(traj, float(resid.max()))


def retime(traj: BSplineTrajectory, tf_new: float) -> BSplineTrajectory:
    """Rescale the knot span to [0, tf_new]; geometry is unchanged and all
    speeds scale by duration_old / tf_new."""
    if tf_new <= 0.0:
        raise ValueError("new duration must be positive")
    return replace(traj, t0=0.0, tf=tf_new)


def sample_polyline(traj: BSplineTrajectory, n: int) -> np.ndarray:
    return eval_curve(traj, np.linspace(traj.t0, traj.tf, n))


def arc_length(traj: BSplineTrajectory, n: int = 512) -> float:
    pts = sample_polyline(traj, n)
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())

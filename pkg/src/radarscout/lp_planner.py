"""Waypoint planning for the scout fleet, plus the sweeping baseline.

Each planning round scores candidate waypoints with three terms: the posterior
probability that an undiscovered radar sits at the candidate (explore), the
covariance shrink a hypothetical measurement from the candidate would buy on
the tracked radars (localize), and normalized distance to the high-priority
goal (approach).  Agents plan one at a time, each appending its straight-line
future to a shared hypothetical history and updating hypothetical covariances,
which deconflicts the fleet without central assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .core import (
    AgentState,
    MissionSpec,
    PlannerWeights,
    Position2,
    Region,
    ScenarioConfig,
)
from .estimator import RadarEstimate, posterior_covariance, posterior_det_batch
from .radar import intercept_log_evidence, intercept_probability, intercept_snr

_COARSE_GRID = 12
_POLISH_STARTS = 3
_FD_STEP = 25.0  # meters, for the covariance-term gradient


@dataclass
class PathHistory:
    """Explored locations, appended every few seconds by every scout."""

    times: list[float] = field(default_factory=list)
    agent_ids: list[int] = field(default_factory=list)
    points: list[np.ndarray] = field(default_factory=list)

    def append(self, time_s: float, agent_id: int, position) -> None:
        p = np.asarray(position, dtype=float).reshape(2)
        for t, a in zip(reversed(self.times), reversed(self.agent_ids)):
            if a == agent_id:
                if time_s <= t:
                    raise ValueError("history timestamps must increase per agent")
                break
        self.times.append(float(time_s))
        self.agent_ids.append(int(agent_id))
        self.points.append(p)

    def __len__(self) -> int:
        return len(self.points)

    def positions(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 2))
        return np.stack(self.points)

    def copy(self) -> "PathHistory":
        return PathHistory(list(self.times), list(self.agent_ids),
                           [p.copy() for p in self.points])


def gamma_e(x, history_positions: np.ndarray, config: ScenarioConfig) -> float:
    """Posterior chance an undiscovered radar sits at x given silent visits."""
    vals = gamma_e_batch(np.asarray(x, dtype=float)[None, :],
                         history_positions, config)
    return float(vals[0])


def gamma_e_batch(points: np.ndarray, history_positions: np.ndarray,
                  config: ScenarioConfig) -> np.ndarray:
    """Vectorized exploration posterior at (m, 2) points.

    Every silent visit near a candidate argues against a radar being there;
    with no history the prior probability is returned unchanged.  Evaluated
    through accumulated log evidence so long histories cannot underflow.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    phi = config.prior_radar_prob
    hist = np.asarray(history_positions, dtype=float).reshape(-1, 2)
    if hist.shape[0] == 0:
        return np.full(pts.shape[0], phi)
    log_odds_against = math.log((1.0 - phi) / phi)
    lam = np.zeros(pts.shape[0])
    chunk = max(1, int(4e6) // max(hist.shape[0], 1))
    for k in range(0, pts.shape[0], chunk):
        d = np.linalg.norm(pts[k:k + chunk, None, :] - hist[None, :, :], axis=2)
        lam[k:k + chunk] = intercept_log_evidence(d, config).sum(axis=1)
    return 1.0 / (1.0 + np.exp(np.clip(log_odds_against + lam, -700.0, 700.0)))


def gamma_u(x, estimates: Sequence[RadarEstimate], config: ScenarioConfig) -> float:
    """Mean normalized posterior-covariance volume after measuring from x."""
    vals = gamma_u_batch(np.asarray(x, dtype=float)[None, :], estimates, config)
    return float(vals[0])


def gamma_u_batch(points: np.ndarray, estimates: Sequence[RadarEstimate],
                  config: ScenarioConfig) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if not estimates:
        return np.zeros(pts.shape[0])
    noise = config.noise_model()
    acc = np.zeros(pts.shape[0])
    for est in estimates:
        acc += posterior_det_batch(est, pts, noise, config.g_i,
                                   config.wavelength_m)
    return acc / (len(estimates) * config.d_cov)


def gamma_s(x, mission: MissionSpec) -> float:
    """Normalized distance to the high-priority goal."""
    p = np.asarray(x, dtype=float).reshape(2)
    if mission.d_max <= 0.0:
        raise ValueError("mission d_max must be positive for goal seeking")
    return float(np.linalg.norm(p - mission.goal.as_array()) / mission.d_max)


def gamma_s_batch(points: np.ndarray, mission: MissionSpec) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.linalg.norm(pts - mission.goal.as_array()[None, :], axis=1) / mission.d_max


def total_objective(
    x,
    history_positions: np.ndarray,
    estimates: Sequence[RadarEstimate],
    weights: PlannerWeights,
    mission: MissionSpec,
    config: ScenarioConfig,
) -> float:
    """Weighted scout objective; exploration pulls negative (it is sought)."""
    vals = total_objective_batch(np.asarray(x, dtype=float)[None, :],
                                 history_positions, estimates, weights,
                                 mission, config)
    return float(vals[0])


def total_objective_batch(
    points: np.ndarray,
    history_positions: np.ndarray,
    estimates: Sequence[RadarEstimate],
    weights: PlannerWeights,
    mission: MissionSpec,
    config: ScenarioConfig,
) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    val = -weights.alpha_e * gamma_e_batch(pts, history_positions, config)
    if weights.alpha_u > 0.0 and estimates:
        val = val + weights.alpha_u * gamma_u_batch(pts, estimates, config)
    if weights.alpha_s > 0.0:
        val = val + weights.alpha_s * gamma_s_batch(pts, mission)
    return val


def _objective_gradient(
    x: np.ndarray,
    history: np.ndarray,
    estimates: Sequence[RadarEstimate],
    weights: PlannerWeights,
    mission: MissionSpec,
    config: ScenarioConfig,
) -> np.ndarray:
    """Gradient for waypoint polishing: exploration/goal terms analytic, the
    covariance term by central differences (it is cheap and near-quadratic)."""
    grad = np.zeros(2)
    if weights.alpha_e > 0.0 and history.shape[0] > 0:
        d_vec = x[None, :] - history
        d = np.maximum(np.linalg.norm(d_vec, axis=1), 1e-6)
        snr = np.asarray(intercept_snr(d, config))
        p = np.asarray(intercept_probability(d, config))
        ln_pfa = math.log(config.p_fa)
        dp_dd = p * (-ln_pfa) / (snr + 1.0) ** 2 * (-2.0 * snr / d)
        dlam_dd = dp_dd / np.maximum(1.0 - p, 1e-300)
        g_e = gamma_e(x, history, config)
        dgam_dlam = -g_e * (1.0 - g_e)
        dlam_dx = (dlam_dd / d)[:, None] * d_vec
        grad += -weights.alpha_e * dgam_dlam * dlam_dx.sum(axis=0)
    if weights.alpha_u > 0.0 and estimates:
        for axis in range(2):
            e = np.zeros(2)
            e[axis] = _FD_STEP
            hi = gamma_u(x + e, estimates, config)
            lo = gamma_u(x - e, estimates, config)
            grad[axis] += weights.alpha_u * (hi - lo) / (2.0 * _FD_STEP)
    if weights.alpha_s > 0.0:
        to_goal = x - mission.goal.as_array()
        norm = np.linalg.norm(to_goal)
        if norm > 1e-9:
            grad += weights.alpha_s * to_goal / (norm * mission.d_max)
    return grad


def optimize_waypoint(
    history_positions: np.ndarray,
    estimates: Sequence[RadarEstimate],
    weights: PlannerWeights,
    mission: MissionSpec,
    config: ScenarioConfig,
    polish_starts: int = _POLISH_STARTS,
    polish_maxiter: int = 60,
) -> Position2:
    """Region-wide argmin of the scout objective.

    Coarse cell-center grid scan picks the promising basins; the best few get
    box-constrained local polishing.  Deterministic: fixed grid, fixed start
    count, lowest-value tie-break.
    """
    region = config.region
    pts, _, _ = region.grid(_COARSE_GRID)
    flat = pts.reshape(-1, 2)
    vals = total_objective_batch(flat, history_positions, estimates, weights,
                                 mission, config)
    order = np.argsort(vals, kind="stable")[:max(polish_starts, 1)]
    bounds = [(region.lower.x, region.upper.x), (region.lower.y, region.upper.y)]
    best_x = flat[order[0]]
    best_v = float(vals[order[0]])
    for idx in order:
        res = minimize(
            lambda q: total_objective(q, history_positions, estimates, weights,
                                      mission, config),
            flat[idx],
            jac=lambda q: _objective_gradient(q, history_positions, estimates,
                                              weights, mission, config),
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": polish_maxiter, "ftol": 1e-12, "gtol": 1e-10},
        )
        if res.fun < best_v - 1e-15:
            best_v = float(res.fun)
            best_x = np.asarray(res.x)
    best_x = region.clamp(best_x)
    return Position2(float(best_x[0]), float(best_x[1]))


def _future_samples(start: np.ndarray, end: np.ndarray,
                    spacing: float) -> np.ndarray:
    """Straight-line points from start to end at fixed spacing (end included)."""
    gap = float(np.linalg.norm(end - start))
    if gap <= 1e-9:
        return end[None, :]
    n = max(int(math.floor(gap / spacing)), 1)
    ts = np.arange(1, n + 1) * (spacing / gap)
    ts = np.append(ts[ts < 1.0], 1.0)
    return start[None, :] + ts[:, None] * (end - start)[None, :]


@dataclass
class WaypointAssignment:
    waypoints: dict[int, Position2]
    order: list[int]
    hypothetical_covariances: dict[int, np.ndarray]
    hypothetical_history: np.ndarray  # future points appended during the round


def plan_waypoints(
    agents: Sequence[AgentState],
    estimates: Sequence[RadarEstimate],
    history: PathHistory,
    weights: PlannerWeights,
    mission: MissionSpec,
    config: ScenarioConfig,
    deconflict: bool = True,
    polish_starts: int = _POLISH_STARTS,
    polish_maxiter: int = 60,
) -> WaypointAssignment:
    """One round-robin planning round for the whole scout fleet.

    Agents closest to the most uncertain radar plan first (agent order when
    nothing is tracked yet).  Each planned agent appends its straight-line
    future to the shared hypothetical history and hypothetically tightens
    every radar covariance from its waypoint, which pushes later agents
    toward different places.  deconflict=False skips those two appends (used
    only to demonstrate their effect).
    """
    n = len(agents)
    order = list(range(n))
    if estimates:
        dets = [float(np.linalg.det(e.covariance)) for e in estimates]
        target = estimates[int(np.argmax(dets))].position_array()
        dists = [
            float(np.linalg.norm(a.position.as_array() - target)) for a in agents
        ]
        order = sorted(range(n), key=lambda i: (dists[i], i))
    hypo_history = history.positions()
    hypo_estimates = list(estimates)
    future_points: list[np.ndarray] = []
    spacing = config.history_period_s * config.agent_speed
    noise = config.noise_model()
    waypoints: dict[int, Position2] = {}
    for agent_id in order:
        wp = optimize_waypoint(hypo_history, hypo_estimates, weights, mission,
                               config, polish_starts, polish_maxiter)
        waypoints[agent_id] = wp
        if not deconflict:
            continue
        seg = _future_samples(agents[agent_id].position.as_array(),
                              wp.as_array(), spacing)
        future_points.append(seg)
        hypo_history = np.concatenate([hypo_history, seg], axis=0)
        updated = []
        for est in hypo_estimates:
            cov = posterior_covariance(est, wp.as_array(), noise, config.g_i,
                                       config.wavelength_m)
            updated.append(RadarEstimate(est.radar_id, est.state.copy(), cov,
                                         est.n_measurements, est.time_s))
        hypo_estimates = updated
    hypo_covs = {e.radar_id: e.covariance for e in hypo_estimates}
    future = (np.concatenate(future_points, axis=0) if future_points
              else np.zeros((0, 2)))
    return WaypointAssignment(waypoints, order, hypo_covs, future)


def rung_spacing(config: ScenarioConfig, threshold: float,
                 region: Region | None = None) -> float:
    """Largest rung gap keeping the midpoint posterior at or below threshold.

    Sets up two synthetic parallel sweep legs a candidate gap apart and
    evaluates the exploration posterior midway between them; bisection on the
    gap (the posterior grows monotonically with it).
    """
    region = region if region is not None else config.region
    spacing = config.history_period_s * config.agent_speed
    width = region.width

    def midpoint_gamma(gap: float) -> float:
        xs = np.arange(-0.5 * width, 0.5 * width + spacing, spacing)
        rung_lo = np.stack([xs, np.full_like(xs, -0.5 * gap)], axis=1)
        rung_hi = np.stack([xs, np.full_like(xs, 0.5 * gap)], axis=1)
        hist = np.concatenate([rung_lo, rung_hi], axis=0)
        return gamma_e(np.zeros(2), hist, config)

    lo, hi = spacing * 0.1, region.height
    if midpoint_gamma(hi) <= threshold:
        return hi
    if midpoint_gamma(lo) > threshold:
        return lo
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if midpoint_gamma(mid) <= threshold:
            lo = mid
        else:
            hi = mid
    return lo


def lawnmower_plan(
    region: Region,
    n_agents: int,
    config: ScenarioConfig,
    threshold: float = 0.45,
) -> list[list[Position2]]:
    """Boustrophedon sweep waypoints, one vertical strip per agent.

    Rung gaps come from the posterior threshold; a second pass revisits the
    strip along the midlines between first-pass rungs, halving the effective
    gap for missions that outlive the first sweep.
    """
    if n_agents < 1:
        raise ValueError("need at least one sweeping agent")
    gap = rung_spacing(config, threshold, region)
    strip_w = region.width / n_agents
    plans: list[list[Position2]] = []
    for i in range(n_agents):
        x_lo = region.lower.x + i * strip_w
        x_hi = x_lo + strip_w
        ys = np.arange(region.lower.y + 0.5 * gap, region.upper.y, gap)
        if ys.size == 0:
            ys = np.array([0.5 * (region.lower.y + region.upper.y)])
        path: list[Position2] = []
        flip = False
        for y in ys:
            a, b = (x_hi, x_lo) if flip else (x_lo, x_hi)
            path.append(Position2(a, float(y)))
            path.append(Position2(b, float(y)))
            flip = not flip
        second = ys[:-1] + 0.5 * gap if ys.size > 1 else ys + 0.5 * gap
        # Second pass works back down from where the first sweep ended.
        for y in second[::-1]:
            a, b = (x_hi, x_lo) if flip else (x_lo, x_hi)
            path.append(Position2(a, float(y)))
            path.append(Position2(b, float(y)))
            flip = not flip
        plans.append(path)
    return plans

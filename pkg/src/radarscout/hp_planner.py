"""End-to-end route planning for the high-priority aircraft.

Two pipelines share a skeleton: build a roadmap that keeps threats at arm's
length, trim away edges violating the safety criterion, search it, fit a
spline seed to the winning polyline, stretch its timing under the speed
limit, then hand it to the constrained optimizer.  The fully informed
pipeline works from ground-truth radars on a weighted Voronoi roadmap with a
hard detection ceiling; the estimate-driven pipeline works on the
generalized-diagram roadmap with a chance constraint, and additionally
refuses to dispatch when any point of the optimized route still plausibly
hides an undiscovered radar (the exploration posterior gate).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .bspline import BSplineTrajectory, eval_curve, fit_to_path, retime
from .core import (
    KinematicLimits,
    KnownAgentParams,
    MissionSpec,
    Position2,
    ScenarioConfig,
)
from .estimator import RadarEstimate
from .lp_planner import PathHistory, gamma_e_batch
from .pd_uncertainty import (
    KnownParamBelief,
    UnknownPrior,
    pd_below_zscore,
    pd_belief_batch,
)
from .radar import BOLTZMANN, RadarTruth, erp, pd_field
from .roadmap import (
    PathResult,
    RoadmapGraph,
    WeightedSite,
    build_generalized_diagram,
    build_weighted_diagram,
    shortest_path,
    trim_deterministic,
    trim_uncertain,
)
from .trajopt import (
    ConstraintMargins,
    DeterministicMode,
    OptimizerConfig,
    TrajectoryProblem,
    UncertainMode,
    enforce_velocity_heuristic,
    solve,
    verify_trajectory,
)


@dataclass(frozen=True)
class HpPlannerConfig:
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    margins: ConstraintMargins = field(default_factory=ConstraintMargins)
    n_control: int = 40
    degree: int = 3
    grid_n: int = 201
    samples_per_edge: int = 20
    seed_samples: int = 161
    verify_factor: int = 10
    verify_tolerance: float = 1e-6
    margin_rounds: int = 4


def radar_weight(radar: RadarTruth, rcs_m2: float) -> float:
    """Detection-strength length scale of one radar.

    On the locus where two radars' weighted distances d/w agree, their
    detection SNRs (hence single-radar detection probabilities) agree; w
    grows with radiated power, so stronger radars claim more ground.
    """
    num = erp(radar) * radar.g_r * radar.wavelength_m**2 * rcs_m2 * radar.pulse_width_s
    den = BOLTZMANN * radar.system_temp_k * radar.loss
    if num <= 0.0:
        return 0.0
    return (num / den) ** 0.25


@dataclass
class PlanResult:
    dispatchable: bool
    trajectory: BSplineTrajectory | None = None
    tf: float = math.inf
    reason: str = ""
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dispatchable": self.dispatchable,
            "tf": self.tf,
            "reason": self.reason,
            "diagnostics": {
                k: v for k, v in self.diagnostics.items() if np.isscalar(v)
            },
            "trajectory": (self.trajectory.to_dict()
                           if self.trajectory is not None else None),
        }


def _resample_polyline(points: np.ndarray, n: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0.0:
        return np.repeat(points[:1], n, axis=0)
    stations = np.linspace(0.0, s[-1], n)
    return np.stack([
        np.interp(stations, s, points[:, 0]),
        np.interp(stations, s, points[:, 1]),
    ], axis=1)


def _straight_path(mission: MissionSpec) -> PathResult:
    pts = np.stack([mission.start.as_array(), mission.goal.as_array()])
    length = float(np.linalg.norm(pts[1] - pts[0]))
    return PathResult(True, length, [], _resample_polyline(pts, 9))


def _segment_samples(a: np.ndarray, b: np.ndarray,
                     spacing: float) -> np.ndarray:
    n = max(int(math.ceil(float(np.linalg.norm(b - a)) / spacing)), 1)
    ts = np.linspace(0.0, 1.0, n + 1)
    return a[None, :] + ts[:, None] * (b - a)[None, :]


def _shortcut_polyline(points: np.ndarray, ok_fn,
                       spacing: float = 150.0) -> np.ndarray:
    """Straighten a safe polyline by greedily skipping ahead.

    Roadmap routes hug cell boundaries and region edges; every skipped
    stretch must itself pass the safety predicate, so the result is no less
    safe, only shorter and smoother to fit.  Deterministic: the candidate
    endpoint halves until the direct segment checks out.
    """
    pts = np.asarray(points, dtype=float)
    out = [pts[0]]
    i, last = 0, len(pts) - 1
    while i < last:
        j = last
        while j > i + 1 and not ok_fn(_segment_samples(pts[i], pts[j],
                                                       spacing)):
            j = i + max((j - i) // 2, 1)
        out.append(pts[j])
        i = j
    return np.stack(out)


def _parametric_speed_range(traj: BSplineTrajectory,
                            n_dense: int = 1001) -> tuple[float, float]:
    unit = retime(traj, 1.0)
    ts = np.linspace(0.0, 1.0, n_dense)
    d1 = eval_curve(unit, ts, order=1)
    speeds = np.hypot(d1[:, 0], d1[:, 1])
    return float(speeds.min()), float(speeds.max())


def _pin_endpoints(traj: BSplineTrajectory,
                   mission: MissionSpec) -> BSplineTrajectory:
    """Shift the outermost control points so the curve ends land exactly.

    At each end of the domain only `degree` basis functions are nonzero and
    they sum to one, so translating those control points together moves the
    endpoint by exactly the same amount while leaving all but the outer spans
    untouched.
    """
    d = traj.degree
    cp = traj.control_points.copy()
    e0 = mission.start.as_array() - eval_curve(traj, traj.t0)
    e1 = mission.goal.as_array() - eval_curve(traj, traj.tf)
    cp[:d] += e0[None, :]
    cp[-d:] += e1[None, :]
    return BSplineTrajectory(cp, traj.degree, traj.t0, traj.tf)


def _shape_seed(traj: BSplineTrajectory, region, mission: MissionSpec,
                limits: KinematicLimits, ok_fn) -> BSplineTrajectory:
    """Make a fitted seed feasible enough to warm-start the optimizer.

    Control points are clamped one meter inside the region (the convex-hull
    property then bounds the whole curve), interior control points are
    smoothed until the parametric speed spread fits inside the speed band so
    a single retiming puts the entire profile within limits, and the curve
    ends are re-pinned to the mission points after every shape change.
    Every change is re-checked against the safety predicate and reverted on
    failure.
    """

    def curve_ok(candidate: BSplineTrajectory) -> bool:
        if ok_fn is None:
            return True
        ts = np.linspace(0.0, candidate.duration, 257)
        return bool(ok_fn(eval_curve(candidate, ts)))

    cp = traj.control_points.copy()
    lo = region.lower.as_array() + 1.0
    hi = region.upper.as_array() - 1.0
    clamped = np.clip(cp, lo[None, :], hi[None, :])
    cand = _pin_endpoints(
        BSplineTrajectory(clamped, traj.degree, traj.t0, traj.tf), mission)
    if curve_ok(cand):
        traj = cand
        cp = cand.control_points.copy()
    band = 0.96 * limits.v_ub / limits.v_lb
    for _ in range(12):
        lo_s, hi_s = _parametric_speed_range(traj)
        if lo_s > 0.0 and hi_s / lo_s <= band:
            break
        smoothed = cp.copy()
        smoothed[1:-1] = 0.5 * cp[1:-1] + 0.25 * (cp[:-2] + cp[2:])
        cand = _pin_endpoints(
            BSplineTrajectory(smoothed, traj.degree, traj.t0, traj.tf),
            mission)
        if not curve_ok(cand):
            break
        cp = cand.control_points.copy()
        traj = cand
    lo_s, hi_s = _parametric_speed_range(traj)
    if lo_s > 0.0 and hi_s / lo_s <= limits.v_ub / limits.v_lb:
        # Geometric midpoint of the admissible duration window centers the
        # speed profile inside the band.
        duration = math.sqrt((hi_s / limits.v_ub) * (lo_s / limits.v_lb))
        return retime(traj, duration)
    seeded = retime(traj, max(hi_s / limits.v_ub, 1.0))
    return enforce_velocity_heuristic(seeded, limits)


def _seed_from_path(path: PathResult, cfg: HpPlannerConfig,
                    mission: MissionSpec,
                    limits: KinematicLimits,
                    region,
                    ok_fn=None) -> BSplineTrajectory:
    raw = np.asarray(path.points, dtype=float)
    if ok_fn is not None and len(raw) > 2:
        raw = _shortcut_polyline(raw, ok_fn)
    pts = _resample_polyline(raw, max(cfg.seed_samples,
                                      4 * cfg.n_control + 1))
    # Pin the fit ends to the exact mission points before fitting.
    pts[0] = mission.start.as_array()
    pts[-1] = mission.goal.as_array()
    fit = fit_to_path(pts, n_control=cfg.n_control, degree=cfg.degree,
                      endpoint_weight=16.0)
    return _shape_seed(fit.trajectory, region, mission, limits, ok_fn)


def _bumped_margins(margins: ConstraintMargins, family_max: dict,
                    problem: TrajectoryProblem, tolerance: float
                    ) -> ConstraintMargins:
    """Grow each violated family's margin past its measured dense violation.

    Dense violations are reported in scaled units; converting back to raw
    units and adding 30 percent headroom makes one round usually enough.
    Margins are capped so the interior band never collapses.
    """
    lim = problem.limits
    v_scale = lim.v_ub
    u_scale = max(lim.u_ub, -lim.u_lb)
    k_scale = lim.kappa_ub
    pd_scale = problem.mission.pd_threshold
    pos_scale = max(problem.region.diagonal, 1.0)

    def need(keys, scale):
        worst = max(family_max.get(k, -math.inf) for k in keys)
        if worst <= tolerance:
            return 0.0
        return 1.3 * worst * scale

    out = replace(
        margins,
        speed=min(max(margins.speed * 4.0,
                      margins.speed + need(("speed_hi", "speed_lo"), v_scale)),
                  0.45 * (lim.v_ub - lim.v_lb)),
        turn=min(max(margins.turn * 4.0,
                     margins.turn + need(("turn_hi", "turn_lo"), u_scale)),
                 0.45 * (lim.u_ub - lim.u_lb)),
        curvature=min(max(margins.curvature * 4.0,
                          margins.curvature
                          + need(("curv_hi", "curv_lo"), k_scale)),
                      0.8 * lim.kappa_ub),
        pd=min(max(margins.pd * 4.0,
                   margins.pd + need(("safety",), pd_scale)),
               0.8 * problem.mission.pd_threshold),
        chance_z=min(max(margins.chance_z * 4.0,
                         margins.chance_z + need(("safety",), 1.0)),
                     3.0),
        region=min(max(margins.region * 4.0,
                       margins.region + need(("region_xlo", "region_xhi",
                                              "region_ylo", "region_yhi"),
                                             pos_scale)),
                   0.05 * pos_scale),
    )
    return out


def _solve_with_verification(problem: TrajectoryProblem, cfg: HpPlannerConfig,
                             diagnostics: dict, z_epsilon: float | None = None):
    """Solve, densely re-check, and widen margins until the dense check holds.

    Margin growth tracks the measured inter-sample violation, and each retry
    warm-starts from the previous round's solution.
    """
    margins = cfg.margins
    traj, tf, report = problem.seed, problem.seed.duration, None
    for round_idx in range(cfg.margin_rounds):
        traj, tf, report = solve(problem, cfg.optimizer, margins=margins,
                                 z_epsilon=z_epsilon)
        if not report.feasible:
            diagnostics["solver_feasible"] = False
            diagnostics["solver_max_violation"] = report.max_violation
            diagnostics["solver_message"] = report.message
            return traj, tf, report, False
        check = verify_trajectory(problem, traj, factor=cfg.verify_factor,
                                  n_samples=cfg.optimizer.n_samples,
                                  tolerance=cfg.verify_tolerance,
                                  z_epsilon=z_epsilon)
        diagnostics["verify_max_violation"] = check.max_violation
        diagnostics["verify_worst_family"] = check.worst_family
        diagnostics["margin_rounds_used"] = round_idx + 1
        if check.ok:
            diagnostics["solver_feasible"] = True
            return traj, tf, report, True
        margins = _bumped_margins(margins, check.family_max, problem,
                                  cfg.verify_tolerance)
        problem = replace(problem, seed=traj)
    diagnostics["solver_feasible"] = bool(report.feasible) if report else False
    return traj, tf, report, False


def plan_deterministic(
    radars: Sequence[RadarTruth],
    agent: KnownAgentParams,
    mission: MissionSpec,
    limits: KinematicLimits,
    scenario: ScenarioConfig,
    cfg: HpPlannerConfig | None = None,
) -> PlanResult:
    """Minimum-time route against fully known radars under a hard PD ceiling."""
    cfg = cfg or HpPlannerConfig()
    t_start = time.perf_counter()
    diagnostics: dict = {}
    region = scenario.region
    radar_list = list(radars)
    p_dt = mission.pd_threshold

    def segment_ok(samples: np.ndarray) -> bool:
        if not radar_list:
            return True
        return float(pd_field(samples, radar_list, agent.rcs_m2).max()) <= p_dt

    sites = []
    for r in radar_list:
        w = radar_weight(r, agent.rcs_m2)
        if w > 0.0:
            sites.append(WeightedSite(r.position, w))
    if sites:
        graph = build_weighted_diagram(sites, region)
        diagnostics["roadmap_edges"] = len(graph.edges)
        trimmed = trim_deterministic(graph, radar_list, agent, p_dt)
        diagnostics["trimmed_edges"] = len(graph.edges) - len(trimmed.edges)
        path = shortest_path(trimmed, mission.start, mission.goal,
                             connector_ok=segment_ok)
    else:
        diagnostics["roadmap_edges"] = 0
        diagnostics["trimmed_edges"] = 0
        path = _straight_path(mission)
        if not segment_ok(path.points):
            path = PathResult(False, reason="straight corridor unsafe")
    if not path.found:
        diagnostics["time_s"] = time.perf_counter() - t_start
        return PlanResult(False, reason=path.reason or "no roadmap route",
                          diagnostics=diagnostics)
    diagnostics["roadmap_length"] = path.total_length
    seed = _seed_from_path(path, cfg, mission, limits, region,
                           ok_fn=segment_ok)
    problem = TrajectoryProblem(seed, limits, region, mission,
                                DeterministicMode(radar_list, agent.rcs_m2))
    traj, tf, report, ok = _solve_with_verification(problem, cfg, diagnostics)
    if radar_list and traj is not None:
        dense = eval_curve(traj, np.linspace(0.0, traj.duration,
                                             10 * cfg.optimizer.n_samples + 1))
        diagnostics["max_pd"] = float(pd_field(dense, radar_list,
                                               agent.rcs_m2).max())
    diagnostics["solver_iterations"] = report.iterations if report else 0
    diagnostics["time_s"] = time.perf_counter() - t_start
    if not ok:
        return PlanResult(False, traj, tf, "optimization or verification failed",
                          diagnostics)
    return PlanResult(True, traj, tf, "", diagnostics)


def gate_p_max(traj: BSplineTrajectory, history_positions: np.ndarray,
               scenario: ScenarioConfig, n_samples: int) -> float:
    """Largest undiscovered-radar posterior along the route's sample grid."""
    pts = eval_curve(traj, np.linspace(0.0, traj.duration, n_samples + 1))
    return float(gamma_e_batch(pts, history_positions, scenario).max())


def plan_uncertain(
    estimates: Sequence[RadarEstimate],
    priors: UnknownPrior,
    known: KnownParamBelief,
    history: PathHistory | np.ndarray,
    mission: MissionSpec,
    limits: KinematicLimits,
    scenario: ScenarioConfig,
    cfg: HpPlannerConfig | None = None,
) -> PlanResult:
    """Chance-constrained route from estimates, gated on exploration coverage.

    Dispatchable only when the optimizer found a verified route AND no point
    of it plausibly hides an undiscovered radar (posterior gate at the
    mission's dispatch threshold).
    """
    cfg = cfg or HpPlannerConfig()
    t_start = time.perf_counter()
    diagnostics: dict = {}
    region = scenario.region
    est_list = list(estimates)
    hist_pos = (history.positions() if isinstance(history, PathHistory)
                else np.asarray(history, dtype=float).reshape(-1, 2))
    epsilon = mission.epsilon
    p_dt = mission.pd_threshold
    p_s = mission.dispatch_gate
    z_eps = float(ndtri(epsilon)) if 0.0 < epsilon < 1.0 else (
        -math.inf if epsilon <= 0.0 else math.inf
    )

    def segment_ok(samples: np.ndarray) -> bool:
        if not est_list:
            return True
        mean, var = pd_belief_batch(samples, known, priors, est_list)
        z = pd_below_zscore(mean, var, p_dt)
        return bool(np.all(z >= z_eps))

    if est_list:
        graph = build_generalized_diagram(est_list, priors, known, region,
                                          cfg.grid_n, p_dt)
        diagnostics["roadmap_edges"] = len(graph.edges)
        trimmed = trim_uncertain(graph, est_list, priors, known, p_dt, epsilon,
                                 cfg.samples_per_edge)
        diagnostics["trimmed_edges"] = len(graph.edges) - len(trimmed.edges)
        path = shortest_path(trimmed, mission.start, mission.goal,
                             connector_ok=segment_ok)
    else:
        diagnostics["roadmap_edges"] = 0
        diagnostics["trimmed_edges"] = 0
        path = _straight_path(mission)
        if not segment_ok(path.points):
            path = PathResult(False, reason="straight corridor unsafe")
    if not path.found:
        diagnostics["time_s"] = time.perf_counter() - t_start
        return PlanResult(False, reason=path.reason or "no roadmap route",
                          diagnostics=diagnostics)
    diagnostics["roadmap_length"] = path.total_length
    seed = _seed_from_path(path, cfg, mission, limits, region,
                           ok_fn=segment_ok)
    # Cheap gate on the seed corridor first: if the roadmap route itself runs
    # through unexplored ground, the refined route will too; skip the solve.
    seed_p_max = gate_p_max(seed, hist_pos, scenario, cfg.optimizer.n_samples)
    diagnostics["seed_p_max"] = seed_p_max
    if seed_p_max > p_s:
        diagnostics["time_s"] = time.perf_counter() - t_start
        return PlanResult(False, seed, seed.duration,
                          "route not sufficiently explored", diagnostics)
    problem = TrajectoryProblem(seed, limits, region, mission,
                                UncertainMode(est_list, priors, known))
    traj, tf, report, ok = _solve_with_verification(problem, cfg, diagnostics,
                                                    z_epsilon=z_eps)
    diagnostics["solver_iterations"] = report.iterations if report else 0
    if traj is not None and est_list:
        dense = eval_curve(traj, np.linspace(0.0, traj.duration,
                                             10 * cfg.optimizer.n_samples + 1))
        mean, var = pd_belief_batch(dense, known, priors, est_list)
        z = pd_below_zscore(mean, var, p_dt)
        diagnostics["min_chance_z"] = float(np.min(z))
    p_max = gate_p_max(traj, hist_pos, scenario,
                       cfg.optimizer.n_samples) if traj is not None else 1.0
    diagnostics["p_max"] = p_max
    diagnostics["time_s"] = time.perf_counter() - t_start
    if not ok:
        return PlanResult(False, traj, tf, "optimization or verification failed",
                          diagnostics)
    if p_max > p_s:
        return PlanResult(False, traj, tf, "route not sufficiently explored",
                          diagnostics)
    return PlanResult(True, traj, tf, "", diagnostics)

"""Time-stepped mission engine for the scout fleet.

One mission: scouts walk straight lines toward their assigned waypoints at
constant speed, intercept radar emissions as Bernoulli draws each second,
feed a shared estimator pipeline, and log their paths as exploration
history.  Planning rounds (periodic or on waypoint arrival) reassign
waypoints; after enough evidence exists, each round also attempts the
high-priority route plan.  The mission ends at the first dispatchable plan
or at the time cap.

All randomness flows through per-tick substreams of the scenario seed, so a
mission replayed from its seed manifest reproduces its event log exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import (
    AgentState,
    KinematicLimits,
    MissionSpec,
    PlannerWeights,
    Position2,
    ScenarioConfig,
    generate_scenario,
    substream,
    wrap_angle,
)
from .estimator import TrackStore
from .hp_planner import HpPlannerConfig, PlanResult, plan_uncertain
from .lp_planner import PathHistory, lawnmower_plan, plan_waypoints
from .pd_uncertainty import KnownParamBelief, UnknownPrior
from .radar import RadarTruth, intercept_probability_true, sample_measurement

MODES = ("ours", "lawnmower")


@dataclass(frozen=True)
class SimConfig:
    dt_s: float = 1.0
    t_max_s: float = 1200.0
    # 0 means attempt the route plan at every planning round; a positive
    # period rate-limits attempts to at most one per that many seconds.
    hp_attempt_period_s: float = 0.0
    min_coverage_for_hp: float = 0.1
    coverage_grid_n: int = 20
    lp_polish_starts: int = 3
    lp_polish_maxiter: int = 60
    hp: HpPlannerConfig = field(default_factory=HpPlannerConfig)
    limits: KinematicLimits = field(default_factory=KinematicLimits)


@dataclass
class MissionOutcome:
    found: bool
    t_found: float
    plan: PlanResult | None
    logs: list[dict]
    summary: dict = field(default_factory=dict)


class SimState:
    """Mutable world state for one mission run."""

    def __init__(self, radars: Sequence[RadarTruth], config: ScenarioConfig,
                 mission: MissionSpec, sim_config: SimConfig,
                 initial_history: PathHistory | None = None):
        self.radars = list(radars)
        self.config = config
        self.mission = mission
        self.sim_config = sim_config
        self.clock = 0.0
        self.tick_index = 0
        self.agents = _spawn_agents(config, mission)
        self.waypoints: dict[int, Position2] = {
            i: a.position for i, a in enumerate(self.agents)
        }
        self.store = TrackStore(config)
        self.history = initial_history.copy() if initial_history else PathHistory()
        self.latest_plan: PlanResult | None = None
        self.event_log: list[dict] = []
        self.last_round_time = -math.inf
        self.last_hp_time = -math.inf
        self.n_measurements = 0
        self.n_rounds = 0
        self.n_hp_attempts = 0
        n = sim_config.coverage_grid_n
        self._covered = np.zeros((n, n), dtype=bool)
        for p in self.history.points:
            self._mark_coverage(p)

    # The whole fleet shares one broadcast measurement stream; every
    # per-agent store is a view of the same fused pipeline.
    def agent_store(self, agent_id: int) -> TrackStore:
        return self.store

    def _mark_coverage(self, point) -> None:
        region = self.config.region
        n = self.sim_config.coverage_grid_n
        ix = int(np.clip((point[0] - region.lower.x) / max(region.width, 1e-9)
                         * n, 0, n - 1))
        iy = int(np.clip((point[1] - region.lower.y) / max(region.height, 1e-9)
                         * n, 0, n - 1))
        self._covered[iy, ix] = True

    def coverage(self) -> float:
        return float(self._covered.mean())

    def record_history(self) -> None:
        for i, agent in enumerate(self.agents):
            p = agent.position.as_array()
            self.history.append(self.clock, i, p)
            self._mark_coverage(p)

    def log(self, record: dict) -> None:
        self.event_log.append(record)


def _spawn_agents(config: ScenarioConfig, mission: MissionSpec) -> list[AgentState]:
    """Scouts start fanned out on a ring around the mission start point."""
    region = config.region
    out = []
    n = config.n_agents
    for i in range(n):
        ang = 2.0 * math.pi * i / max(n, 1)
        p = np.array([
            mission.start.x + config.lp_start_radius_m * math.cos(ang),
            mission.start.y + config.lp_start_radius_m * math.sin(ang),
        ])
        p = region.clamp(p)
        out.append(AgentState(Position2(float(p[0]), float(p[1])), ang,
                              config.agent_speed))
    return out


def _move_agent(agent: AgentState, waypoint: Position2, speed: float,
                dt: float) -> AgentState:
    delta = waypoint.as_array() - agent.position.as_array()
    dist = float(np.hypot(delta[0], delta[1]))
    if dist < 1e-9:
        return replace(agent, speed=0.0)
    step = min(speed * dt, dist)
    new = agent.position.as_array() + delta * (step / dist)
    heading = wrap_angle(math.atan2(delta[1], delta[0]))
    return AgentState(Position2(float(new[0]), float(new[1])), heading, speed)


def step(state: SimState, dt: float) -> SimState:
    """Advance one tick: motion, intercept draws, history, in place."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    cfg = state.config
    for i, agent in enumerate(state.agents):
        state.agents[i] = _move_agent(agent, state.waypoints[i],
                                      cfg.agent_speed, dt)
    state.clock += dt
    state.tick_index += 1
    state.log({
        "type": "positions", "t": state.clock,
        "agents": [[a.position.x, a.position.y] for a in state.agents],
    })
    if state.radars:
        rng = substream(cfg.seed, f"tick-{state.tick_index}")
        noise = cfg.noise_model()
        for i, agent in enumerate(state.agents):
            pos = agent.position.as_array()
            for j, radar in enumerate(state.radars):
                p_int = float(intercept_probability_true(pos, radar, cfg))
                if rng.uniform() < p_int:
                    m = sample_measurement(
                        cfg.agent_params(agent.position), radar, noise, rng,
                        agent_id=i, radar_id=j, time_s=state.clock,
                    )
                    state.store.add(m)
                    state.n_measurements += 1
                    state.log({
                        "type": "measurement", "t": state.clock,
                        "agent": i, "radar": j,
                        "power": m.power_w, "angle": m.angle_rad,
                    })
    period = cfg.history_period_s
    if period > 0 and state.tick_index % max(int(round(period / dt)), 1) == 0:
        state.record_history()
    return state


def _round_due(state: SimState) -> bool:
    cfg = state.config
    if state.clock - state.last_round_time >= cfg.replan_horizon_s - 1e-9:
        return True
    for i, agent in enumerate(state.agents):
        if agent.position.distance_to(state.waypoints[i]) <= cfg.arrival_radius_m:
            return True
    return False


def _lawnmower_advance(state: SimState, queues: list[list[Position2]]) -> None:
    cfg = state.config
    for i, agent in enumerate(state.agents):
        if queues[i] and (
            agent.position.distance_to(state.waypoints[i]) <= cfg.arrival_radius_m
        ):
            state.waypoints[i] = queues[i].pop(0)


def _planning_round(state: SimState, weights: PlannerWeights,
                    mode: str, queues: list[list[Position2]] | None) -> None:
    state.n_rounds += 1
    state.last_round_time = state.clock
    if mode == "lawnmower":
        _lawnmower_advance(state, queues)
    else:
        sim_cfg = state.sim_config
        assignment = plan_waypoints(state.agents, state.store.estimates(),
                                    state.history, weights, state.mission,
                                    state.config,
                                    polish_starts=sim_cfg.lp_polish_starts,
                                    polish_maxiter=sim_cfg.lp_polish_maxiter)
        state.waypoints = dict(assignment.waypoints)
    state.log({
        "type": "round", "t": state.clock, "mode": mode,
        "waypoints": [[state.waypoints[i].x, state.waypoints[i].y]
                      for i in range(len(state.agents))],
    })


def _hp_attempt(state: SimState) -> PlanResult:
    state.n_hp_attempts += 1
    state.last_hp_time = state.clock
    sim_cfg = state.sim_config
    cfg = state.config
    result = plan_uncertain(
        state.store.estimates(),
        UnknownPrior.from_config(cfg),
        KnownParamBelief.for_agent(cfg.rcs_m2, state.mission.start),
        state.history,
        state.mission,
        sim_cfg.limits,
        cfg,
        sim_cfg.hp,
    )
    state.latest_plan = result
    state.log({
        "type": "hp_attempt", "t": state.clock,
        "dispatchable": result.dispatchable, "reason": result.reason,
        "tf": result.tf if math.isfinite(result.tf) else None,
        "p_max": result.diagnostics.get(
            "p_max", result.diagnostics.get("seed_p_max")),
        "n_estimates": state.store.n_initialized(),
    })
    return result


def _hp_ready(state: SimState) -> bool:
    sim_cfg = state.sim_config
    if state.store.n_initialized() < 1 and (
        state.coverage() < sim_cfg.min_coverage_for_hp
    ):
        return False
    if sim_cfg.hp_attempt_period_s > 0 and state.last_hp_time > -math.inf:
        return (state.clock - state.last_hp_time
                >= sim_cfg.hp_attempt_period_s - 1e-9)
    return True


def run_mission(
    config: ScenarioConfig,
    weights: PlannerWeights,
    mission: MissionSpec,
    mode: str = "ours",
    t_max: float | None = None,
    sim_config: SimConfig | None = None,
    radars: Sequence[RadarTruth] | None = None,
    initial_history: PathHistory | None = None,
) -> MissionOutcome:
    """Run one full scout mission until dispatch or the time cap.

    The high-priority plan is attempted once per planning round as soon as at
    least one radar estimate exists or enough of the region has been covered.
    Success is the first dispatchable plan.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    sim_config = sim_config or SimConfig()
    t_max = sim_config.t_max_s if t_max is None else t_max
    radars = generate_scenario(config) if radars is None else list(radars)
    state = SimState(radars, config, mission, sim_config, initial_history)
    if t_max <= 0.0:
        return MissionOutcome(False, math.inf, None, state.event_log,
                              _summary(state))
    queues = None
    if mode == "lawnmower":
        queues = [list(q) for q in
                  lawnmower_plan(config.region, config.n_agents, config)]

    state.record_history()
    found, t_found = False, math.inf
    _planning_round(state, weights, mode, queues)
    if _hp_ready(state) and _hp_attempt(state).dispatchable:
        found, t_found = True, state.clock
    while not found and state.clock < t_max - 1e-9:
        step(state, sim_config.dt_s)
        if mode == "lawnmower":
            # Arrived agents roll straight on to their next sweep waypoint.
            _lawnmower_advance(state, queues)
        if _round_due(state):
            _planning_round(state, weights, mode, queues)
            if _hp_ready(state) and _hp_attempt(state).dispatchable:
                found, t_found = True, state.clock
    state.log({
        "type": "outcome", "t": state.clock, "found": found,
        "t_found": t_found if math.isfinite(t_found) else None,
    })
    return MissionOutcome(found, t_found, state.latest_plan, state.event_log,
                          _summary(state))


def _summary(state: SimState) -> dict:
    return {
        "clock": state.clock,
        "n_measurements": state.n_measurements,
        "n_initialized": state.store.n_initialized(),
        "n_tracked": state.store.n_tracked(),
        "n_rounds": state.n_rounds,
        "n_hp_attempts": state.n_hp_attempts,
        "coverage": state.coverage(),
        "history_points": len(state.history.points),
    }

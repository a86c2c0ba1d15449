"""Cooperative radar scouting: localize emitters, then route around them.

A fleet of expendable scouts explores a contested region, intercepting
radar emissions and fusing them into emitter estimates, until a
high-priority aircraft can be routed through with a bounded (or
confidently bounded) probability of detection.
"""

from .core import (
    BEST_WEIGHTS,
    DEFAULT_DISPATCH_GATE,
    AgentState,
    KinematicLimits,
    KnownAgentParams,
    MissionSpec,
    NoiseModel,
    PlannerWeights,
    Position2,
    Region,
    ScenarioConfig,
    generate_scenario,
)
from .bspline import BSplineTrajectory, fit_to_path, retime
from .estimator import RadarEstimate, TrackStore
from .hp_planner import (
    HpPlannerConfig,
    PlanResult,
    plan_deterministic,
    plan_uncertain,
)
from .lp_planner import PathHistory, lawnmower_plan, plan_waypoints
from .pd_uncertainty import KnownParamBelief, PdBelief, UnknownPrior
from .radar import RadarTruth, pd_field, pd_overall_truth
from .roadmap import RoadmapGraph, build_generalized_diagram, build_weighted_diagram
from .sim import MissionOutcome, SimConfig, run_mission

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "BEST_WEIGHTS",
    "BSplineTrajectory",
    "DEFAULT_DISPATCH_GATE",
    "HpPlannerConfig",
    "KinematicLimits",
    "KnownAgentParams",
    "KnownParamBelief",
    "MissionOutcome",
    "MissionSpec",
    "NoiseModel",
    "PathHistory",
    "PdBelief",
    "PlanResult",
    "PlannerWeights",
    "Position2",
    "RadarEstimate",
    "RadarTruth",
    "Region",
    "RoadmapGraph",
    "ScenarioConfig",
    "SimConfig",
    "TrackStore",
    "UnknownPrior",
    "build_generalized_diagram",
    "build_weighted_diagram",
    "fit_to_path",
    "generate_scenario",
    "lawnmower_plan",
    "pd_field",
    "pd_overall_truth",
    "plan_deterministic",
    "plan_uncertain",
    "plan_waypoints",
    "retime",
    "run_mission",
]

"""Shared geometry, configuration, and kinematics primitives.

Everything downstream (physics, estimation, planning, simulation) consumes
these types.  Scenario generation is a pure function of the config and its
seed so that every experiment can be replayed from a manifest.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field, asdict, replace

import numpy as np

TWO_PI = 2.0 * math.pi

# Dispatch gate default: strictly below the uninformative 0.5 prior so that a
# point with no intercept evidence always blocks dispatch, while any nearby
# evidence lowers the posterior below the gate.
DEFAULT_DISPATCH_GATE = 0.5 - 1e-3


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    if value <= 0.0:
        raise ValueError("dB conversion needs a positive value")
    return 10.0 * math.log10(value)


def wrap_angle(theta):
    """Wrap an angle (scalar or array, radians) into (-pi, pi]."""
    arr = np.asarray(theta, dtype=float)
    wrapped = np.remainder(arr + math.pi, TWO_PI) - math.pi
    wrapped = np.where(wrapped == -math.pi, math.pi, wrapped)
    if np.isscalar(theta) or arr.ndim == 0:
        return float(wrapped)
    return wrapped


def substream(seed: int, label: str) -> np.random.Generator:
    """Independent RNG stream derived from a scenario seed and a purpose label."""
    tag = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(tag)]))


@dataclass(frozen=True)
class Position2:
    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @staticmethod
    def from_array(arr) -> "Position2":
        a = np.asarray(arr, dtype=float).reshape(2)
        return Position2(float(a[0]), float(a[1]))

    def distance_to(self, other: "Position2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("position components must be finite")


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangular operating area."""

    lower: Position2
    upper: Position2

    def __post_init__(self):
        if not (self.lower.x < self.upper.x and self.lower.y < self.upper.y):
            raise ValueError("region must have positive width and height")

    @property
    def width(self) -> float:
        return self.upper.x - self.lower.x

    @property
    def height(self) -> float:
        return self.upper.y - self.lower.y

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def corners(self) -> np.ndarray:
        lx, ly = self.lower.x, self.lower.y
        ux, uy = self.upper.x, self.upper.y
        return np.array([[lx, ly], [ux, ly], [ux, uy], [lx, uy]], dtype=float)

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower.as_array() + self.upper.as_array())

    def contains(self, points, slack: float = 0.0):
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        pts = np.atleast_2d(pts)
        ok = (
            (pts[:, 0] >= self.lower.x - slack)
            & (pts[:, 0] <= self.upper.x + slack)
            & (pts[:, 1] >= self.lower.y - slack)
            & (pts[:, 1] <= self.upper.y + slack)
        )
        return bool(ok[0]) if scalar else ok

    def clamp(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        lo = self.lower.as_array()
        hi = self.upper.as_array()
        return np.clip(pts, lo, hi)

    def grid(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cell-center lattice: (n, n, 2) points plus the 1-D axes."""
        xs = self.lower.x + (np.arange(n) + 0.5) * (self.width / n)
        ys = self.lower.y + (np.arange(n) + 0.5) * (self.height / n)
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        return np.stack([gx, gy], axis=-1), xs, ys


@dataclass(frozen=True)
class KinematicLimits:
    v_lb: float = 100.0
    v_ub: float = 134.0
    u_lb: float = -5.0
    u_ub: float = 5.0
    kappa_ub: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.v_lb < self.v_ub):
            raise ValueError("need 0 < v_lb < v_ub")
        if not (self.u_lb < 0.0 < self.u_ub):
            raise ValueError("turn-rate interval must straddle zero")
        if self.kappa_ub <= 0.0:
            raise ValueError("curvature bound must be positive")


@dataclass(frozen=True)
class AgentState:
    position: Position2
    heading: float
    speed: float

    def __post_init__(self):
        if self.speed < 0.0:
            raise ValueError("speed must be non-negative")
        object.__setattr__(self, "heading", wrap_angle(self.heading))


def unicycle_step(state: AgentState, turn_rate: float, dt: float) -> AgentState:
    """Advance constant-speed unicycle kinematics by dt.

    Uses the exact constant-turn-rate arc (falls back to a straight step as
    the turn rate vanishes), so refinement in dt does not change the path.
    """
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    v, th = state.speed, state.heading
    x, y = state.position.x, state.position.y
    if abs(turn_rate) * dt < 1e-12:
        nx = x + v * dt * math.cos(th)
        ny = y + v * dt * math.sin(th)
        nth = th + turn_rate * dt
    else:
        nth = th + turn_rate * dt
        r = v / turn_rate
        nx = x + r * (math.sin(nth) - math.sin(th))
        ny = y - r * (math.cos(nth) - math.cos(th))
    return AgentState(Position2(nx, ny), wrap_angle(nth), v)


@dataclass(frozen=True)
class MissionSpec:
    start: Position2
    goal: Position2
    pd_threshold: float = 0.15
    epsilon: float = 0.9
    dispatch_gate: float = DEFAULT_DISPATCH_GATE
    d_max: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.pd_threshold < 1.0):
            raise ValueError("pd_threshold must lie in (0, 1)")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if self.d_max < 0.0:
            raise ValueError("d_max must be non-negative")

    @staticmethod
    def for_region(
        region: Region,
        start: Position2,
        goal: Position2,
        pd_threshold: float = 0.15,
        epsilon: float = 0.9,
        dispatch_gate: float = DEFAULT_DISPATCH_GATE,
    ) -> "MissionSpec":
        if not (region.contains(start.as_array()) and region.contains(goal.as_array())):
            raise ValueError("start and goal must lie inside the region")
        d_max = float(np.linalg.norm(region.corners() - goal.as_array(), axis=1).max())
        return MissionSpec(start, goal, pd_threshold, epsilon, dispatch_gate, d_max)


@dataclass(frozen=True)
class PlannerWeights:
    """Convex weights for the scout objective (explore, localize, goal-seek)."""

    alpha_e: float
    alpha_u: float
    alpha_s: float

    def __post_init__(self):
        for a in (self.alpha_e, self.alpha_u, self.alpha_s):
            if a < 0.0:
                raise ValueError("weights must be non-negative")
        total = self.alpha_e + self.alpha_u + self.alpha_s
        if abs(total - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha_e, self.alpha_u, self.alpha_s)


BEST_WEIGHTS = PlannerWeights(0.25, 0.667, 0.083)


@dataclass(frozen=True)
class RadarTruth:
    """Ground-truth radar site; gains and loss stored in linear scale."""

    position: Position2
    p_t_w: float
    g_t: float
    g_r: float
    wavelength_m: float
    pulse_width_s: float
    system_temp_k: float
    loss: float
    p_fa: float

    def __post_init__(self):
        for name in ("p_t_w", "g_t", "g_r", "wavelength_m", "pulse_width_s",
                     "system_temp_k", "loss"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if not (0.0 < self.p_fa < 1.0):
            raise ValueError("p_fa must lie in (0, 1)")


@dataclass(frozen=True)
class KnownAgentParams:
    rcs_m2: float
    position: Position2
    g_i: float = 1.0

    def __post_init__(self):
        if self.rcs_m2 <= 0.0:
            raise ValueError("radar cross-section must be positive")
        if self.g_i <= 0.0:
            raise ValueError("intercept gain must be positive")


@dataclass(frozen=True)
class NoiseModel:
    sigma_power_w: float
    sigma_angle_rad: float

    def __post_init__(self):
        if self.sigma_power_w <= 0.0 or self.sigma_angle_rad <= 0.0:
            raise ValueError("noise standard deviations must be positive")

    def covariance(self) -> np.ndarray:
        return np.diag([self.sigma_power_w**2, self.sigma_angle_rad**2])


@dataclass(frozen=True)
class Measurement:
    power_w: float
    angle_rad: float
    location: Position2
    agent_id: int
    radar_id: int
    time_s: float

    def __post_init__(self):
        object.__setattr__(self, "angle_rad", wrap_angle(self.angle_rad))

    def z(self) -> np.ndarray:
        return np.array([self.power_w, self.angle_rad], dtype=float)


def _default_region() -> Region:
    return Region(Position2(0.0, 0.0), Position2(22000.0, 22000.0))


@dataclass(frozen=True)
class ScenarioConfig:
    """Scenario, sensing, and scout-fleet parameters.

    Angle/gain entries suffixed _db are stored in decibels and converted to
    linear scale exactly once, at scenario construction or via the *_linear
    properties; all physics consumes linear values.  intercept_discount is
    deliberately larger than the tabulated loss value; see README.
    """

    region: Region = field(default_factory=_default_region)
    radar_count: int = 13
    p_t_range_w: tuple[float, float] = (0.0, 20000.0)
    g_t_range_db: tuple[float, float] = (0.0, 20.0)
    g_r_db: float = 10.0
    loss_db: float = 0.0
    wavelength_m: float = 0.0999
    pulse_width_s: float = 1.1e-5
    system_temp_k: float = 745.0
    p_fa: float = 1e-4
    g_i_db: float = 1.0
    rcs_m2: float = 0.1
    sigma_power_w: float = 1e-6
    sigma_angle_rad: float = math.radians(2.0)
    n_agents: int = 10
    agent_speed: float = 50.0
    intercept_discount: float = 5e8
    d_cov: float = 1e14
    replan_horizon_s: float = 20.0
    history_period_s: float = 5.0
    prior_radar_prob: float = 0.5
    p_t_default_w: float = 1e4
    g_t_default_db: float = 10.0
    n_z_min: int = 5
    arrival_radius_m: float = 100.0
    lp_start_radius_m: float = 400.0
    seed: int = 0

    def __post_init__(self):
        if self.radar_count < 0:
            raise ValueError("radar_count must be non-negative")
        if self.p_t_range_w[0] > self.p_t_range_w[1]:
            raise ValueError("p_t range must be ordered")
        if self.g_t_range_db[0] > self.g_t_range_db[1]:
            raise ValueError("g_t range must be ordered")
        if self.n_agents < 1:
            raise ValueError("need at least one scout")
        if self.agent_speed <= 0.0:
            raise ValueError("scout speed must be positive")
        if not (0.0 < self.p_fa < 1.0):
            raise ValueError("p_fa must lie in (0, 1)")
        if self.intercept_discount <= 0.0:
            raise ValueError("intercept_discount must be positive")
        if not (0.0 < self.prior_radar_prob < 1.0):
            raise ValueError("prior_radar_prob must lie in (0, 1)")
        if self.n_z_min < 2:
            raise ValueError("initialization needs at least two measurements")

    @property
    def g_r(self) -> float:
        return db_to_linear(self.g_r_db)

    @property
    def loss(self) -> float:
        return db_to_linear(self.loss_db)

    @property
    def g_i(self) -> float:
        return db_to_linear(self.g_i_db)

    @property
    def g_t_default(self) -> float:
        return db_to_linear(self.g_t_default_db)

    def noise_model(self) -> NoiseModel:
        return NoiseModel(self.sigma_power_w, self.sigma_angle_rad)

    def agent_params(self, position: Position2 | None = None) -> KnownAgentParams:
        pos = position if position is not None else Position2(*self.region.center())
        return KnownAgentParams(self.rcs_m2, pos, self.g_i)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["region"] = {
            "lower": [self.region.lower.x, self.region.lower.y],
            "upper": [self.region.upper.x, self.region.upper.y],
        }
        d["p_t_range_w"] = list(self.p_t_range_w)
        d["g_t_range_db"] = list(self.g_t_range_db)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ScenarioConfig":
        d = dict(d)
        reg = d.pop("region")
        region = Region(Position2(*reg["lower"]), Position2(*reg["upper"]))
        d["p_t_range_w"] = tuple(d["p_t_range_w"])
        d["g_t_range_db"] = tuple(d["g_t_range_db"])
        return ScenarioConfig(region=region, **d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ScenarioConfig":
        return ScenarioConfig.from_dict(json.loads(text))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)


def generate_scenario(config: ScenarioConfig) -> list[RadarTruth]:
    """Draw the ground-truth radar set for a config (deterministic in the seed).

    Positions are uniform over the region; transmit power is uniform over its
    range in Watts; transmit gain is uniform over its range in dB and stored
    linearly.  Receiver-side parameters are the configured constants.
    """
    rng = substream(config.seed, "scenario")
    region = config.region
    radars = []
    for _ in range(config.radar_count):
        x = rng.uniform(region.lower.x, region.upper.x)
        y = rng.uniform(region.lower.y, region.upper.y)
        p_t = rng.uniform(*config.p_t_range_w)
        g_t_db = rng.uniform(*config.g_t_range_db)
        radars.append(
            RadarTruth(
                position=Position2(x, y),
                p_t_w=p_t,
                g_t=db_to_linear(g_t_db),
                g_r=config.g_r,
                wavelength_m=config.wavelength_m,
                pulse_width_s=config.pulse_width_s,
                system_temp_k=config.system_temp_k,
                loss=config.loss,
                p_fa=config.p_fa,
            )
        )
    return radars

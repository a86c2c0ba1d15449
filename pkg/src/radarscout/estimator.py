"""Radar localization from passive (power, bearing) intercepts.

Each track estimates a 3-state radar description: planar position plus
effective radiated power.  Tracks buffer raw measurements until a batch
nonlinear least-squares fit is well conditioned, then switch to recursive
extended Kalman updates.  Association is by emitter identity, which the
receivers recover from the waveform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    Measurement,
    NoiseModel,
    Position2,
    Region,
    ScenarioConfig,
    wrap_angle,
)

_FOUR_PI_SQ = (4.0 * math.pi) ** 2

# Batch fits with nearly collinear sightlines produce wildly elongated
# covariances; past this condition number the fit is deferred instead.
CONDITION_LIMIT = 1e7

_PE_FLOOR = 1e-3  # W; keeps the power state positive during iteration


@dataclass
class RadarEstimate:
    """Filtered radar description: state (x, y, erp) and its covariance."""

    radar_id: int
    state: np.ndarray        # (3,)
    covariance: np.ndarray   # (3, 3)
    n_measurements: int = 0
    time_s: float = 0.0

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float).reshape(3)
        self.covariance = np.asarray(self.covariance, dtype=float).reshape(3, 3)

    @property
    def position(self) -> Position2:
        return Position2(float(self.state[0]), float(self.state[1]))

    @property
    def erp_w(self) -> float:
        return float(self.state[2])

    def position_array(self) -> np.ndarray:
        return self.state[:2].copy()

    def to_dict(self) -> dict:
        return {
            "radar_id": self.radar_id,
            "state": self.state.tolist(),
            "covariance": self.covariance.tolist(),
            "n_measurements": self.n_measurements,
            "time_s": self.time_s,
        }

    @staticmethod
    def from_dict(d: dict) -> "RadarEstimate":
        return RadarEstimate(
            radar_id=int(d["radar_id"]),
            state=np.asarray(d["state"], dtype=float),
            covariance=np.asarray(d["covariance"], dtype=float),
            n_measurements=int(d["n_measurements"]),
            time_s=float(d["time_s"]),
        )


def predict_measurement(
    state: np.ndarray, agent_xy: np.ndarray, g_i: float, wavelength_m: float
) -> np.ndarray:
    """Expected (power, bearing) of a radar state seen from agent_xy."""
    dx = state[0] - agent_xy[0]
    dy = state[1] - agent_xy[1]
    r_sq = dx * dx + dy * dy
    if r_sq <= 0.0:
        raise ValueError("estimate coincides with the observer")
    power = state[2] * g_i * wavelength_m**2 / (_FOUR_PI_SQ * r_sq)
    return np.array([power, math.atan2(dy, dx)])


def measurement_jacobian(
    state: np.ndarray, agent_xy: np.ndarray, g_i: float, wavelength_m: float
) -> np.ndarray:
    """Jacobian of (power, bearing) with respect to (x, y, erp): shape (2, 3)."""
    dx = state[0] - agent_xy[0]
    dy = state[1] - agent_xy[1]
    r_sq = dx * dx + dy * dy
    if r_sq <= 0.0:
        raise ValueError("estimate coincides with the observer")
    per_watt = g_i * wavelength_m**2 / (_FOUR_PI_SQ * r_sq)
    power = state[2] * per_watt
    return np.array(
        [
            [-2.0 * power * dx / r_sq, -2.0 * power * dy / r_sq, per_watt],
            [-dy / r_sq, dx / r_sq, 0.0],
        ]
    )


def _whitened_residuals(
    theta: np.ndarray,
    agents: np.ndarray,
    z: np.ndarray,
    sig_p: float,
    sig_a: float,
    g_i: float,
    wavelength_m: float,
    with_jacobian: bool = False,
):
    """Stacked residuals (and optionally Jacobian) scaled by 1/sigma."""
    d = theta[:2][None, :] - agents
    r_sq = np.maximum(d[:, 0] ** 2 + d[:, 1] ** 2, 1e-6)
    per_watt = g_i * wavelength_m**2 / (_FOUR_PI_SQ * r_sq)
    power = theta[2] * per_watt
    bearing = np.arctan2(d[:, 1], d[:, 0])
    res = np.empty(2 * agents.shape[0])
    res[0::2] = (z[:, 0] - power) / sig_p
    res[1::2] = wrap_angle(z[:, 1] - bearing) / sig_a
    if not with_jacobian:
        return res
    J = np.zeros((2 * agents.shape[0], 3))
    J[0::2, 0] = -2.0 * power * d[:, 0] / r_sq / sig_p
    J[0::2, 1] = -2.0 * power * d[:, 1] / r_sq / sig_p
    J[0::2, 2] = per_watt / sig_p
    J[1::2, 0] = -d[:, 1] / r_sq / sig_a
    J[1::2, 1] = d[:, 0] / r_sq / sig_a
    return res, J


def _bearing_intersections(agents: np.ndarray, angles: np.ndarray,
                           region: Region) -> np.ndarray | None:
    """Pairwise ray intersections of the bearing sightlines, pruned to the
    forward half-lines and a loosely inflated region; None if none survive."""
    n = agents.shape[0]
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    pts = []
    slack = 0.5 * region.diagonal
    for i in range(n):
        for j in range(i + 1, n):
            det = dirs[i, 0] * dirs[j, 1] - dirs[i, 1] * dirs[j, 0]
            if abs(det) < 1e-6:
                continue
            rhs = agents[j] - agents[i]
            t_i = (rhs[0] * dirs[j, 1] - rhs[1] * dirs[j, 0]) / det
            t_j = (rhs[0] * dirs[i, 1] - rhs[1] * dirs[i, 0]) / det
            if t_i <= 0.0 or t_j <= 0.0:
                continue
            p = agents[i] + t_i * dirs[i]
            if region.contains(p, slack=slack):
                pts.append(p)
            if len(pts) >= 200:
                break
        if len(pts) >= 200:
            break
    if not pts:
        return None
    return np.median(np.asarray(pts), axis=0)


def _erp_from_position(pos: np.ndarray, agents: np.ndarray, powers: np.ndarray,
                       g_i: float, wavelength_m: float) -> float:
    """Least-squares radiated power given a candidate position."""
    d = pos[None, :] - agents
    r_sq = np.maximum(d[:, 0] ** 2 + d[:, 1] ** 2, 1e-6)
    per_watt = g_i * wavelength_m**2 / (_FOUR_PI_SQ * r_sq)
    denom = float(per_watt @ per_watt)
    if denom <= 0.0:
        return _PE_FLOOR
    return max(float(per_watt @ powers) / denom, _PE_FLOOR)


def _seed_guesses(agents: np.ndarray, z: np.ndarray,
                  config: ScenarioConfig) -> list[np.ndarray]:
    """Initial iterates: bearing triangulation, power ranging, region center."""
    g_i, lam = config.g_i, config.wavelength_m
    seeds = []
    tri = _bearing_intersections(agents, z[:, 1], config.region)
    if tri is not None:
        seeds.append(tri)
    k = int(np.argmax(z[:, 0]))
    nominal_erp = config.p_t_default_w * config.g_t_default / config.loss
    s_max = max(float(z[k, 0]), 1e-12)
    r_guess = math.sqrt(nominal_erp * g_i * lam**2 / (_FOUR_PI_SQ * s_max))
    r_guess = min(r_guess, 2.0 * config.region.diagonal)
    seeds.append(
        agents[k] + r_guess * np.array([math.cos(z[k, 1]), math.sin(z[k, 1])])
    )
    seeds.append(config.region.center())
    out = []
    for pos in seeds:
        erp = _erp_from_position(pos, agents, z[:, 0], g_i, lam)
        out.append(np.array([pos[0], pos[1], erp]))
    return out


def _damped_gauss_newton(
    theta0: np.ndarray,
    agents: np.ndarray,
    z: np.ndarray,
    config: ScenarioConfig,
    max_iter: int = 60,
) -> tuple[np.ndarray, float]:
    sig_p, sig_a = config.sigma_power_w, config.sigma_angle_rad
    g_i, lam = config.g_i, config.wavelength_m
    theta = theta0.copy()
    res = _whitened_residuals(theta, agents, z, sig_p, sig_a, g_i, lam)
    cost = float(res @ res)
    damping = 1e-3
    scale = np.array([config.region.diagonal, config.region.diagonal,
                      max(theta[2], 1.0)])
    for _ in range(max_iter):
        res, J = _whitened_residuals(
            theta, agents, z, sig_p, sig_a, g_i, lam, with_jacobian=True
        )
        g = J.T @ res
        H = J.T @ J
        diag = np.maximum(np.diag(H), 1e-12)
        accepted = False
        step = np.zeros(3)
        for _ in range(30):
            try:
                step = np.linalg.solve(H + damping * np.diag(diag), g)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            cand = theta + step
            cand[2] = max(cand[2], _PE_FLOOR)
            r2 = _whitened_residuals(cand, agents, z, sig_p, sig_a, g_i, lam)
            c2 = float(r2 @ r2)
            if c2 < cost:
                theta, cost = cand, c2
                damping = max(damping / 10.0, 1e-12)
                accepted = True
                break
            damping *= 10.0
            if damping > 1e12:
                break
        if not accepted:
            break
        if np.all(np.abs(step) < 1e-9 * scale):
            break
    return theta, cost


def initialize_estimate(
    measurements: Sequence[Measurement], config: ScenarioConfig
) -> RadarEstimate | None:
    """Batch fit of a radar state to buffered measurements.

    Multi-start damped Gauss-Newton on the whitened residuals.  Returns None
    (defer, keep buffering) when the geometry is too degenerate to pin the
    state down: ill-conditioned normal equations or a fit that runs far
    outside the operating area.
    """
    if len(measurements) < max(config.n_z_min, 2):
        return None
    agents = np.array([[m.location.x, m.location.y] for m in measurements])
    z = np.array([[m.power_w, m.angle_rad] for m in measurements])
    best_theta, best_cost = None, math.inf
    for theta0 in _seed_guesses(agents, z, config):
        theta, cost = _damped_gauss_newton(theta0, agents, z, config)
        if cost < best_cost:
            best_theta, best_cost = theta, cost
    if best_theta is None or not math.isfinite(best_cost):
        return None
    if best_theta[2] <= 2.0 * _PE_FLOOR:
        return None
    slack = 0.5 * config.region.diagonal
    if not config.region.contains(best_theta[:2], slack=slack):
        return None
    _, J = _whitened_residuals(
        best_theta, agents, z, config.sigma_power_w, config.sigma_angle_rad,
        config.g_i, config.wavelength_m, with_jacobian=True,
    )
    H = J.T @ J
    d = 1.0 / np.sqrt(np.maximum(np.diag(H), 1e-300))
    cond = np.linalg.cond(H * d[:, None] * d[None, :])
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        return None
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return None
    cov = 0.5 * (cov + cov.T)
    return RadarEstimate(
        radar_id=measurements[0].radar_id,
        state=best_theta,
        covariance=cov,
        n_measurements=len(measurements),
        time_s=max(m.time_s for m in measurements),
    )


def _clamp_covariance(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and clip tiny negative eigenvalues from roundoff."""
    cov = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(cov)
    if w[0] < -1e-9 * max(abs(w[-1]), 1.0):
        raise np.linalg.LinAlgError("covariance lost positive definiteness")
    w = np.maximum(w, 0.0)
    return (v * w) @ v.T


def ekf_update(
    estimate: RadarEstimate,
    measurement: Measurement,
    noise: NoiseModel,
    g_i: float,
    wavelength_m: float,
) -> RadarEstimate:
    """One extended Kalman measurement update (static radar, no prediction)."""
    agent_xy = measurement.location.as_array()
    h = predict_measurement(estimate.state, agent_xy, g_i, wavelength_m)
    H = measurement_jacobian(estimate.state, agent_xy, g_i, wavelength_m)
    innov = measurement.z() - h
    innov[1] = wrap_angle(innov[1])
    S = H @ estimate.covariance @ H.T + noise.covariance()
    K = np.linalg.solve(S.T, (estimate.covariance @ H.T).T).T
    state = estimate.state + K @ innov
    state[2] = max(state[2], _PE_FLOOR)
    cov = _clamp_covariance((np.eye(3) - K @ H) @ estimate.covariance)
    return RadarEstimate(
        radar_id=estimate.radar_id,
        state=state,
        covariance=cov,
        n_measurements=estimate.n_measurements + 1,
        time_s=measurement.time_s,
    )


def posterior_covariance(
    estimate: RadarEstimate,
    point,
    noise: NoiseModel,
    g_i: float,
    wavelength_m: float,
) -> np.ndarray:
    """Covariance after a hypothetical measurement from one vantage point.

    The update never consults the measured values, so planners can evaluate
    it for places no scout has been yet.
    """
    p = np.asarray(point, dtype=float).reshape(2)
    H = measurement_jacobian(estimate.state, p, g_i, wavelength_m)
    S = H @ estimate.covariance @ H.T + noise.covariance()
    K = np.linalg.solve(S.T, (estimate.covariance @ H.T).T).T
    return _clamp_covariance((np.eye(3) - K @ H) @ estimate.covariance)


def posterior_det_batch(
    estimate: RadarEstimate,
    points: np.ndarray,
    noise: NoiseModel,
    g_i: float,
    wavelength_m: float,
) -> np.ndarray:
    """Determinant of the covariance after a hypothetical update from each point.

    The Kalman gain depends only on geometry, not on the measured values, so
    the shrink a future vantage point buys can be scored before going there.
    Vectorized over an (n, 2) array of candidate observer positions.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = estimate.state[:2][None, :] - pts
    r_sq = np.maximum(d[:, 0] ** 2 + d[:, 1] ** 2, 1e-6)
    per_watt = g_i * wavelength_m**2 / (_FOUR_PI_SQ * r_sq)
    power = estimate.state[2] * per_watt
    n = pts.shape[0]
    H = np.zeros((n, 2, 3))
    H[:, 0, 0] = -2.0 * power * d[:, 0] / r_sq
    H[:, 0, 1] = -2.0 * power * d[:, 1] / r_sq
    H[:, 0, 2] = per_watt
    H[:, 1, 0] = -d[:, 1] / r_sq
    H[:, 1, 1] = d[:, 0] / r_sq
    cov = estimate.covariance
    PHt = np.einsum("ij,njk->nik", cov, np.swapaxes(H, 1, 2))
    S = np.einsum("nij,jk,nlk->nil", H, cov, H) + noise.covariance()[None, :, :]
    K = np.einsum("nij,njk->nik", PHt, np.linalg.inv(S))
    post = (np.eye(3)[None, :, :] - np.einsum("nij,njk->nik", K, H)) @ cov
    post = 0.5 * (post + np.swapaxes(post, 1, 2))
    return np.linalg.det(post)


@dataclass
class Track:
    radar_id: int
    measurements: list[Measurement] = field(default_factory=list)
    estimate: RadarEstimate | None = None


class TrackStore:
    """Shared measurement-to-estimate pipeline for the whole scout fleet.

    Buffers per-emitter measurements until the batch initializer succeeds,
    then applies EKF updates measurement by measurement.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.tracks: dict[int, Track] = {}

    def add(self, measurement: Measurement) -> None:
        track = self.tracks.setdefault(measurement.radar_id,
                                       Track(measurement.radar_id))
        track.measurements.append(measurement)
        cfg = self.config
        if track.estimate is None:
            if len(track.measurements) >= cfg.n_z_min:
                track.estimate = initialize_estimate(track.measurements, cfg)
        else:
            track.estimate = ekf_update(
                track.estimate, measurement, cfg.noise_model(),
                cfg.g_i, cfg.wavelength_m,
            )

    def estimates(self) -> list[RadarEstimate]:
        out = [t.estimate for t in self.tracks.values() if t.estimate is not None]
        return sorted(out, key=lambda e: e.radar_id)

    def n_initialized(self) -> int:
        return sum(1 for t in self.tracks.values() if t.estimate is not None)

    def n_tracked(self) -> int:
        return len(self.tracks)

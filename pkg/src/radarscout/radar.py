"""Radar physics: intercepted emission power, detection SNR and probability,
noisy scout measurements, and the scout-side intercept model.

All gains are linear here; dB conversion happens once at config/scenario
construction.  Distances are meters, powers Watts, angles radians.
"""

from __future__ import annotations

import math

import numpy as np

from .core import (
    KnownAgentParams,
    Measurement,
    NoiseModel,
    Position2,
    RadarTruth,
    ScenarioConfig,
    wrap_angle,
)

BOLTZMANN = 1.380649e-23  # J/K

_FOUR_PI_SQ = (4.0 * math.pi) ** 2
_FOUR_PI_CU = (4.0 * math.pi) ** 3


def _dist_sq(a, b) -> float:
    dx = float(a[0]) - float(b[0])
    dy = float(a[1]) - float(b[1])
    return dx * dx + dy * dy


def erp(radar: RadarTruth) -> float:
    """Effective radiated power P_T * G_T / L of a radar site."""
    return radar.p_t_w * radar.g_t / radar.loss


def intercept_power(agent: KnownAgentParams, radar: RadarTruth) -> float:
    """One-way emission power a scout receives from a radar (Watts).

    Falls off with the square of range; proportional to the radar's effective
    radiated power and the scout's intercept gain.
    """
    r_sq = _dist_sq(agent.position.as_array(), radar.position.as_array())
    if r_sq <= 0.0:
        raise ValueError("agent and radar are co-located; range is zero")
    return erp(radar) * agent.g_i * radar.wavelength_m**2 / (_FOUR_PI_SQ * r_sq)


def detection_snr(agent: KnownAgentParams, radar: RadarTruth) -> float:
    """Radar-side detection SNR for a target with the agent's cross-section.

    Two-way propagation: falls off with the fourth power of range.
    """
    r_sq = _dist_sq(agent.position.as_array(), radar.position.as_array())
    if r_sq <= 0.0:
        raise ValueError("agent and radar are co-located; range is zero")
    num = (
        erp(radar)
        * radar.g_r
        * radar.wavelength_m**2
        * agent.rcs_m2
        * radar.pulse_width_s
    )
    den = (
        _FOUR_PI_CU
        * r_sq**2
        * BOLTZMANN
        * radar.system_temp_k
        * radar.loss
    )
    return num / den


def pd_single(snr: float, p_fa: float) -> float:
    """Detection probability of one radar given SNR and false-alarm rate."""
    if snr < 0.0:
        raise ValueError("snr must be non-negative")
    if not (0.0 < p_fa < 1.0):
        raise ValueError("p_fa must lie in (0, 1)")
    return math.exp(math.log(p_fa) / (snr + 1.0))


def pd_overall(pds) -> float:
    """Probability that at least one of several independent radars detects."""
    pds = np.asarray(pds, dtype=float)
    if pds.size == 0:
        return 0.0
    if np.any((pds < 0.0) | (pds > 1.0)):
        raise ValueError("detection probabilities must lie in [0, 1]")
    return float(1.0 - np.prod(1.0 - pds))


def pd_overall_truth(agent: KnownAgentParams, radars: list[RadarTruth]) -> float:
    """Overall detection probability against a list of ground-truth radars."""
    return pd_overall([pd_single(detection_snr(agent, r), r.p_fa) for r in radars])


def pd_field(points, radars: list[RadarTruth], rcs_m2: float) -> np.ndarray:
    """Vectorized ground-truth overall detection probability at many points.

    points: (..., 2) array of positions; returns matching-shape probabilities.
    """
    pts = np.asarray(points, dtype=float)
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, 2)
    log_miss = np.zeros(flat.shape[0])
    for r in radars:
        d_sq = np.maximum(_dist_sq_vec(flat, r.position.as_array()), 1e-12)
        num = erp(r) * r.g_r * r.wavelength_m**2 * rcs_m2 * r.pulse_width_s
        den = _FOUR_PI_CU * d_sq**2 * BOLTZMANN * r.system_temp_k * r.loss
        snr = num / den
        pd = np.exp(math.log(r.p_fa) / (snr + 1.0))
        log_miss += np.log1p(-np.minimum(pd, 1.0 - 1e-16))
    return (1.0 - np.exp(log_miss)).reshape(shape)


def _dist_sq_vec(points: np.ndarray, site: np.ndarray) -> np.ndarray:
    d = points - site[None, :]
    return d[:, 0] ** 2 + d[:, 1] ** 2


def sample_measurement(
    agent: KnownAgentParams,
    radar: RadarTruth,
    noise: NoiseModel,
    rng: np.random.Generator,
    agent_id: int = 0,
    radar_id: int = 0,
    time_s: float = 0.0,
) -> Measurement:
    """Draw one noisy (power, bearing) measurement of a radar from a scout.

    Bearing is the full-quadrant angle from the scout to the radar; both
    channels get independent Gaussian noise, and the bearing is re-wrapped.
    """
    a = agent.position.as_array()
    r = radar.position.as_array()
    power = intercept_power(agent, radar) + rng.normal(0.0, noise.sigma_power_w)
    angle = math.atan2(r[1] - a[1], r[0] - a[0]) + rng.normal(
        0.0, noise.sigma_angle_rad
    )
    return Measurement(
        power_w=float(power),
        angle_rad=wrap_angle(angle),
        location=agent.position,
        agent_id=agent_id,
        radar_id=radar_id,
        time_s=time_s,
    )


# ---------------------------------------------------------------------------
# Scout-side intercept model (drives exploration and radar discovery).
# ---------------------------------------------------------------------------


def intercept_snr(
    distance_m,
    config: ScenarioConfig,
    p_t_w: float | None = None,
    g_t: float | None = None,
):
    """Scout receiver SNR on a radar's emissions at the given range.

    Defaults to the configured nominal transmitter (p_t_default_w,
    g_t_default_db) for reasoning about radars that have not been found yet;
    pass explicit linear p_t_w/g_t to evaluate a known transmitter.  The
    intercept_discount divides the SNR.
    """
    p_t = config.p_t_default_w if p_t_w is None else p_t_w
    g = config.g_t_default if g_t is None else g_t
    d_sq = np.square(np.asarray(distance_m, dtype=float))
    num = p_t * g * config.g_i * config.wavelength_m**2 * config.pulse_width_s
    den = (
        _FOUR_PI_SQ
        * np.maximum(d_sq, 1e-12)
        * BOLTZMANN
        * config.system_temp_k
        * config.loss
        * config.intercept_discount
    )
    return num / den


def intercept_probability(
    distance_m,
    config: ScenarioConfig,
    p_t_w: float | None = None,
    g_t: float | None = None,
):
    """Per-tick probability that a scout intercepts an emission at this range.

    Approaches 1 at zero range and decays to p_fa as range (or the discount)
    grows: with no signal the receiver still false-alarms at its threshold.
    """
    snr = intercept_snr(distance_m, config, p_t_w=p_t_w, g_t=g_t)
    p = np.exp(math.log(config.p_fa) / (snr + 1.0))
    if np.isscalar(distance_m):
        return float(p)
    return p


def intercept_probability_true(
    agent_pos, radar: RadarTruth, config: ScenarioConfig
):
    """Intercept probability using the radar's true transmitter parameters."""
    d = float(np.linalg.norm(np.asarray(agent_pos, dtype=float)
                             - radar.position.as_array()))
    return intercept_probability(d, config, p_t_w=radar.p_t_w, g_t=radar.g_t)


def intercept_log_evidence(distance_m, config: ScenarioConfig) -> np.ndarray:
    """Per-history-point log evidence against an undiscovered radar.

    ln((1 - p_fa) / (1 - P_int(d))) >= 0: how much one silent visit at range d
    argues that no nominal radar sits at the evaluated point.  Vectorized.
    """
    p = intercept_probability(distance_m, config)
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = math.log1p(-config.p_fa) - np.log1p(-np.minimum(p, 1.0))
    return out

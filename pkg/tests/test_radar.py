import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from radarscout.core import (
    KnownAgentParams,
    Position2,
    RadarTruth,
    ScenarioConfig,
    db_to_linear,
)
from radarscout.radar import (
    BOLTZMANN,
    detection_snr,
    erp,
    intercept_log_evidence,
    intercept_power,
    intercept_probability,
    intercept_probability_true,
    intercept_snr,
    pd_field,
    pd_overall,
    pd_overall_truth,
    pd_single,
    sample_measurement,
)


def make_radar(x=0.0, y=0.0, p_t=20000.0, g_t_db=20.0):
    cfg = ScenarioConfig()
    return RadarTruth(
        position=Position2(x, y),
        p_t_w=p_t,
        g_t=db_to_linear(g_t_db),
        g_r=cfg.g_r,
        wavelength_m=cfg.wavelength_m,
        pulse_width_s=cfg.pulse_width_s,
        system_temp_k=cfg.system_temp_k,
        loss=cfg.loss,
        p_fa=cfg.p_fa,
    )


def test_erp_is_power_times_gain_over_loss():
    r = make_radar(p_t=20000.0, g_t_db=20.0)
    assert erp(r) == pytest.approx(20000.0 * 100.0 / 1.0, rel=1e-12)


def test_intercept_power_formula():
    # independent route: write the one-way budget out longhand
    r = make_radar()
    agent = KnownAgentParams(0.1, Position2(10000.0, 0.0), db_to_linear(1.0))
    expected = (erp(r) * agent.g_i * 0.0999**2
                / ((4.0 * math.pi) ** 2 * 10000.0**2))
    assert intercept_power(agent, r) == pytest.approx(expected, rel=1e-12)
    # frozen spot value guards against silent constant drift
    assert expected == pytest.approx(1.59126035963168e-06, rel=1e-9)
    with pytest.raises(ValueError):
        intercept_power(KnownAgentParams(0.1, Position2(0.0, 0.0)), r)


def test_detection_snr_formula_and_range_law():
    r = make_radar()
    agent = KnownAgentParams(0.1, Position2(8000.0, 6000.0))
    rng2 = 8000.0**2 + 6000.0**2
    expected = (erp(r) * r.g_r * r.wavelength_m**2 * 0.1 * r.pulse_width_s
                / ((4.0 * math.pi) ** 3 * rng2**2 * BOLTZMANN
                   * r.system_temp_k * r.loss))
    assert detection_snr(agent, r) == pytest.approx(expected, rel=1e-12)
    near = KnownAgentParams(0.1, Position2(5000.0, 0.0))
    far = KnownAgentParams(0.1, Position2(10000.0, 0.0))
    ratio = detection_snr(near, r) / detection_snr(far, r)
    assert ratio == pytest.approx(16.0, rel=1e-9)


def test_pd_single_limits():
    assert pd_single(0.0, 1e-4) == pytest.approx(1e-4, rel=1e-12)
    assert pd_single(1e9, 1e-4) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        pd_single(-0.1, 1e-4)
    with pytest.raises(ValueError):
        pd_single(1.0, 0.0)


@given(st.floats(0.0, 1e6), st.floats(0.0, 1e6))
def test_pd_single_monotone_in_snr(a, b):
    lo, hi = sorted((a, b))
    assert pd_single(lo, 1e-4) <= pd_single(hi, 1e-4) + 1e-15


@given(st.lists(st.floats(0.0, 1.0), max_size=8))
def test_pd_overall_vs_complement_product(pds):
    direct = 1.0 - math.prod(1.0 - p for p in pds) if pds else 0.0
    assert pd_overall(pds) == pytest.approx(direct, abs=1e-12)


def test_pd_overall_edge_cases():
    assert pd_overall([]) == 0.0
    assert pd_overall([1.0, 0.0]) == 1.0
    with pytest.raises(ValueError):
        pd_overall([1.2])


def test_pd_field_matches_scalar_route(radars0, base_config):
    pts = np.array([[1000.0, 2000.0], [11000.0, 11000.0], [21000.0, 500.0]])
    field = pd_field(pts, radars0, base_config.rcs_m2)
    for k, p in enumerate(pts):
        agent = KnownAgentParams(base_config.rcs_m2, Position2(*p))
        assert field[k] == pytest.approx(pd_overall_truth(agent, radars0),
                                         rel=1e-9)
    grid = pd_field(pts.reshape(3, 1, 2), radars0, base_config.rcs_m2)
    assert grid.shape == (3, 1)
    assert np.allclose(grid.ravel(), field)


def test_sample_measurement_noise_and_determinism(base_config):
    r = make_radar(x=1000.0, y=0.0)
    agent = KnownAgentParams(0.1, Position2(0.0, 0.0))
    noise = base_config.noise_model()
    z1 = sample_measurement(agent, r, noise, np.random.default_rng(7),
                            agent_id=0, radar_id=0, time_s=0.0)
    z2 = sample_measurement(agent, r, noise, np.random.default_rng(7),
                            agent_id=0, radar_id=0, time_s=0.0)
    assert z1.power_w == z2.power_w and z1.angle_rad == z2.angle_rad
    assert -math.pi < z1.angle_rad <= math.pi

    rng = np.random.default_rng(11)
    zs = [sample_measurement(agent, r, noise, rng, agent_id=0, radar_id=0,
                             time_s=float(k)) for k in range(4000)]
    powers = np.array([z.power_w for z in zs])
    angles = np.array([z.angle_rad for z in zs])
    assert powers.mean() == pytest.approx(intercept_power(agent, r),
                                          abs=4 * noise.sigma_power_w / 60.0)
    assert powers.std() == pytest.approx(noise.sigma_power_w, rel=0.1)
    assert angles.mean() == pytest.approx(0.0, abs=4 * noise.sigma_angle_rad / 60.0)


def test_intercept_snr_inverse_square(base_config):
    s1 = intercept_snr(3000.0, base_config)
    s2 = intercept_snr(6000.0, base_config)
    assert s1 / s2 == pytest.approx(4.0, rel=1e-9)
    # explicit transmitter overrides the nominal default
    strong = intercept_snr(3000.0, base_config, p_t_w=2e4, g_t=db_to_linear(20.0))
    assert strong > s1


def test_intercept_probability_limits(base_config):
    assert intercept_probability(1e9, base_config) == pytest.approx(
        base_config.p_fa, rel=1e-6)
    assert intercept_probability(1.0, base_config) == pytest.approx(1.0, abs=1e-3)
    r = make_radar(x=500.0, y=0.0)
    direct = intercept_probability(
        500.0, base_config, p_t_w=r.p_t_w, g_t=r.g_t)
    assert intercept_probability_true([0.0, 0.0], r, base_config) == pytest.approx(
        direct, rel=1e-12)


def test_intercept_log_evidence_sign(base_config):
    far = intercept_log_evidence(np.array([1e9]), base_config)
    assert far[0] == pytest.approx(0.0, abs=1e-9)
    near = intercept_log_evidence(np.array([200.0]), base_config)
    assert near[0] > 1.0
    d = np.array([500.0, 1000.0, 4000.0, 16000.0])
    ev = intercept_log_evidence(d, base_config)
    assert np.all(np.diff(ev) < 0.0)
    assert np.all(ev >= 0.0)

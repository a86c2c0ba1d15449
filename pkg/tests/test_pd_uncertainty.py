import math

import numpy as np
import pytest
from scipy import stats

from radarscout.core import Position2, ScenarioConfig
from radarscout.estimator import RadarEstimate
from radarscout.pd_uncertainty import (
    KnownParamBelief,
    PFA_LOG_HALF_DECADE,
    PdBelief,
    UnknownPrior,
    gaussian_cdf,
    pd_below_zscore,
    pd_belief,
    pd_belief_batch,
    pd_jacobians,
    per_radar_zscores,
    prob_pd_below,
)
from radarscout.radar import BOLTZMANN

_FOUR_PI_CU = (4.0 * math.pi) ** 3


def overall_pd_direct(point, rcs, prior_mean_rows, states):
    """Longhand detection chain, the reference route for every belief check.

    prior_mean_rows: (n, 5) rows (p_fa, g_r, wavelength, pulse width, temp);
    states: (n, 3) rows (x, y, erp).  Scalar in, scalar out.
    """
    miss = 1.0
    for (p_fa, g_r, lam, tau, temp), (x, y, erp) in zip(prior_mean_rows,
                                                        states):
        r_sq = (point[0] - x) ** 2 + (point[1] - y) ** 2
        snr = erp * g_r * lam**2 * rcs * tau / (
            _FOUR_PI_CU * r_sq**2 * BOLTZMANN * temp)
        miss *= 1.0 - math.exp(math.log(p_fa) / (snr + 1.0))
    return 1.0 - miss


def exact_prior(cfg: ScenarioConfig) -> UnknownPrior:
    return UnknownPrior(
        np.array([cfg.p_fa, cfg.g_r, cfg.wavelength_m, cfg.pulse_width_s,
                  cfg.system_temp_k]),
        np.zeros((5, 5)),
    )


def point_estimate(x, y, erp, rid=0, pos_sd=0.0, erp_rel_sd=0.0):
    cov = np.diag([pos_sd**2, pos_sd**2, (erp_rel_sd * erp) ** 2])
    return RadarEstimate(rid, np.array([x, y, erp]), cov)


def test_prior_from_config_layout(base_config):
    prior = UnknownPrior.from_config(base_config)
    assert prior.mean[0] == base_config.p_fa
    assert prior.mean[4] == base_config.system_temp_k
    sd = np.sqrt(np.diag(prior.covariance))
    assert sd[0] == pytest.approx(PFA_LOG_HALF_DECADE * base_config.p_fa)
    assert sd[1:] == pytest.approx(0.1 * prior.mean[1:])
    scaled = prior.scaled(4.0)
    assert np.allclose(scaled.covariance, 4.0 * prior.covariance)
    with pytest.raises(ValueError):
        UnknownPrior(prior.mean, -np.eye(5))
    with pytest.raises(ValueError):
        UnknownPrior(-prior.mean, np.eye(5))


def test_known_belief_recentering():
    b = KnownParamBelief.for_agent(0.1, Position2(100.0, 200.0))
    assert b.mean == pytest.approx([0.1, 100.0, 200.0])
    assert b.covariance[0, 0] == pytest.approx((0.01) ** 2)
    moved = b.at([5.0, -5.0])
    assert moved.mean == pytest.approx([0.1, 5.0, -5.0])
    assert np.array_equal(moved.covariance, b.covariance)
    with pytest.raises(ValueError):
        KnownParamBelief(np.array([-0.1, 0.0, 0.0]), np.zeros((3, 3)))


def test_zero_covariance_collapses_to_ground_truth(base_config):
    cfg = base_config
    prior = exact_prior(cfg)
    known = KnownParamBelief(np.array([cfg.rcs_m2, 4000.0, 2000.0]),
                             np.zeros((3, 3)))
    states = np.array([[9000.0, 5000.0, 8.0e5], [1000.0, 12000.0, 3.0e5]])
    estimates = [point_estimate(*s, rid=k) for k, s in enumerate(states)]
    belief = pd_belief(known, prior, estimates)
    direct = overall_pd_direct([4000.0, 2000.0], cfg.rcs_m2,
                               [prior.mean, prior.mean], states)
    assert belief.mean == pytest.approx(direct, rel=1e-9)
    assert belief.variance == 0.0
    assert prob_pd_below(belief, belief.mean + 1e-6) == 1.0
    assert prob_pd_below(belief, belief.mean - 1e-6) == 0.0


def test_no_estimates_means_no_modeled_risk(base_config):
    known = KnownParamBelief.for_agent(0.1, Position2(0.0, 0.0))
    mean, var = pd_belief_batch(np.zeros((4, 2)), known,
                                UnknownPrior.from_config(base_config), [])
    assert np.all(mean == 0.0) and np.all(var == 0.0)


def test_belief_rejects_coincident_evaluation(base_config):
    known = KnownParamBelief(np.array([0.1, 5000.0, 5000.0]), np.zeros((3, 3)))
    est = point_estimate(5000.0, 5000.0, 1e5)
    with pytest.raises(ValueError):
        pd_belief(known, exact_prior(base_config), [est])


def test_wrong_prior_count_rejected(base_config):
    known = KnownParamBelief.for_agent(0.1, Position2(0.0, 0.0))
    ests = [point_estimate(4000.0, 0.0, 1e5), point_estimate(0.0, 4000.0, 1e5)]
    with pytest.raises(ValueError):
        pd_belief_batch(np.zeros((1, 2)), known,
                        [exact_prior(base_config)], ests)


def test_jacobians_match_central_differences(base_config):
    cfg = base_config
    prior = UnknownPrior.from_config(cfg)
    known = KnownParamBelief.for_agent(cfg.rcs_m2, Position2(3000.0, 1500.0))
    estimates = [
        point_estimate(8000.0, 4000.0, 6.0e5, rid=0),
        point_estimate(2000.0, 9000.0, 2.0e5, rid=1),
    ]
    J_k, J_u, J_e = pd_jacobians(known, prior, estimates)

    def mean_at(known_mean, prior_rows, states):
        return overall_pd_direct(known_mean[1:3], known_mean[0], prior_rows,
                                 states)

    prior_rows = np.stack([prior.mean, prior.mean])
    states = np.stack([e.state for e in estimates])

    def check(analytic, base_vec, setter, steps):
        fd = np.zeros(base_vec.size)
        for i in range(base_vec.size):
            hi = base_vec.copy(); hi.flat[i] += steps.flat[i]
            lo = base_vec.copy(); lo.flat[i] -= steps.flat[i]
            fd[i] = (setter(hi) - setter(lo)) / (2.0 * steps.flat[i])
        scale = max(np.abs(analytic).max(), 1e-12)
        assert np.max(np.abs(analytic.ravel() - fd)) <= 1e-4 * scale

    check(J_k, known.mean.copy(),
          lambda v: mean_at(v, prior_rows, states),
          1e-5 * np.maximum(np.abs(known.mean), 1.0))
    check(J_u, prior_rows.copy(),
          lambda v: mean_at(known.mean, v.reshape(2, 5), states),
          1e-5 * np.abs(prior_rows))
    check(J_e, states.copy(),
          lambda v: mean_at(known.mean, prior_rows, v.reshape(2, 3)),
          np.broadcast_to(np.array([1e-2, 1e-2, 1.0]), (2, 3)).copy())


def test_linearization_against_monte_carlo(base_config):
    """Linearized detection-belief moments vs sampling, at mild spreads."""
    cfg = base_config
    rng = np.random.default_rng(99)
    n_draw = 100_000
    for trial in range(10):
        point = np.array([0.0, 0.0])
        n_radar = 2
        prior_mean = np.array([cfg.p_fa, cfg.g_r, cfg.wavelength_m,
                               cfg.pulse_width_s, cfg.system_temp_k])
        prior_sd = np.array([0.2 * cfg.p_fa, 0.03 * cfg.g_r,
                             0.01 * cfg.wavelength_m,
                             0.03 * cfg.pulse_width_s,
                             0.03 * cfg.system_temp_k])
        prior = UnknownPrior(prior_mean, np.diag(prior_sd**2))
        ang = rng.uniform(0.0, 2.0 * math.pi, size=n_radar)
        dist = rng.uniform(5000.0, 9000.0, size=n_radar)
        erp = rng.uniform(3.0e5, 2.0e6, size=n_radar)
        states = np.column_stack([dist * np.cos(ang), dist * np.sin(ang), erp])
        pos_sd, erp_rel = 60.0, 0.03
        estimates = [point_estimate(*s, rid=k, pos_sd=pos_sd,
                                    erp_rel_sd=erp_rel)
                     for k, s in enumerate(states)]
        known = KnownParamBelief(np.array([cfg.rcs_m2, *point]),
                                 np.diag([(0.02 * cfg.rcs_m2) ** 2, 0.0, 0.0]))

        mean_lin, var_lin = pd_belief_batch(point[None, :], known, prior,
                                            estimates)

        rcs_draw = cfg.rcs_m2 + 0.02 * cfg.rcs_m2 * rng.standard_normal(n_draw)
        recv = (prior_mean[None, None, :]
                + prior_sd[None, None, :]
                * rng.standard_normal((n_draw, n_radar, 5)))
        st = (states[None, :, :]
              + np.array([pos_sd, pos_sd, 1.0])[None, None, :]
              * np.array([1.0, 1.0, erp_rel])[None, None, :]
              * np.concatenate([np.ones((n_draw, n_radar, 2)),
                                states[None, :, 2:3]
                                * np.ones((n_draw, n_radar, 1))], axis=2)
              * rng.standard_normal((n_draw, n_radar, 3)))
        r_sq = ((point[0] - st[..., 0]) ** 2 + (point[1] - st[..., 1]) ** 2)
        p_fa_d = np.clip(recv[..., 0], 1e-12, 0.5)
        snr = (st[..., 2] * recv[..., 1] * recv[..., 2] ** 2
               * rcs_draw[:, None] * recv[..., 3]
               / (_FOUR_PI_CU * r_sq**2 * BOLTZMANN * recv[..., 4]))
        pd = np.exp(np.log(p_fa_d) / (snr + 1.0))
        overall = 1.0 - np.prod(1.0 - pd, axis=1)

        err_mean = abs(float(overall.mean()) - float(mean_lin[0]))
        assert err_mean < 0.01, (trial, err_mean)
        std_lin = math.sqrt(float(var_lin[0]))
        std_mc = float(overall.std())
        assert abs(std_lin - std_mc) <= 0.2 * std_mc, (trial, std_lin, std_mc)


def test_zscore_and_cdf_helpers():
    assert pd_below_zscore(0.1, 0.0, 0.15) == math.inf
    assert pd_below_zscore(0.2, 0.0, 0.15) == -math.inf
    z = pd_below_zscore(0.1, 0.0004, 0.15)
    assert z == pytest.approx((0.15 - 0.1) / 0.02)
    arr = pd_below_zscore(np.array([0.1, 0.2]), np.array([0.0004, 0.0]), 0.15)
    assert arr[0] == pytest.approx(2.5) and arr[1] == -math.inf
    zs = np.linspace(-4.0, 4.0, 17)
    assert np.allclose(gaussian_cdf(zs), stats.norm.cdf(zs), atol=1e-12)
    belief = PdBelief(0.1, 0.0004)
    assert prob_pd_below(belief, 0.15) == pytest.approx(
        stats.norm.cdf(2.5), rel=1e-9)
    with pytest.raises(ValueError):
        PdBelief(0.1, -1e-9)


def test_per_radar_zscores_single_radar_matches_overall(base_config):
    cfg = base_config
    prior = UnknownPrior.from_config(cfg)
    known = KnownParamBelief.for_agent(cfg.rcs_m2, Position2(0.0, 0.0))
    est = point_estimate(6000.0, 1000.0, 8.0e5, pos_sd=80.0, erp_rel_sd=0.05)
    pts = np.array([[0.0, 0.0], [3000.0, 500.0]])
    zs = per_radar_zscores(pts, known, prior, [est], threshold=0.15)
    assert zs.shape == (2, 1)
    mean, var = pd_belief_batch(pts, known, prior, [est])
    expect = pd_below_zscore(mean, var, 0.15)
    assert np.allclose(zs[:, 0], expect, rtol=1e-9)
    # nearer point has less safety margin
    assert zs[1, 0] < zs[0, 0]
    with pytest.raises(ValueError):
        per_radar_zscores(pts, known, prior, [], threshold=0.15)

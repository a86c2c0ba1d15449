"""First-order propagation of parameter uncertainty through detection risk.

Overall detection probability at an evaluation point depends on three
parameter groups: the evaluating aircraft's own (cross-section, position),
receiver-side radar parameters nobody measures directly (false-alarm rate,
receive gain, wavelength, pulse width, system temperature), and the per-radar
states the trackers estimate (position, radiated power).  Each group carries a
Gaussian belief; linearizing the detection map at the stacked means gives a
Gaussian belief over the detection probability itself, and from that the
chance that the true value sits below a threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Position2, ScenarioConfig
from .estimator import RadarEstimate
from .radar import BOLTZMANN

_FOUR_PI_CU = (4.0 * math.pi) ** 3
_SQRT2 = math.sqrt(2.0)

# Half a decade of false-alarm spread, linearized about the mean.
PFA_LOG_HALF_DECADE = 0.5 * math.log(10.0)


@dataclass(frozen=True)
class UnknownPrior:
    """Belief over receiver parameters shared by every radar.

    Order: (p_fa, g_r, wavelength_m, pulse_width_s, system_temp_k); gains
    linear.
    """

    mean: np.ndarray        # (5,)
    covariance: np.ndarray  # (5, 5)

    def __post_init__(self):
        object.__setattr__(self, "mean",
                           np.asarray(self.mean, dtype=float).reshape(5))
        object.__setattr__(self, "covariance",
                           np.asarray(self.covariance, dtype=float).reshape(5, 5))
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-12):
            raise ValueError("prior covariance must be symmetric")
        if np.linalg.eigvalsh(self.covariance)[0] < -1e-12:
            raise ValueError("prior covariance must be PSD")
        if np.any(self.mean <= 0.0):
            raise ValueError("prior means must be positive")

    @staticmethod
    def from_config(config: ScenarioConfig,
                    relative_sd: float = 0.1) -> "UnknownPrior":
        """Nominal receiver belief: configured means, relative-sd spreads.

        The false-alarm spread covers half a decade in log space, mapped to a
        linear standard deviation at the mean.
        """
        mean = np.array([
            config.p_fa,
            config.g_r,
            config.wavelength_m,
            config.pulse_width_s,
            config.system_temp_k,
        ])
        sd = relative_sd * mean
        sd[0] = PFA_LOG_HALF_DECADE * config.p_fa
        return UnknownPrior(mean, np.diag(sd**2))

    def scaled(self, factor: float) -> "UnknownPrior":
        return UnknownPrior(self.mean, self.covariance * factor)


@dataclass(frozen=True)
class KnownParamBelief:
    """Belief over the evaluating aircraft's own parameters.

    Order: (rcs_m2, x, y).  Position is usually known exactly; the
    cross-section carries a relative spread.
    """

    mean: np.ndarray        # (3,)
    covariance: np.ndarray  # (3, 3)

    def __post_init__(self):
        object.__setattr__(self, "mean",
                           np.asarray(self.mean, dtype=float).reshape(3))
        object.__setattr__(self, "covariance",
                           np.asarray(self.covariance, dtype=float).reshape(3, 3))
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-12):
            raise ValueError("belief covariance must be symmetric")
        if np.linalg.eigvalsh(self.covariance)[0] < -1e-12:
            raise ValueError("belief covariance must be PSD")
        if self.mean[0] <= 0.0:
            raise ValueError("cross-section must be positive")

    @staticmethod
    def for_agent(rcs_m2: float, position: Position2,
                  rcs_relative_sd: float = 0.1) -> "KnownParamBelief":
        mean = np.array([rcs_m2, position.x, position.y])
        return KnownParamBelief(
            mean, np.diag([(rcs_relative_sd * rcs_m2) ** 2, 0.0, 0.0])
        )

    def at(self, position) -> "KnownParamBelief":
        """Same belief, re-centered on a new evaluation position."""
        p = np.asarray(position, dtype=float).reshape(2)
        mean = np.array([self.mean[0], p[0], p[1]])
        return KnownParamBelief(mean, self.covariance)


@dataclass(frozen=True)
class PdBelief:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0.0:
            raise ValueError("variance must be non-negative")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def _normalize_priors(priors, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Accept one shared prior or a per-radar sequence; return stacked arrays."""
    if isinstance(priors, UnknownPrior):
        priors = [priors] * n
    if len(priors) != n:
        raise ValueError("need one receiver prior per radar estimate")
    means = np.stack([p.mean for p in priors])        # (n, 5)
    covs = np.stack([p.covariance for p in priors])   # (n, 5, 5)
    return means, covs


def _per_radar_terms(
    points: np.ndarray,
    rcs_m2: float,
    prior_means: np.ndarray,
    est_states: np.ndarray,
    loss: float,
):
    """Elementwise detection terms for (m, 2) points against n radars.

    Returns range-squared, SNR, per-radar detection probability, and the SNR
    sensitivity dpd_dsnr, each shaped (m, n); plus the displacement (m, n, 2)
    from each radar mean to each point.
    """
    p_fa = prior_means[:, 0][None, :]
    g_r = prior_means[:, 1][None, :]
    lam = prior_means[:, 2][None, :]
    tau = prior_means[:, 3][None, :]
    temp = prior_means[:, 4][None, :]
    erp = est_states[:, 2][None, :]
    delta = points[:, None, :] - est_states[None, :, :2]   # agent minus radar
    r_sq = np.maximum(delta[..., 0] ** 2 + delta[..., 1] ** 2, 1e-6)
    snr = (erp * g_r * lam**2 * rcs_m2 * tau) / (
        _FOUR_PI_CU * r_sq**2 * BOLTZMANN * temp * loss
    )
    pd = np.exp(np.log(p_fa) / (snr + 1.0))
    dpd_dsnr = pd * (-np.log(p_fa)) / (snr + 1.0) ** 2
    return delta, r_sq, snr, pd, dpd_dsnr


def _belief_arrays(
    points: np.ndarray,
    known: KnownParamBelief,
    priors,
    estimates: Sequence[RadarEstimate],
    loss: float,
):
    """PD mean and variance of the overall detection belief at many points."""
    m = points.shape[0]
    n = len(estimates)
    if n == 0:
        return np.zeros(m), np.zeros(m)
    prior_means, prior_covs = _normalize_priors(priors, n)
    est_states = np.stack([e.state for e in estimates])
    est_covs = np.stack([e.covariance for e in estimates])
    rcs = float(known.mean[0])
    delta, r_sq, snr, pd, dpd_dsnr = _per_radar_terms(
        points, rcs, prior_means, est_states, loss
    )
    one_minus = 1.0 - pd
    total_log = np.sum(np.log(np.maximum(one_minus, 1e-300)), axis=1)
    mean = 1.0 - np.exp(total_log)
    # Product over the other radars: d(overall)/d(pd_j).
    outer = np.exp(total_log[:, None] - np.log(np.maximum(one_minus, 1e-300)))

    p_fa = prior_means[:, 0][None, :]
    g_r = prior_means[:, 1][None, :]
    lam = prior_means[:, 2][None, :]
    tau = prior_means[:, 3][None, :]
    temp = prior_means[:, 4][None, :]
    erp = est_states[:, 2][None, :]

    chain = outer * dpd_dsnr                                  # (m, n)
    # Receiver block: (p_fa, g_r, wavelength, pulse width, system temp).
    J_u = np.empty((m, n, 5))
    J_u[..., 0] = outer * pd / (p_fa * (snr + 1.0))
    J_u[..., 1] = chain * snr / g_r
    J_u[..., 2] = chain * 2.0 * snr / lam
    J_u[..., 3] = chain * snr / tau
    J_u[..., 4] = chain * (-snr) / temp
    # Estimated block: (x_r, y_r, erp); range shortens as the radar nears.
    J_e = np.empty((m, n, 3))
    J_e[..., 0] = chain * 4.0 * snr * delta[..., 0] / r_sq
    J_e[..., 1] = chain * 4.0 * snr * delta[..., 1] / r_sq
    J_e[..., 2] = chain * snr / erp
    # Own block: (rcs, x, y); moving the agent is minus moving the radar.
    J_k = np.empty((m, 3))
    J_k[:, 0] = np.sum(chain * snr / rcs, axis=1)
    J_k[:, 1] = np.sum(-J_e[..., 0], axis=1)
    J_k[:, 2] = np.sum(-J_e[..., 1], axis=1)

    var = np.einsum("mi,ij,mj->m", J_k, known.covariance, J_k)
    var = var + np.einsum("mni,nij,mnj->m", J_u, prior_covs, J_u)
    var = var + np.einsum("mni,nij,mnj->m", J_e, est_covs, J_e)
    return mean, np.maximum(var, 0.0)


def pd_belief_batch(
    points,
    known: KnownParamBelief,
    priors,
    estimates: Sequence[RadarEstimate],
    loss: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized overall-PD belief: points (m, 2) -> (mean (m,), var (m,)).

    The known-parameter belief is re-centered on each evaluation point; its
    covariance applies unchanged.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return _belief_arrays(pts, known, priors, estimates, loss)


def pd_belief(
    known: KnownParamBelief,
    priors,
    estimates: Sequence[RadarEstimate],
    loss: float = 1.0,
) -> PdBelief:
    """Overall-PD belief at the known-parameter mean position."""
    point = known.mean[1:3][None, :]
    if estimates:
        est_pos = np.stack([e.state[:2] for e in estimates])
        d_sq = np.sum((est_pos - point) ** 2, axis=1)
        if np.any(d_sq <= 1e-6):
            raise ValueError("evaluation point coincides with a radar estimate")
    mean, var = _belief_arrays(point, known, priors, estimates, loss)
    return PdBelief(float(mean[0]), float(var[0]))


def pd_jacobians(
    known: KnownParamBelief,
    priors,
    estimates: Sequence[RadarEstimate],
    loss: float = 1.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row Jacobians of overall PD at the stacked means: (1x3, 1x5n, 1x3n)."""
    n = len(estimates)
    if n == 0:
        raise ValueError("need at least one radar estimate")
    point = known.mean[1:3][None, :]
    est_pos = np.stack([e.state[:2] for e in estimates])
    if np.any(np.sum((est_pos - point) ** 2, axis=1) <= 1e-6):
        raise ValueError("evaluation point coincides with a radar estimate")
    prior_means, _ = _normalize_priors(priors, n)
    est_states = np.stack([e.state for e in estimates])
    rcs = float(known.mean[0])
    delta, r_sq, snr, pd, dpd_dsnr = _per_radar_terms(
        point, rcs, prior_means, est_states, loss
    )
    one_minus = 1.0 - pd
    total_log = np.sum(np.log(np.maximum(one_minus, 1e-300)), axis=1)
    outer = np.exp(total_log[:, None] - np.log(np.maximum(one_minus, 1e-300)))
    chain = outer * dpd_dsnr
    p_fa = prior_means[:, 0][None, :]
    J_u = np.empty((1, n, 5))
    J_u[..., 0] = outer * pd / (p_fa * (snr + 1.0))
    J_u[..., 1] = chain * snr / prior_means[:, 1][None, :]
    J_u[..., 2] = chain * 2.0 * snr / prior_means[:, 2][None, :]
    J_u[..., 3] = chain * snr / prior_means[:, 3][None, :]
    J_u[..., 4] = chain * (-snr) / prior_means[:, 4][None, :]
    J_e = np.empty((1, n, 3))
    J_e[..., 0] = chain * 4.0 * snr * delta[..., 0] / r_sq
    J_e[..., 1] = chain * 4.0 * snr * delta[..., 1] / r_sq
    J_e[..., 2] = chain * snr / est_states[:, 2][None, :]
    J_k = np.array([
        float(np.sum(chain * snr / rcs)),
        float(np.sum(-J_e[..., 0])),
        float(np.sum(-J_e[..., 1])),
    ]).reshape(1, 3)
    return J_k, J_u.reshape(1, 5 * n), J_e.reshape(1, 3 * n)


def prob_pd_below(belief: PdBelief, threshold: float):
    """Chance that the true detection probability sits below the threshold."""
    if belief.variance == 0.0:
        return 1.0 if belief.mean <= threshold else 0.0
    z = (threshold - belief.mean) / math.sqrt(belief.variance)
    return 0.5 * (1.0 + math.erf(z / _SQRT2))


def pd_below_zscore(mean, variance, threshold: float):
    """Standardized margin (threshold - mean)/std; +/-inf when degenerate.

    Monotone in the below-threshold chance but free of CDF saturation, so
    comparisons stay meaningful when every candidate is near-certainly safe.
    """
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (threshold - mean) / np.sqrt(variance)
    sign = np.where(mean <= threshold, np.inf, -np.inf)
    z = np.where(variance == 0.0, sign, z)
    if z.ndim == 0:
        return float(z)
    return z


def gaussian_cdf(z):
    """Standard normal CDF, vectorized, accurate to machine precision."""
    arr = np.asarray(z, dtype=float)
    out = 0.5 * (1.0 + np.vectorize(math.erf)(arr / _SQRT2))
    if arr.ndim == 0:
        return float(out)
    return out


def per_radar_zscores(
    points,
    known: KnownParamBelief,
    priors,
    estimates: Sequence[RadarEstimate],
    threshold: float,
    loss: float = 1.0,
) -> np.ndarray:
    """Standardized per-radar safety margins at many points: (m, n).

    Entry (i, j) treats radar j alone: (threshold - mean_j)/std_j for the
    single-radar detection belief at point i.  The most dangerous radar at a
    point is the argmin along axis 1.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(estimates)
    if n == 0:
        raise ValueError("need at least one radar estimate")
    prior_means, prior_covs = _normalize_priors(priors, n)
    est_states = np.stack([e.state for e in estimates])
    est_covs = np.stack([e.covariance for e in estimates])
    rcs = float(known.mean[0])
    delta, r_sq, snr, pd, dpd_dsnr = _per_radar_terms(
        pts, rcs, prior_means, est_states, loss
    )
    p_fa = prior_means[:, 0][None, :]
    m = pts.shape[0]
    J_u = np.empty((m, n, 5))
    J_u[..., 0] = pd / (p_fa * (snr + 1.0))
    J_u[..., 1] = dpd_dsnr * snr / prior_means[:, 1][None, :]
    J_u[..., 2] = dpd_dsnr * 2.0 * snr / prior_means[:, 2][None, :]
    J_u[..., 3] = dpd_dsnr * snr / prior_means[:, 3][None, :]
    J_u[..., 4] = dpd_dsnr * (-snr) / prior_means[:, 4][None, :]
    J_e = np.empty((m, n, 3))
    J_e[..., 0] = dpd_dsnr * 4.0 * snr * delta[..., 0] / r_sq
    J_e[..., 1] = dpd_dsnr * 4.0 * snr * delta[..., 1] / r_sq
    J_e[..., 2] = dpd_dsnr * snr / est_states[:, 2][None, :]
    # Own-parameter block per radar: rcs spread plus (negated) position terms.
    J_k = np.empty((m, n, 3))
    J_k[..., 0] = dpd_dsnr * snr / rcs
    J_k[..., 1] = -J_e[..., 0]
    J_k[..., 2] = -J_e[..., 1]
    var = np.einsum("mni,nij,mnj->mn", J_u, prior_covs, J_u)
    var = var + np.einsum("mni,nij,mnj->mn", J_e, est_covs, J_e)
    var = var + np.einsum("mni,ij,mnj->mn", J_k, known.covariance, J_k)
    var = np.maximum(var, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (threshold - pd) / np.sqrt(var)
    sign = np.where(pd <= threshold, np.inf, -np.inf)
    return np.where(var == 0.0, sign, z)

"""Minimum-time trajectory refinement under kinematic and detection limits.

The decision variables are the planar control points of a cubic spline on a
unit parameter plus the total duration; evaluating the spline at s = t/T makes
every kinematic quantity an explicit function of (control points, T), with
curvature independent of T.  Constraints are enforced at evenly spaced
parameter samples and the problem is solved by an augmented-Lagrangian outer
loop around a quasi-Newton inner minimization with analytic gradients.  The
solver tracks the best feasible iterate and never returns anything worse than
the seed it started from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .bspline import BSplineTrajectory, design_matrix, max_speed, retime, uniform_knots
from .core import KinematicLimits, MissionSpec, Region
from .estimator import RadarEstimate
from .pd_uncertainty import KnownParamBelief, pd_belief_batch
from .radar import BOLTZMANN, RadarTruth, pd_field

_FOUR_PI_CU = (4.0 * math.pi) ** 3
_A_MIN = 1e-9     # guard for vanishing parameter speed
# Standardized-margin clips: generous on the violated side so the solver keeps
# a restoring gradient, tight on the safe side where the constraint is slack.
_Z_LO = -500.0
_Z_HI = 50.0


@dataclass(frozen=True)
class OptimizerConfig:
    n_samples: int = 100
    feasibility_tol: float = 1e-6
    optimality_tol: float = 1e-4
    max_outer: int = 25
    penalty_growth: float = 5.0
    penalty_init: float = 10.0
    inner_maxiter: int = 250

    def __post_init__(self):
        if self.n_samples < 10:
            raise ValueError("need at least 10 constraint samples")
        if self.penalty_growth <= 1.0:
            raise ValueError("penalty growth must exceed 1")


@dataclass(frozen=True)
class ConstraintMargins:
    """Interior margins that absorb inter-sample constraint wiggle."""

    speed: float = 1e-3
    turn: float = 1e-4
    curvature: float = 1e-5
    pd: float = 1e-4
    chance_z: float = 0.02
    region: float = 1e-2

    def scaled(self, factor: float) -> "ConstraintMargins":
        return ConstraintMargins(
            self.speed * factor, self.turn * factor, self.curvature * factor,
            self.pd * factor, self.chance_z * factor, self.region * factor,
        )


ZERO_MARGINS = ConstraintMargins(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class DeterministicMode:
    radars: tuple[RadarTruth, ...]
    rcs_m2: float

    def __init__(self, radars: Sequence[RadarTruth], rcs_m2: float):
        object.__setattr__(self, "radars", tuple(radars))
        object.__setattr__(self, "rcs_m2", float(rcs_m2))


@dataclass(frozen=True)
class UncertainMode:
    estimates: tuple[RadarEstimate, ...]
    priors: object
    known: KnownParamBelief

    def __init__(self, estimates, priors, known: KnownParamBelief):
        object.__setattr__(self, "estimates", tuple(estimates))
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "known", known)


@dataclass(frozen=True)
class TrajectoryProblem:
    seed: BSplineTrajectory
    limits: KinematicLimits
    region: Region
    mission: MissionSpec
    mode: DeterministicMode | UncertainMode

    @property
    def n_control(self) -> int:
        return self.seed.n_control


@dataclass
class SolveReport:
    iterations: int = 0
    max_violation: float = math.inf
    objective_history: list[float] = field(default_factory=list)
    feasible: bool = False
    stalled: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "max_violation": self.max_violation,
            "objective_history": list(self.objective_history),
            "feasible": self.feasible,
            "stalled": self.stalled,
            "message": self.message,
        }


class _SampledBasis:
    """Design matrices of the unit-parameter spline at fixed sample fractions."""

    def __init__(self, n_control: int, degree: int, fractions: np.ndarray):
        knots = uniform_knots(n_control, degree, 0.0, 1.0)
        self.fractions = fractions
        self.B0 = design_matrix(fractions, n_control, degree, knots, deriv=0)
        self.B1 = design_matrix(fractions, n_control, degree, knots, deriv=1)
        self.B2 = design_matrix(fractions, n_control, degree, knots, deriv=2)


def _det_pd_and_grad(points: np.ndarray, radars, rcs_m2: float):
    """Ground-truth overall PD at points with its spatial gradient."""
    pd = pd_field(points, list(radars), rcs_m2)
    grad = np.zeros_like(points)
    if not radars:
        return pd, grad
    one_minus_total = np.maximum(1.0 - pd, 1e-300)
    for r in radars:
        d = points - r.position.as_array()[None, :]
        r_sq = np.maximum(d[:, 0] ** 2 + d[:, 1] ** 2, 1e-12)
        erp = r.p_t_w * r.g_t / r.loss
        num = erp * r.g_r * r.wavelength_m**2 * rcs_m2 * r.pulse_width_s
        snr = num / (_FOUR_PI_CU * r_sq**2 * BOLTZMANN * r.system_temp_k * r.loss)
        pd_j = np.exp(math.log(r.p_fa) / (snr + 1.0))
        dpd_dsnr = pd_j * (-math.log(r.p_fa)) / (snr + 1.0) ** 2
        outer = one_minus_total / np.maximum(1.0 - pd_j, 1e-300)
        dsnr_dp = -4.0 * snr[:, None] * d / r_sq[:, None]
        grad += (outer * dpd_dsnr)[:, None] * dsnr_dp
    return pd, grad


def _chance_z_and_grad(points: np.ndarray, mode: UncertainMode,
                       pd_threshold: float, fd_step: float = 1.0):
    """Standardized below-threshold margin and its spatial gradient (central FD)."""
    mean, var = pd_belief_batch(points, mode.known, mode.priors, mode.estimates)
    sd = np.sqrt(np.maximum(var, 1e-300))
    z = np.clip((pd_threshold - mean) / sd, _Z_LO, _Z_HI)
    n = points.shape[0]
    shifted = np.concatenate([
        points + np.array([fd_step, 0.0]),
        points - np.array([fd_step, 0.0]),
        points + np.array([0.0, fd_step]),
        points - np.array([0.0, fd_step]),
    ])
    m_s, v_s = pd_belief_batch(shifted, mode.known, mode.priors, mode.estimates)
    z_s = np.clip(
        (pd_threshold - m_s) / np.sqrt(np.maximum(v_s, 1e-300)), _Z_LO, _Z_HI
    )
    gx = (z_s[:n] - z_s[n:2 * n]) / (2.0 * fd_step)
    gy = (z_s[2 * n:3 * n] - z_s[3 * n:]) / (2.0 * fd_step)
    return z, np.stack([gx, gy], axis=1)


class _ConstraintSystem:
    """Residuals and Jacobians of the sampled problem, in scaled units.

    Decision layout: [control x (n), control y (n), duration].  Inequalities
    use theg <= 0 convention.  Scales keep every residual O(1) so a single
    feasibility tolerance is meaningful across families.
    """

    def __init__(self, problem: TrajectoryProblem, n_samples: int,
                 margins: ConstraintMargins, z_epsilon: float | None = None):
        self.problem = problem
        self.margins = margins
        self.n = problem.n_control
        fractions = np.linspace(0.0, 1.0, n_samples + 1)
        self.basis = _SampledBasis(self.n, problem.seed.degree, fractions)
        self.n_samples = n_samples
        region = problem.region
        self.pos_scale = max(region.diagonal, 1.0)
        self.v_scale = problem.limits.v_ub
        self.u_scale = max(problem.limits.u_ub, -problem.limits.u_lb)
        self.k_scale = problem.limits.kappa_ub
        self.pd_scale = problem.mission.pd_threshold
        self.z_epsilon = z_epsilon
        self.uncertain = isinstance(problem.mode, UncertainMode)

    def split(self, x: np.ndarray):
        n = self.n
        return x[:n], x[n:2 * n], float(x[2 * n])

    def pack(self, traj: BSplineTrajectory) -> np.ndarray:
        return np.concatenate([
            traj.control_points[:, 0], traj.control_points[:, 1],
            [traj.duration],
        ])

    def unpack(self, x: np.ndarray) -> BSplineTrajectory:
        cx, cy, T = self.split(x)
        return BSplineTrajectory(np.stack([cx, cy], axis=1),
                                 self.problem.seed.degree, 0.0, T)

    def equalities(self, x: np.ndarray):
        cx, cy, _ = self.split(x)
        B = self.basis.B0
        start = self.problem.mission.start.as_array()
        goal = self.problem.mission.goal.as_array()
        h = np.array([
            B[0] @ cx - start[0], B[0] @ cy - start[1],
            B[-1] @ cx - goal[0], B[-1] @ cy - goal[1],
        ]) / self.pos_scale
        n = self.n
        J = np.zeros((4, 2 * n + 1))
        J[0, :n] = B[0] / self.pos_scale
        J[1, n:2 * n] = B[0] / self.pos_scale
        J[2, :n] = B[-1] / self.pos_scale
        J[3, n:2 * n] = B[-1] / self.pos_scale
        return h, J

    def inequalities(self, x: np.ndarray, with_jacobian: bool = True):
        prob = self.problem
        lim = prob.limits
        m = self.margins
        cx, cy, T = self.split(x)
        n = self.n
        B0, B1, B2 = self.basis.B0, self.basis.B1, self.basis.B2
        S = B0.shape[0]
        px = B0 @ cx
        py = B0 @ cy
        d1x = B1 @ cx
        d1y = B1 @ cy
        d2x = B2 @ cx
        d2y = B2 @ cy
        a = np.maximum(np.hypot(d1x, d1y), _A_MIN)
        v = a / T
        cr = d1x * d2y - d1y * d2x
        u = cr / (T * a**2)
        kappa = cr / a**3
        region = prob.region
        blocks = []
        jacs = []

        def add(g, Jx=None, Jy=None, JT=None):
            blocks.append(g)
            if with_jacobian:
                J = np.zeros((S, 2 * n + 1))
                if Jx is not None:
                    J[:, :n] = Jx
                if Jy is not None:
                    J[:, n:2 * n] = Jy
                if JT is not None:
                    J[:, 2 * n] = JT
                jacs.append(J)

        ps = self.pos_scale
        add((region.lower.x - px + m.region) / ps, Jx=-B0 / ps)
        add((px - region.upper.x + m.region) / ps, Jx=B0 / ps)
        add((region.lower.y - py + m.region) / ps, Jy=-B0 / ps)
        add((py - region.upper.y + m.region) / ps, Jy=B0 / ps)

        vs = self.v_scale
        dv_dx = (d1x / a)[:, None] * B1 / T
        dv_dy = (d1y / a)[:, None] * B1 / T
        dv_dT = -a / T**2
        add((v - lim.v_ub + m.speed) / vs, dv_dx / vs, dv_dy / vs, dv_dT / vs)
        add((lim.v_lb - v + m.speed) / vs, -dv_dx / vs, -dv_dy / vs, -dv_dT / vs)

        us = self.u_scale
        dcr_dx = d2y[:, None] * B1 - d1y[:, None] * B2
        dcr_dy = -d2x[:, None] * B1 + d1x[:, None] * B2
        du_dx = dcr_dx / (T * a**2)[:, None] - (2.0 * cr * d1x / (T * a**4))[:, None] * B1
        du_dy = dcr_dy / (T * a**2)[:, None] - (2.0 * cr * d1y / (T * a**4))[:, None] * B1
        du_dT = -cr / (T**2 * a**2)
        add((u - lim.u_ub + m.turn) / us, du_dx / us, du_dy / us, du_dT / us)
        add((lim.u_lb - u + m.turn) / us, -du_dx / us, -du_dy / us, -du_dT / us)

        ks = self.k_scale
        dk_dx = dcr_dx / (a**3)[:, None] - (3.0 * cr * d1x / a**5)[:, None] * B1
        dk_dy = dcr_dy / (a**3)[:, None] - (3.0 * cr * d1y / a**5)[:, None] * B1
        add((kappa - lim.kappa_ub + m.curvature) / ks, dk_dx / ks, dk_dy / ks)
        add((-kappa - lim.kappa_ub + m.curvature) / ks, -dk_dx / ks, -dk_dy / ks)

        points = np.stack([px, py], axis=1)
        if self.uncertain:
            z_req = self.z_epsilon if self.z_epsilon is not None else 0.0
            z, zgrad = _chance_z_and_grad(points, prob.mode,
                                          prob.mission.pd_threshold)
            g = z_req - z + m.chance_z
            add(g,
                Jx=-zgrad[:, 0][:, None] * B0,
                Jy=-zgrad[:, 1][:, None] * B0)
        else:
            pd, pgrad = _det_pd_and_grad(points, prob.mode.radars,
                                         prob.mode.rcs_m2)
            pds = self.pd_scale
            g = (pd - prob.mission.pd_threshold + m.pd) / pds
            add(g,
                Jx=pgrad[:, 0][:, None] * B0 / pds,
                Jy=pgrad[:, 1][:, None] * B0 / pds)

        g_all = np.concatenate(blocks)
        if not with_jacobian:
            return g_all, None
        return g_all, np.concatenate(jacs, axis=0)


def assemble_constraints(problem: TrajectoryProblem, control_points,
                         tf: float, n_samples: int = 100,
                         z_epsilon: float | None = None):
    """Raw (margin-free) residuals of the sampled problem at one decision.

    Returns (objective seconds, equality residuals (4,), inequality residuals)
    with inequalities non-positive when satisfied.  Residuals are scaled; see
    the constraint-system scales.
    """
    if tf <= 0.0:
        raise ValueError("duration must be positive")
    seed = BSplineTrajectory(np.asarray(control_points, dtype=float),
                             problem.seed.degree, 0.0, float(tf))
    prob = TrajectoryProblem(seed, problem.limits, problem.region,
                             problem.mission, problem.mode)
    if z_epsilon is None and isinstance(problem.mode, UncertainMode):
        from scipy.special import ndtri

        z_epsilon = float(ndtri(problem.mission.epsilon))
    sys = _ConstraintSystem(prob, n_samples, ZERO_MARGINS, z_epsilon)
    x = sys.pack(seed)
    h, _ = sys.equalities(x)
    g, _ = sys.inequalities(x, with_jacobian=False)
    return float(tf), h, g


def enforce_velocity_heuristic(traj: BSplineTrajectory,
                               limits: KinematicLimits,
                               target_fraction: float = 0.95) -> BSplineTrajectory:
    """Stretch the duration until the top speed fits under the bound.

    Speeds scale exactly inversely with duration, so one scale-up lands the
    maximum at the target fraction of the limit; iteration mops up the
    residual error of the numeric maximum search.
    """
    target = target_fraction * limits.v_ub
    out = traj
    for _ in range(6):
        vm = max_speed(out)
        if vm <= target * (1.0 + 1e-9):
            return out
        out = retime(out, out.duration * vm / target)
    return out


def solve(problem: TrajectoryProblem, config: OptimizerConfig,
          margins: ConstraintMargins | None = None,
          z_epsilon: float | None = None):
    """Minimize duration subject to the sampled constraints.

    Augmented-Lagrangian outer loop; L-BFGS-B inner minimization with
    analytic gradients.  The best raw-feasible iterate is tracked across
    outer iterations, seeded with the input trajectory, and returned, so the
    result is never worse (and never less feasible) than the seed.
    """
    if margins is None:
        margins = ConstraintMargins()
    if z_epsilon is None and isinstance(problem.mode, UncertainMode):
        from scipy.special import ndtri

        z_epsilon = float(ndtri(problem.mission.epsilon))
    sys_margin = _ConstraintSystem(problem, config.n_samples, margins, z_epsilon)
    sys_raw = _ConstraintSystem(problem, config.n_samples, ZERO_MARGINS, z_epsilon)
    x0 = sys_margin.pack(problem.seed)
    n = sys_margin.n

    def raw_violation(x):
        h, _ = sys_raw.equalities(x)
        g, _ = sys_raw.inequalities(x, with_jacobian=False)
        return max(float(np.abs(h).max()), float(np.maximum(g, 0.0).max()))

    report = SolveReport()
    seed_viol = raw_violation(x0)
    best_x = x0.copy()
    best_T = float(x0[-1])
    best_feasible = seed_viol <= config.feasibility_tol
    report.objective_history.append(best_T)

    h0, _ = sys_margin.equalities(x0)
    g0, _ = sys_margin.inequalities(x0, with_jacobian=False)
    lam = np.zeros_like(h0)
    mu = np.zeros_like(g0)
    rho = config.penalty_init
    region = problem.region
    pad = 0.5 * region.diagonal
    bounds = (
        [(region.lower.x - pad, region.upper.x + pad)] * n
        + [(region.lower.y - pad, region.upper.y + pad)] * n
        + [(1e-1, 20.0 * float(x0[-1]))]
    )
    prev_viol = math.inf
    prev_best_T = best_T
    stagnant = 0
    x = x0.copy()
    for outer in range(config.max_outer):
        def al_value_grad(xv):
            h, Jh = sys_margin.equalities(xv)
            g, Jg = sys_margin.inequalities(xv, with_jacobian=True)
            psi = np.maximum(0.0, mu + rho * g)
            val = (
                float(xv[-1])
                + float(lam @ h) + 0.5 * rho * float(h @ h)
                + (float(psi @ psi) - float(mu @ mu)) / (2.0 * rho)
            )
            grad = np.zeros_like(xv)
            grad[-1] = 1.0
            grad += Jh.T @ (lam + rho * h)
            grad += Jg.T @ psi
            return val, grad

        res = minimize(
            al_value_grad, x, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": config.inner_maxiter, "ftol": 1e-12,
                     "gtol": 1e-10},
        )
        x = res.x
        h, _ = sys_margin.equalities(x)
        g, _ = sys_margin.inequalities(x, with_jacobian=False)
        viol_m = max(float(np.abs(h).max()), float(np.maximum(g, 0.0).max()))
        rv = raw_violation(x)
        T = float(x[-1])
        if rv <= config.feasibility_tol and (
            not best_feasible or T < best_T - 1e-12
        ):
            best_x, best_T, best_feasible = x.copy(), T, True
            report.objective_history.append(T)
        lam = lam + rho * h
        mu = np.maximum(0.0, mu + rho * g)
        report.iterations = outer + 1
        if viol_m <= config.feasibility_tol:
            improved = prev_best_T - best_T > config.optimality_tol * max(
                1.0, abs(best_T)
            )
            stagnant = 0 if improved else stagnant + 1
            prev_best_T = best_T
            if stagnant >= 2:
                break
        if viol_m > 0.25 * prev_viol:
            rho = min(rho * config.penalty_growth, 1e10)
        prev_viol = viol_m

    report.max_violation = raw_violation(best_x)
    report.feasible = best_feasible
    if not best_feasible:
        report.stalled = True
        report.message = "no feasible iterate found; returning seed"
    traj = sys_margin.unpack(best_x)
    return traj, float(best_T), report


@dataclass
class VerifyReport:
    ok: bool
    max_violation: float
    worst_family: str
    family_max: dict[str, float]


def verify_trajectory(problem: TrajectoryProblem, traj: BSplineTrajectory,
                      factor: int = 10, n_samples: int = 100,
                      tolerance: float = 1e-6,
                      z_epsilon: float | None = None) -> VerifyReport:
    """Re-check all constraints at a denser sampling than the solve used.

    Inter-sample violations surface here; callers react by tightening margins
    and re-solving.
    """
    dense = factor * n_samples
    _, h, g = assemble_constraints(problem, traj.control_points, traj.duration,
                                   n_samples=dense, z_epsilon=z_epsilon)
    S = dense + 1
    families = ["region_xlo", "region_xhi", "region_ylo", "region_yhi",
                "speed_hi", "speed_lo", "turn_hi", "turn_lo",
                "curv_hi", "curv_lo", "safety"]
    family_max = {}
    for i, name in enumerate(families):
        family_max[name] = float(g[i * S:(i + 1) * S].max())
    family_max["endpoints"] = float(np.abs(h).max())
    worst = max(family_max, key=lambda k: family_max[k])
    max_v = max(family_max.values())
    return VerifyReport(max_v <= tolerance, max_v, worst, family_max)

"""Figure emitters for experiment outputs.

Everything renders through the Agg backend straight to files; PNG metadata
is pinned so a re-render from identical inputs is byte-identical.
"""

from __future__ import annotations

import math
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bspline import BSplineTrajectory, sample_polyline
from .core import Region, ScenarioConfig
from .pd_uncertainty import (
    KnownParamBelief,
    UnknownPrior,
    gaussian_cdf,
    pd_belief_batch,
    pd_below_zscore,
)
from .radar import RadarTruth, pd_field
from .roadmap import RoadmapGraph

_PNG_META = {"Software": "radarscout"}


def _save(fig, out: str) -> str:
    fig.savefig(out, dpi=130, metadata=_PNG_META)
    plt.close(fig)
    return out


def _region_grid(region: Region, n: int):
    xs = np.linspace(region.lower.x, region.upper.x, n)
    ys = np.linspace(region.lower.y, region.upper.y, n)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1), xs, ys


def _overlay(ax, region: Region, radars=None, estimates=None,
             trajectory: BSplineTrajectory | None = None, history=None):
    if radars:
        pos = np.array([r.position.as_array() for r in radars])
        ax.plot(pos[:, 0], pos[:, 1], "w^", mec="k", ms=7, label="radar")
    if estimates:
        pos = np.array([e.position_array() for e in estimates])
        ax.plot(pos[:, 0], pos[:, 1], "wx", mew=2, ms=8, label="estimate")
    if history is not None and len(history):
        ax.plot(history[:, 0], history[:, 1], ".", color="0.8", ms=1.5,
                alpha=0.6)
    if trajectory is not None:
        path = sample_polyline(trajectory, 400)
        ax.plot(path[:, 0], path[:, 1], "r-", lw=2, label="route")
    ax.set_xlim(region.lower.x, region.upper.x)
    ax.set_ylim(region.lower.y, region.upper.y)
    ax.set_aspect("equal")


def pd_heatmap(radars: Sequence[RadarTruth], config: ScenarioConfig,
               out: str, trajectory: BSplineTrajectory | None = None,
               grid_n: int = 201) -> str:
    """Ground-truth single-look detection probability over the region."""
    region = config.region
    pts, xs, ys = _region_grid(region, grid_n)
    pd = pd_field(pts, list(radars), config.rcs_m2).reshape(grid_n, grid_n)
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.pcolormesh(xs, ys, pd, cmap="viridis", vmin=0.0, vmax=1.0)
    fig.colorbar(im, ax=ax, label="detection probability")
    _overlay(ax, region, radars=radars, trajectory=trajectory)
    ax.set_title("detection probability")
    return _save(fig, out)


def chance_heatmap(estimates, priors: UnknownPrior, known: KnownParamBelief,
                   config: ScenarioConfig, out: str, threshold: float = 0.15,
                   trajectory: BSplineTrajectory | None = None,
                   history=None, grid_n: int = 121) -> str:
    """Posterior confidence that detection stays below the threshold."""
    region = config.region
    pts, xs, ys = _region_grid(region, grid_n)
    est = list(estimates)
    if est:
        mean, var = pd_belief_batch(pts, known, priors, est)
        prob = gaussian_cdf(pd_below_zscore(mean, var, threshold))
    else:
        prob = np.ones(len(pts))
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.pcolormesh(xs, ys, prob.reshape(grid_n, grid_n), cmap="magma",
                       vmin=0.0, vmax=1.0)
    fig.colorbar(im, ax=ax, label="P(PD below threshold)")
    _overlay(ax, region, estimates=est, trajectory=trajectory,
             history=history)
    ax.set_title("chance-constraint confidence")
    return _save(fig, out)


def roadmap_plot(graph: RoadmapGraph, out: str,
                 trajectory: BSplineTrajectory | None = None,
                 radars=None) -> str:
    fig, ax = plt.subplots(figsize=(7, 6))
    for edge in graph.edges:
        ax.plot(edge.samples[:, 0], edge.samples[:, 1], "-", color="tab:blue",
                lw=0.8)
    if len(graph.vertices):
        ax.plot(graph.vertices[:, 0], graph.vertices[:, 1], "k.", ms=3)
    _overlay(ax, graph.region, radars=radars, trajectory=trajectory)
    ax.set_title("roadmap")
    return _save(fig, out)


def ternary_scatter(rows: Sequence[dict], out: str,
                    value_key: str = "success_rate") -> str:
    """Simplex scatter of the weight sweep; corners explore/localize/goal."""
    fig, ax = plt.subplots(figsize=(6.5, 6))
    xs, ys, vs = [], [], []
    for row in rows:
        a_e, a_u, a_s = row["alpha_e"], row["alpha_u"], row["alpha_s"]
        xs.append(a_s + 0.5 * a_u)
        ys.append(math.sqrt(3.0) / 2.0 * a_u)
        vs.append(row[value_key])
    sc = ax.scatter(xs, ys, c=vs, s=120, cmap="viridis", edgecolors="k")
    fig.colorbar(sc, ax=ax, label=value_key)
    corners = np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2], [0, 0]])
    ax.plot(corners[:, 0], corners[:, 1], "k-", lw=0.8)
    for xy, name in [((0, 0), "explore"), ((1, 0), "goal"),
                     ((0.5, math.sqrt(3) / 2), "localize")]:
        ax.annotate(name, xy, textcoords="offset points", xytext=(0, 6),
                    ha="center")
    ax.set_aspect("equal")
    ax.axis("off")
    return _save(fig, out)


def timing_boxplot(groups: dict[str, Sequence[float]], out: str,
                   ylabel: str = "time to route (s)") -> str:
    labels = [k for k, v in groups.items() if len(v)]
    data = [list(groups[k]) for k in labels]
    fig, ax = plt.subplots(figsize=(6, 5))
    if data:
        ax.boxplot(data, tick_labels=labels)
    ax.set_ylabel(ylabel)
    ax.grid(True, axis="y", alpha=0.3)
    return _save(fig, out)


def agent_sweep_plot(counts: Sequence[int], means: Sequence[float],
                     stds: Sequence[float], out: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.errorbar(counts, means, yerr=stds, fmt="o-", capsize=4)
    ax.set_xlabel("number of scouts")
    ax.set_ylabel("mean time to route (s)")
    ax.grid(True, alpha=0.3)
    return _save(fig, out)

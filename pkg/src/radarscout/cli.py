"""Experiment harness: scenario batches, sweeps, calibration, figures.

Every statistic written to a table is recomputable from the persisted
line-delimited mission logs, and every batch writes a seed manifest so any
single scenario can be rerun by id.  Exit code is nonzero only when a
mission raises; a mission that merely fails to find a route is a data
point, not an error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .bspline import eval_curve
from .core import (
    BEST_WEIGHTS,
    MissionSpec,
    PlannerWeights,
    Position2,
    ScenarioConfig,
    generate_scenario,
)
from .hp_planner import HpPlannerConfig, plan_deterministic
from .radar import pd_field
from .sim import MissionOutcome, SimConfig, run_mission
from .trajopt import OptimizerConfig

CORNER_WEIGHTS = (
    PlannerWeights(1.0, 0.0, 0.0),
    PlannerWeights(0.0, 1.0, 0.0),
    PlannerWeights(0.0, 0.0, 1.0),
)


def _corner_site(config: ScenarioConfig, radars, lo_frac: float,
                 hi_frac: float, scan: int = 9) -> Position2:
    region = config.region
    xs = region.lower.x + np.linspace(lo_frac, hi_frac, scan) * region.width
    ys = region.lower.y + np.linspace(lo_frac, hi_frac, scan) * region.height
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    pd = pd_field(pts, radars, config.rcs_m2)
    best = pts[int(np.argmin(pd))]
    return Position2(float(best[0]), float(best[1]))


def default_mission(config: ScenarioConfig) -> MissionSpec:
    """Corner-to-corner mission across the scenario region.

    Endpoints sit at the quietest spot of each corner neighborhood (min
    ground-truth detection probability over a small scan grid); dropping them
    blindly at fixed insets parks the goal inside a lethal zone in over half
    of random scenarios, which no planner can recover.
    """
    radars = generate_scenario(config)
    start = _corner_site(config, radars, 0.02, 0.18)
    goal = _corner_site(config, radars, 0.82, 0.98)
    return MissionSpec.for_region(config.region, start, goal)


def corridor_admissible(config: ScenarioConfig,
                        mission: MissionSpec | None = None,
                        grid_n: int = 161) -> bool:
    """True when the ground-truth field leaves a safe start-goal corridor.

    Flood fill over a regular grid of the true detection probability,
    blocking every cell above the mission threshold.  Deliberately
    independent of the roadmap pipeline, so it can screen scenarios for
    existence instead of echoing whatever the planner believes.
    """
    mission = mission or default_mission(config)
    radars = generate_scenario(config)
    region = config.region
    xs = np.linspace(region.lower.x, region.upper.x, grid_n)
    ys = np.linspace(region.lower.y, region.upper.y, grid_n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    free = (pd_field(pts, radars, config.rcs_m2)
            <= mission.pd_threshold).reshape(grid_n, grid_n)

    def cell(p: Position2) -> tuple[int, int]:
        i = int(round((p.x - region.lower.x) / region.width * (grid_n - 1)))
        j = int(round((p.y - region.lower.y) / region.height * (grid_n - 1)))
        return min(max(i, 0), grid_n - 1), min(max(j, 0), grid_n - 1)

    si, sj = cell(mission.start)
    gi, gj = cell(mission.goal)
    if not (free[si, sj] and free[gi, gj]):
        return False
    labels, _ = ndimage.label(free)
    return bool(labels[si, sj] == labels[gi, gj])


def find_viable_seeds(n: int, config: ScenarioConfig | None = None,
                      start_seed: int = 0, max_tries: int = 600) -> list[int]:
    """First n seeds, scanning up from start_seed, that admit a corridor.

    At the default emitter power scale most uniform 13-radar layouts leave
    no traversable gap below the detection ceiling, so batches over raw
    consecutive seeds mostly measure scenario hopelessness rather than
    planner quality.  Experiment batches screen for existence first; the
    scan is deterministic given (config, start_seed), which keeps
    manifests reproducible.
    """
    config = config or ScenarioConfig()
    seeds: list[int] = []
    for k in range(max_tries):
        seed = start_seed + k
        if corridor_admissible(config.with_seed(seed)):
            seeds.append(seed)
            if len(seeds) == n:
                return seeds
    raise RuntimeError(
        f"only {len(seeds)} of {n} requested corridor seeds within "
        f"{max_tries} tries from {start_seed}")


def fast_sim_config() -> SimConfig:
    """Desk-scale profile: throttled route attempts, lighter sampling.

    Module defaults keep the full-fidelity settings; this profile trades a
    little plan polish for an order of magnitude of wall clock and is what
    the batch experiments run under.
    """
    hp = HpPlannerConfig(
        optimizer=OptimizerConfig(n_samples=60, inner_maxiter=120,
                                  max_outer=12),
        grid_n=121,
        samples_per_edge=12,
        seed_samples=121,
        margin_rounds=3,
    )
    return SimConfig(hp_attempt_period_s=120.0, lp_polish_starts=1,
                     lp_polish_maxiter=25, hp=hp)


def full_sim_config() -> SimConfig:
    return SimConfig()


@dataclass
class ExperimentSpec:
    kind: str
    n_scenarios: int = 20
    seed0: int = 0
    weight_grid: list[PlannerWeights] = field(default_factory=list)
    agent_counts: list[int] = field(default_factory=lambda: [5, 10, 20])
    out_dir: str = "results"
    config: ScenarioConfig = field(default_factory=ScenarioConfig)
    sim: SimConfig = field(default_factory=fast_sim_config)
    t_max: float = 1200.0
    save_logs: bool = True
    screen_seeds: bool = True

    def __post_init__(self):
        if self.n_scenarios < 1:
            raise ValueError("need at least one scenario")


def spec_seeds(spec: ExperimentSpec) -> list[int]:
    """Scenario seeds for a batch, corridor-screened unless disabled."""
    if spec.screen_seeds:
        return find_viable_seeds(spec.n_scenarios, spec.config, spec.seed0)
    return [spec.seed0 + k for k in range(spec.n_scenarios)]


def simplex_grid(divisions: int = 6) -> list[PlannerWeights]:
    """Uniform lattice on the weight simplex, plus the known-good triple."""
    out = []
    for i in range(divisions + 1):
        for j in range(divisions + 1 - i):
            k = divisions - i - j
            out.append(PlannerWeights(i / divisions, j / divisions,
                                      k / divisions))
    if not any(_weights_close(w, BEST_WEIGHTS) for w in out):
        out.append(BEST_WEIGHTS)
    return out


def _weights_close(a: PlannerWeights, b: PlannerWeights) -> bool:
    return max(abs(x - y) for x, y in zip(a.as_tuple(), b.as_tuple())) < 1e-9


def _ensure_dir(path: str | Path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_jsonl(path: Path, records: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def _manifest(spec: ExperimentSpec, extra: dict | None = None,
              seeds: Sequence[int] | None = None) -> dict:
    if seeds is None:
        seeds = [spec.seed0 + k for k in range(spec.n_scenarios)]
    man = {
        "kind": spec.kind,
        "n_scenarios": spec.n_scenarios,
        "seed0": spec.seed0,
        "screened": spec.screen_seeds,
        "seeds": list(seeds),
        "t_max": spec.t_max,
        "config": spec.config.to_dict(),
        "weights": [w.as_tuple() for w in spec.weight_grid],
    }
    if extra:
        man.update(extra)
    return man


def _mission_tag(mode: str, seed: int, weights: PlannerWeights) -> str:
    a_e, a_u, a_s = weights.as_tuple()
    return f"{mode}_s{seed}_e{a_e:.3f}_u{a_u:.3f}_g{a_s:.3f}"


def run_one(spec: ExperimentSpec, seed: int, weights: PlannerWeights,
            mode: str = "ours",
            config: ScenarioConfig | None = None) -> tuple[MissionOutcome, dict]:
    """One mission plus its flat result record; logs persisted if asked."""
    config = (config or spec.config).with_seed(seed)
    mission = default_mission(config)
    t0 = time.perf_counter()
    outcome = run_mission(config, weights, mission, mode=mode,
                          t_max=spec.t_max, sim_config=spec.sim)
    wall = time.perf_counter() - t0
    record = {
        "seed": seed,
        "mode": mode,
        "alpha_e": weights.alpha_e,
        "alpha_u": weights.alpha_u,
        "alpha_s": weights.alpha_s,
        "found": outcome.found,
        "t_found": outcome.t_found if math.isfinite(outcome.t_found) else None,
        "wall_s": wall,
        **outcome.summary,
    }
    if spec.save_logs:
        log_dir = _ensure_dir(Path(spec.out_dir) / "logs")
        _write_jsonl(log_dir / f"{_mission_tag(mode, seed, weights)}.jsonl",
                     outcome.logs)
    return outcome, record


def ground_truth_max_pd(outcome: MissionOutcome, config: ScenarioConfig,
                        dense_factor: int = 10) -> float | None:
    """Dense ground-truth detection probability along a dispatched route."""
    if not (outcome.found and outcome.plan and outcome.plan.trajectory):
        return None
    traj = outcome.plan.trajectory
    radars = generate_scenario(config)
    n = dense_factor * 100 + 1
    pts = eval_curve(traj, np.linspace(0.0, traj.duration, n))
    return float(pd_field(pts, radars, config.rcs_m2).max())


def run_ternary(spec: ExperimentSpec) -> list[dict]:
    """Success rate and mean time for every weight triple in the grid."""
    out_dir = _ensure_dir(spec.out_dir)
    grid = spec.weight_grid or simplex_grid()
    seeds = spec_seeds(spec)
    rows, mission_records = [], []
    for weights in grid:
        succ, times = 0, []
        for seed in seeds:
            outcome, rec = run_one(spec, seed, weights)
            mission_records.append(rec)
            if outcome.found:
                succ += 1
                times.append(outcome.t_found)
        rows.append({
            "alpha_e": weights.alpha_e,
            "alpha_u": weights.alpha_u,
            "alpha_s": weights.alpha_s,
            "n_scenarios": spec.n_scenarios,
            "n_success": succ,
            "success_rate": succ / spec.n_scenarios,
            "mean_t_found": float(np.mean(times)) if times else None,
        })
    _write_csv(out_dir / "ternary.csv",
               ["alpha_e", "alpha_u", "alpha_s", "n_scenarios", "n_success",
                "success_rate", "mean_t_found"],
               [[r["alpha_e"], r["alpha_u"], r["alpha_s"], r["n_scenarios"],
                 r["n_success"], r["success_rate"], r["mean_t_found"]]
                for r in rows])
    _write_jsonl(out_dir / "ternary_missions.jsonl", mission_records)
    with open(out_dir / "manifest_ternary.json", "w") as fh:
        json.dump(_manifest(replace(spec, weight_grid=grid), seeds=seeds),
                  fh, indent=2, sort_keys=True)
    return rows


def run_baseline(spec: ExperimentSpec) -> list[dict]:
    """Paired scout-planner vs lawnmower runs on identical scenarios."""
    out_dir = _ensure_dir(spec.out_dir)
    weights = spec.weight_grid[0] if spec.weight_grid else BEST_WEIGHTS
    seeds = spec_seeds(spec)
    records = []
    for seed in seeds:
        for mode in ("ours", "lawnmower"):
            _, rec = run_one(spec, seed, weights, mode=mode)
            records.append(rec)
    _write_csv(out_dir / "baseline.csv",
               ["seed", "mode", "found", "t_found", "coverage",
                "n_initialized", "n_measurements"],
               [[r["seed"], r["mode"], int(r["found"]), r["t_found"],
                 r["coverage"], r["n_initialized"], r["n_measurements"]]
                for r in records])
    _write_jsonl(out_dir / "baseline_missions.jsonl", records)
    with open(out_dir / "manifest_baseline.json", "w") as fh:
        json.dump(_manifest(spec, {"modes": ["ours", "lawnmower"],
                                   "weights_used": weights.as_tuple()},
                            seeds=seeds),
                  fh, indent=2, sort_keys=True)
    return records


def run_agent_sweep(spec: ExperimentSpec) -> list[dict]:
    """Time-to-route statistics as the scout fleet grows."""
    out_dir = _ensure_dir(spec.out_dir)
    counts = sorted(spec.agent_counts)
    weights = spec.weight_grid[0] if spec.weight_grid else BEST_WEIGHTS
    seeds = spec_seeds(spec)
    rows, mission_records = [], []
    for count in counts:
        config = replace(spec.config, n_agents=count)
        succ, times, censored = 0, [], []
        for seed in seeds:
            outcome, rec = run_one(spec, seed, weights, config=config)
            rec["n_agents"] = count
            mission_records.append(rec)
            if outcome.found:
                succ += 1
                times.append(outcome.t_found)
                censored.append(outcome.t_found)
            else:
                censored.append(spec.t_max)
        rows.append({
            "n_agents": count,
            "n_scenarios": spec.n_scenarios,
            "n_success": succ,
            "success_rate": succ / spec.n_scenarios,
            "mean_t_success": float(np.mean(times)) if times else None,
            "std_t_success": float(np.std(times)) if times else None,
            "mean_t_censored": float(np.mean(censored)),
        })
    _write_csv(out_dir / "agents.csv",
               ["n_agents", "n_scenarios", "n_success", "success_rate",
                "mean_t_success", "std_t_success", "mean_t_censored"],
               [[r["n_agents"], r["n_scenarios"], r["n_success"],
                 r["success_rate"], r["mean_t_success"], r["std_t_success"],
                 r["mean_t_censored"]] for r in rows])
    _write_jsonl(out_dir / "agents_missions.jsonl", mission_records)
    with open(out_dir / "manifest_agents.json", "w") as fh:
        json.dump(_manifest(spec, {"agent_counts": counts}, seeds=seeds),
                  fh, indent=2, sort_keys=True)
    return rows


def run_calibration(spec: ExperimentSpec) -> dict:
    """How often dispatched routes stay under the true detection ceiling."""
    out_dir = _ensure_dir(spec.out_dir)
    weights = spec.weight_grid[0] if spec.weight_grid else BEST_WEIGHTS
    seeds = spec_seeds(spec)
    per_run, max_pds = [], []
    for seed in seeds:
        outcome, rec = run_one(spec, seed, weights)
        config = spec.config.with_seed(seed)
        max_pd = ground_truth_max_pd(outcome, config)
        ok = (max_pd is not None
              and max_pd <= default_mission(config).pd_threshold + 1e-9)
        per_run.append({"seed": seed, "dispatched": bool(outcome.found),
                        "max_pd_true": max_pd, "ok": ok})
        if max_pd is not None:
            max_pds.append(max_pd)
    n_disp = sum(r["dispatched"] for r in per_run)
    report = {
        "n_missions": spec.n_scenarios,
        "n_dispatched": n_disp,
        "fraction_within_threshold": (
            sum(r["ok"] for r in per_run) / n_disp if n_disp else None),
        "mean_max_pd": float(np.mean(max_pds)) if max_pds else None,
    }
    _write_csv(out_dir / "calibration.csv",
               ["seed", "dispatched", "max_pd_true", "ok"],
               [[r["seed"], int(r["dispatched"]), r["max_pd_true"],
                 int(r["ok"])] for r in per_run])
    with open(out_dir / "calibration_summary.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    with open(out_dir / "manifest_calibration.json", "w") as fh:
        json.dump(_manifest(spec, {"weights_used": weights.as_tuple()},
                            seeds=seeds),
                  fh, indent=2, sort_keys=True)
    return report


def run_single(spec: ExperimentSpec, deterministic: bool = False) -> dict:
    """One fully logged scenario with figures; the closest look at a run."""
    from . import plots

    out_dir = _ensure_dir(spec.out_dir)
    seed = spec.seed0
    config = spec.config.with_seed(seed)
    mission = default_mission(config)
    radars = generate_scenario(config)
    result: dict = {"seed": seed}
    if deterministic:
        plan = plan_deterministic(radars, config.agent_params(mission.start),
                                  mission, spec.sim.limits, config,
                                  spec.sim.hp)
        result.update({"dispatchable": plan.dispatchable,
                       "tf": plan.tf, "reason": plan.reason})
        with open(out_dir / "plan_single.json", "w") as fh:
            json.dump(plan.to_dict(), fh, indent=2, sort_keys=True)
        plots.pd_heatmap(radars, config, str(out_dir / "pd_heatmap.png"),
                         trajectory=plan.trajectory)
    else:
        weights = spec.weight_grid[0] if spec.weight_grid else BEST_WEIGHTS
        outcome, rec = run_one(spec, seed, weights)
        result.update(rec)
        if outcome.plan is not None:
            with open(out_dir / "plan_single.json", "w") as fh:
                json.dump(outcome.plan.to_dict(), fh, indent=2, sort_keys=True)
        traj = outcome.plan.trajectory if outcome.plan else None
        plots.pd_heatmap(radars, config, str(out_dir / "pd_heatmap.png"),
                         trajectory=traj)
    with open(out_dir / "manifest_single.json", "w") as fh:
        json.dump(_manifest(spec, {"deterministic": deterministic}),
                  fh, indent=2, sort_keys=True)
    return result


def render_outputs(out_dir: str) -> list[str]:
    """Re-emit figures from persisted tables; warn and skip missing data."""
    from . import plots

    out = Path(out_dir)
    written = []
    ternary_csv = out / "ternary.csv"
    if ternary_csv.exists():
        with open(ternary_csv) as fh:
            rows = [
                {"alpha_e": float(r["alpha_e"]), "alpha_u": float(r["alpha_u"]),
                 "alpha_s": float(r["alpha_s"]),
                 "success_rate": float(r["success_rate"])}
                for r in csv.DictReader(fh)
            ]
        written.append(plots.ternary_scatter(rows, str(out / "ternary.png")))
    else:
        print("render: no ternary.csv, skipping ternary plot", file=sys.stderr)
    baseline_csv = out / "baseline.csv"
    if baseline_csv.exists():
        groups: dict[str, list[float]] = {"ours": [], "lawnmower": []}
        with open(baseline_csv) as fh:
            for r in csv.DictReader(fh):
                if r["t_found"] not in ("", "None") and int(r["found"]):
                    groups[r["mode"]].append(float(r["t_found"]))
        written.append(plots.timing_boxplot(groups, str(out / "baseline.png")))
    else:
        print("render: no baseline.csv, skipping box plot", file=sys.stderr)
    agents_csv = out / "agents.csv"
    if agents_csv.exists():
        counts, means, stds = [], [], []
        with open(agents_csv) as fh:
            for r in csv.DictReader(fh):
                if r["mean_t_success"] in ("", "None"):
                    continue
                counts.append(int(r["n_agents"]))
                means.append(float(r["mean_t_success"]))
                stds.append(float(r["std_t_success"] or 0.0))
        if counts:
            written.append(plots.agent_sweep_plot(
                counts, means, stds, str(out / "agents.png")))
    else:
        print("render: no agents.csv, skipping sweep plot", file=sys.stderr)
    return written


def _build_spec(args, kind: str) -> ExperimentSpec:
    config = ScenarioConfig()
    if args.config:
        config = ScenarioConfig.from_json(Path(args.config).read_text())
    weight_grid: list[PlannerWeights] = []
    if getattr(args, "weights", None):
        for triple in args.weights:
            a, b, c = (float(x) for x in triple.split(","))
            weight_grid.append(PlannerWeights(a, b, c))
    sim = full_sim_config() if args.profile == "full" else fast_sim_config()
    return ExperimentSpec(
        kind=kind,
        n_scenarios=args.scenarios,
        seed0=args.seed0,
        weight_grid=weight_grid,
        agent_counts=getattr(args, "counts", None) or [5, 10, 20],
        out_dir=args.out,
        config=config,
        sim=sim,
        t_max=args.t_max,
        screen_seeds=getattr(args, "screened", True),
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenarios", type=int, default=20)
    parser.add_argument("--seed0", type=int, default=0)
    parser.add_argument("--out", default="results")
    parser.add_argument("--config", default=None,
                        help="scenario config JSON file")
    parser.add_argument("--t-max", type=float, default=1200.0, dest="t_max")
    parser.add_argument("--profile", choices=("fast", "full"), default="fast")
    parser.add_argument("--screened", action=argparse.BooleanOptionalAction,
                        default=True,
                        help="restrict batches to seeds whose ground truth "
                             "admits a safe corridor")
    parser.add_argument("--weights", action="append", default=None,
                        metavar="E,U,G",
                        help="weight triple, repeatable; default depends on command")


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="radarscout",
        description="cooperative radar-scouting experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("ternary", help="weight-simplex sweep")
    _add_common(p)
    p.add_argument("--divisions", type=int, default=6)
    p = sub.add_parser("baseline", help="scout planner vs lawnmower")
    _add_common(p)
    p = sub.add_parser("agents", help="fleet-size sweep")
    _add_common(p)
    p.add_argument("--counts", type=int, nargs="+", default=[5, 10, 20])
    p = sub.add_parser("calibrate", help="chance-constraint calibration")
    _add_common(p)
    p = sub.add_parser("single", help="one fully logged mission")
    _add_common(p)
    p.add_argument("--deterministic", action="store_true",
                   help="plan against ground-truth radars, no sim")
    p = sub.add_parser("render", help="figures from persisted tables")
    p.add_argument("--out", default="results")
    args = parser.parse_args(argv)

    try:
        if args.command == "ternary":
            spec = _build_spec(args, "ternary")
            if not spec.weight_grid:
                spec.weight_grid = simplex_grid(args.divisions)
            rows = run_ternary(spec)
            for r in rows:
                print(f"({r['alpha_e']:.3f},{r['alpha_u']:.3f},"
                      f"{r['alpha_s']:.3f}) success={r['success_rate']:.2f}")
        elif args.command == "baseline":
            records = run_baseline(_build_spec(args, "baseline"))
            for mode in ("ours", "lawnmower"):
                times = [r["t_found"] for r in records
                         if r["mode"] == mode and r["found"]]
                rate = (sum(r["found"] for r in records if r["mode"] == mode)
                        / max(sum(r["mode"] == mode for r in records), 1))
                med = float(np.median(times)) if times else float("nan")
                print(f"{mode}: success={rate:.2f} median_t={med:.0f}s")
        elif args.command == "agents":
            for r in run_agent_sweep(_build_spec(args, "agents")):
                print(f"n={r['n_agents']}: success={r['success_rate']:.2f} "
                      f"mean_t={r['mean_t_censored']:.0f}s")
        elif args.command == "calibrate":
            report = run_calibration(_build_spec(args, "calibrate"))
            print(json.dumps(report, indent=2, sort_keys=True))
        elif args.command == "single":
            result = run_single(_build_spec(args, "single"),
                                deterministic=args.deterministic)
            print(json.dumps(result, indent=2, sort_keys=True, default=str))
        elif args.command == "render":
            for path in render_outputs(args.out):
                print(path)
    except Exception:
        traceback.print_exc()
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

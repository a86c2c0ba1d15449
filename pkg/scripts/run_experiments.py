#!/usr/bin/env python
"""Reproduce the full experiment set end to end.

Runs the weight sweep (corners plus the known-good triple by default; pass
--divisions for the full simplex lattice), the lawnmower comparison, the
fleet-size sweep, and the chance-constraint calibration, then renders all
figures.  Desk-scale by default; raise --scenarios and use --profile full
for paper-scale fidelity at a long runtime.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from radarscout.cli import (  # noqa: E402
    CORNER_WEIGHTS,
    BEST_WEIGHTS,
    ExperimentSpec,
    fast_sim_config,
    full_sim_config,
    render_outputs,
    run_agent_sweep,
    run_baseline,
    run_calibration,
    run_ternary,
    simplex_grid,
)


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenarios", type=int, default=20)
    ap.add_argument("--seed0", type=int, default=0)
    ap.add_argument("--out", default="results")
    ap.add_argument("--profile", choices=("fast", "full"), default="fast")
    ap.add_argument("--divisions", type=int, default=0,
                    help="simplex lattice divisions; 0 = corners + best only")
    args = ap.parse_args()

    sim = full_sim_config() if args.profile == "full" else fast_sim_config()
    base = dict(n_scenarios=args.scenarios, seed0=args.seed0,
                out_dir=args.out, sim=sim)
    grid = (simplex_grid(args.divisions) if args.divisions
            else list(CORNER_WEIGHTS) + [BEST_WEIGHTS])

    t0 = time.perf_counter()
    print("== weight sweep ==")
    for row in run_ternary(ExperimentSpec(kind="ternary", weight_grid=grid,
                                          **base)):
        print(f"  ({row['alpha_e']:.3f},{row['alpha_u']:.3f},"
              f"{row['alpha_s']:.3f}) -> {row['success_rate']:.2f}")
    print("== baseline comparison ==")
    run_baseline(ExperimentSpec(kind="baseline", **base))
    print("== fleet-size sweep ==")
    for row in run_agent_sweep(ExperimentSpec(kind="agents", **base)):
        print(f"  n={row['n_agents']} -> {row['mean_t_censored']:.0f}s")
    print("== calibration ==")
    report = run_calibration(ExperimentSpec(kind="calibration", **base))
    print(f"  dispatched={report['n_dispatched']} "
          f"within-threshold={report['fraction_within_threshold']}")
    print("== figures ==")
    for path in render_outputs(args.out):
        print(f"  {path}")
    print(f"total {time.perf_counter() - t0:.0f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())

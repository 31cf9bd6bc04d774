#!/usr/bin/env python3
"""Default-vs-reshaped comparison for one or more agents at desk scale.

Trains every (agent, preset, seed) cell, evaluates each for the configured
number of test episodes and writes report.md plus per-cell artifacts.

    python scripts/run_comparison.py --agents ppo --seeds 5 --out runs/ppo5
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from riskshape.config import ExperimentConfig, load_config
from riskshape.harness import compare


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", help="experiment TOML (defaults: 500 episodes, 100 eval episodes)")
    ap.add_argument("--agents", default="ppo")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--episodes", type=int, help="override [harness] episodes")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/comparison")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    harness = replace(cfg.harness, seeds=tuple(range(args.seeds)))
    if args.episodes:
        harness = replace(harness, episodes=args.episodes)
    cfg = replace(cfg, harness=harness)

    t0 = time.perf_counter()
    report = compare(args.agents.split(","), seeds=cfg.harness.seeds, cfg=cfg, out_dir=Path(args.out),
                     workers=args.workers)
    print(report.to_markdown())
    print(f"{len(report.cells)} cells in {time.perf_counter() - t0:.0f} s -> {args.out}/report.md")


if __name__ == "__main__":
    main()

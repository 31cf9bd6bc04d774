#!/usr/bin/env python3
"""Plot smoothed training curves (and test action counts) from run directories.

    python scripts/plot_curves.py runs/comparison --out curves.png

Every directory below the given roots that holds a curve.csv becomes one line;
directories are labelled <agent>_<preset>_<seed> as written by the harness.
"""

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from riskshape.harness import TrainingCurve  # noqa: E402

ACTION_LABELS = ["none", "left", "right", "accel", "brake"]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("roots", nargs="+")
    ap.add_argument("--window", type=int, default=20)
    ap.add_argument("--out", default="curves.png")
    args = ap.parse_args()

    runs = sorted({p.parent for root in args.roots for p in Path(root).rglob("curve.csv")})
    if not runs:
        raise SystemExit("no curve.csv found")

    fig, (ax_curve, ax_hist) = plt.subplots(1, 2, figsize=(13, 4.5))
    hist = {}
    for run in runs:
        curve = TrainingCurve.read_csv(run / "curve.csv")
        ax_curve.plot(curve.smoothed(args.window), label=run.name, lw=1)
        summary = run / "summary.json"
        if summary.exists():
            key = run.name.rsplit("_", 1)[0]  # pool seeds
            counts = np.asarray(json.loads(summary.read_text())["action_counts"])
            hist[key] = hist.get(key, 0) + counts
    ax_curve.set_xlabel("episode")
    ax_curve.set_ylabel(f"R_cum (moving mean, {args.window})")
    ax_curve.legend(fontsize=6)

    if hist:
        width = 0.8 / len(hist)
        for i, (key, counts) in enumerate(sorted(hist.items())):
            ax_hist.bar(np.arange(5) + i * width, counts, width, label=key)
        ax_hist.set_xticks(np.arange(5) + 0.4 - width / 2, ACTION_LABELS)
        ax_hist.set_ylabel("test action count")
        ax_hist.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"{len(runs)} runs -> {args.out}")


if __name__ == "__main__":
    main()

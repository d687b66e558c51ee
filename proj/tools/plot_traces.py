#!/usr/bin/env python3
"""Render ensemble.csv (t, q25, median, q75, mean, fit) to a log-log figure.

Usage: plot_traces.py ensemble.csv out.png
"""
import csv
import math
import sys


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not available", file=sys.stderr)
        return 1

    t, q25, q50, q75, fit = [], [], [], [], []
    with open(sys.argv[1], newline="") as fh:
        for row in csv.DictReader(fh):
            tv = float(row["t"])
            if tv <= 0:
                continue
            t.append(tv)
            q25.append(float(row["q25"]))
            q50.append(float(row["median"]))
            q75.append(float(row["q75"]))
            fit.append(float(row["fit"]))

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.fill_between(t, q25, q75, alpha=0.3, label="interquartile range")
    ax.plot(t, q50, label="median D(t)")
    if any(not math.isnan(v) for v in fit):
        ax.plot(t, fit, "--", label="power-law fit")
    ax.set_xscale("log")
    if any(v > 0 for v in q50):
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("D(t)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(sys.argv[2], dpi=150)
    return 0


if __name__ == "__main__":
    sys.exit(main())

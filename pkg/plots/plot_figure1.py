#!/usr/bin/env python3
"""Render the two-curve comparison CSV as mean curves with stderr bands.

Usage: plot_figure1.py CURVES_CSV OUT_IMAGE

The input schema is ``t,curve,mean,stderr`` with curve names
``log_optimal`` and ``alpha_optimal``; the image format follows the
output extension (png or svg).  This script never recomputes numerics:
it is a pure CSV-to-image transform.
"""

import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

REQUIRED = ("t", "curve", "mean", "stderr")
LABELS = {"log_optimal": "log-optimal", "alpha_optimal": "alpha-optimal"}
COLORS = {"log_optimal": "tab:blue", "alpha_optimal": "tab:orange"}


def read_curves(csv_path):
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in REQUIRED:
            if col not in fields:
                raise KeyError(col)
        curves = {}
        for row in reader:
            entry = curves.setdefault(row["curve"], ([], [], []))
            entry[0].append(float(row["t"]))
            entry[1].append(float(row["mean"]))
            entry[2].append(float(row["stderr"]))
    return {
        name: tuple(np.asarray(col) for col in cols)
        for name, cols in curves.items()
    }


def render(curves, out_path):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in sorted(curves, key=lambda n: (n not in LABELS, n)):
        t, mean, err = curves[name]
        color = COLORS.get(name)
        ax.plot(t, mean, label=LABELS.get(name, name), color=color)
        ax.fill_between(t, mean - err, mean + err, alpha=0.25, color=color,
                        linewidth=0)
    ax.set_xlabel("time")
    ax.set_ylabel("expected log wealth")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    metadata = {"Date": None} if str(out_path).endswith(".svg") else None
    fig.savefig(out_path, dpi=150, metadata=metadata)
    plt.close(fig)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: plot_figure1.py CURVES_CSV OUT_IMAGE", file=sys.stderr)
        return 2
    try:
        curves = read_curves(argv[0])
    except KeyError as exc:
        print(f"error: missing column {exc.args[0]!r} in {argv[0]}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not curves:
        print(f"error: no curve rows in {argv[0]}", file=sys.stderr)
        return 2
    render(curves, argv[1])
    return 0


if __name__ == "__main__":
    sys.exit(main())

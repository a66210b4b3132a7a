#!/usr/bin/env python3
"""Log-log plot of mesh-refinement gaps with a fitted slope annotation.

Usage: plot_convergence.py REPORT_CSV OUT_IMAGE

The input schema is ``level,mesh,gap``; trailing WARN rows are ignored
for the fit but reported in the title.  Zero gaps are floored at 1e-300
so an all-zero report still renders as a flat line.
"""

import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

REQUIRED = ("level", "mesh", "gap")
PLOT_FLOOR = 1e-18


def read_report(csv_path):
    meshes, gaps, warned = [], [], False
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in REQUIRED:
            if col not in fields:
                raise KeyError(col)
        for row in reader:
            if row["level"] == "WARN":
                warned = True
                continue
            meshes.append(float(row["mesh"]))
            gaps.append(float(row["gap"]))
    return np.asarray(meshes), np.asarray(gaps), warned


def fitted_slope(meshes, gaps):
    floored = np.maximum(gaps, PLOT_FLOOR)
    if np.all(gaps == 0):
        return 0.0
    return float(np.polyfit(np.log2(meshes), np.log2(floored), 1)[0])


def render(meshes, gaps, warned, out_path):
    slope = fitted_slope(meshes, gaps)
    floored = np.maximum(gaps, PLOT_FLOOR)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(meshes, floored, "o-", base=2)
    ax.set_xlabel("mesh")
    ax.set_ylabel("uniform gap")
    title = f"fitted slope = {slope:.2f}"
    if warned:
        title += "  (WARN: stalled decay)"
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    metadata = {"Date": None} if str(out_path).endswith(".svg") else None
    fig.savefig(out_path, dpi=150, metadata=metadata)
    plt.close(fig)
    return slope


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: plot_convergence.py REPORT_CSV OUT_IMAGE", file=sys.stderr)
        return 2
    try:
        meshes, gaps, warned = read_report(argv[0])
    except KeyError as exc:
        print(f"error: missing column {exc.args[0]!r} in {argv[0]}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if len(meshes) < 2:
        print(f"error: need at least 2 levels, got {len(meshes)}", file=sys.stderr)
        return 2
    render(meshes, gaps, warned, argv[1])
    return 0


if __name__ == "__main__":
    sys.exit(main())

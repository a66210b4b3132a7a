"""CSV and JSON plumbing shared by the library and the CLI.

Floats are written with ``repr`` (shortest round-trip), so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .paths import SampledPath, TimeGrid


def _fmt(x) -> str:
    return repr(float(x))


def write_path_csv(path: SampledPath, dest) -> None:
    """Schema: header t,x1,...,xd; one row per node, full double precision."""
    dest = Path(dest)
    with dest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(path.dimension)])
        for t, row in zip(path.times, path.values):
            writer.writerow([_fmt(t)] + [_fmt(v) for v in row])


def read_path_csv(src) -> SampledPath:
    src = Path(src)
    with src.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "t":
            raise ParameterError(f"{src}: expected header starting with 't'")
        d = len(header) - 1
        if d < 1:
            raise ParameterError(f"{src}: no value columns found")
        times, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ParameterError(f"{src}:{lineno}: expected {d + 1} fields")
            try:
                times.append(float(row[0]))
                values.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ParameterError(f"{src}:{lineno}: {exc}") from None
    return SampledPath(TimeGrid(np.asarray(times)), np.asarray(values))


def write_convergence_csv(report, dest, warn_factor: float = None) -> None:
    """Schema: level,mesh,gap; an optional trailing WARN row flags stalled decay."""
    dest = Path(dest)
    with dest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "mesh", "gap"])
        for level, mesh, gap in report.rows():
            writer.writerow([int(level), _fmt(mesh), _fmt(gap)])
        if warn_factor is not None:
            writer.writerow(["WARN", "shrink_factor", _fmt(warn_factor)])


def write_wealth_csv(record, dest, extra_columns: dict = None) -> None:
    """Schema: t,W,V,logV,int_term,cov_term (extra columns appended by name)."""
    dest = Path(dest)
    extra = extra_columns or {}
    with dest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "W", "V", "logV", "int_term", "cov_term"] + list(extra)
        )
        columns = [record.grid.times, record.W, record.V, record.logV,
                   record.int_term, record.cov_term] + list(extra.values())
        for row in zip(*columns):
            writer.writerow([_fmt(v) for v in row])


def write_cover_csv(trajectory, dest) -> None:
    """Schema: T,logVstar,logVuniversal,lambdaT,gap_scaled,winner."""
    dest = Path(dest)
    with dest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["T", "logVstar", "logVuniversal", "lambdaT", "gap_scaled", "winner"]
        )
        for k in range(len(trajectory.horizons)):
            writer.writerow(
                [
                    _fmt(trajectory.horizons[k]),
                    _fmt(trajectory.log_v_star[k]),
                    _fmt(trajectory.log_v_universal[k]),
                    _fmt(trajectory.lam[k]),
                    _fmt(trajectory.gap_scaled[k]),
                    int(trajectory.winners[k]),
                ]
            )


def write_curves_csv(result, dest, curve_names=None) -> None:
    """Schema: t,curve,mean,stderr (one block per curve, fixed order)."""
    dest = Path(dest)
    names = curve_names if curve_names is not None else list(result.curves)
    with dest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "curve", "mean", "stderr"])
        for name in names:
            mean, err = result.curves[name]
            for t, m, e in zip(result.times, mean, err):
                writer.writerow([_fmt(t), name, _fmt(m), _fmt(e)])


def read_curves_csv(src) -> dict:
    src = Path(src)
    out = {}
    with src.open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"t", "curve", "mean", "stderr"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            missing = sorted(required - set(reader.fieldnames or []))
            raise ParameterError(f"{src}: missing columns {missing}")
        for row in reader:
            entry = out.setdefault(row["curve"], {"t": [], "mean": [], "stderr": []})
            entry["t"].append(float(row["t"]))
            entry["mean"].append(float(row["mean"]))
            entry["stderr"].append(float(row["stderr"]))
    return {
        name: {k: np.asarray(v) for k, v in entry.items()}
        for name, entry in out.items()
    }


def write_json(payload: dict, dest) -> None:
    Path(dest).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(src) -> dict:
    return json.loads(Path(src).read_text())

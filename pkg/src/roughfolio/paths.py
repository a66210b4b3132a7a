"""Time grids, sampled paths, p-variation and control functions.

Paths are stored as samples on a finite grid and interpreted as piecewise
linear between nodes.  All p-variation computations are exact suprema over
grid partitions via the O(n^2) dynamic program

    V(j) = max_{i<j} V(i) + |S_j - S_i|^p,

which for piecewise-linear paths coincides with the true p-variation
(splitting a linear segment never increases the sum).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridAlignmentError, ParameterError

# Exact DP is used up to this many nodes; beyond it a coarsened
# lower/upper bracket is reported instead.
PVAR_EXACT_NODE_CAP = 20_000

SUPERADDITIVITY_TOL = 1e-12


def _as_readonly(a, dtype=float):
    arr = np.ascontiguousarray(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time points starting at 0."""

    times: np.ndarray

    def __post_init__(self):
        times = _as_readonly(self.times)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or len(times) < 2:
            raise ParameterError("a time grid needs at least two nodes")
        if times[0] != 0.0:
            raise ParameterError("time grids start at 0")
        if not np.all(np.diff(times) > 0):
            raise ParameterError("time grid must be strictly increasing")
        if not np.all(np.isfinite(times)):
            raise ParameterError("time grid contains non-finite entries")

    def __len__(self):
        return len(self.times)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.times)))

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t``; raises if ``t`` is off-grid."""
        i = int(np.searchsorted(self.times, t))
        if i >= len(self.times) or self.times[i] != t:
            raise GridAlignmentError(f"time {t} is not a grid node")
        return i

    def nearest_index(self, t: float) -> int:
        """Index of the node closest to ``t`` (for step-multiple horizons)."""
        i = int(np.clip(np.searchsorted(self.times, t), 1, len(self.times) - 1))
        return i if abs(self.times[i] - t) < abs(self.times[i - 1] - t) else i - 1

    def indices_of(self, other: "TimeGrid") -> np.ndarray:
        """Indices of ``other``'s nodes inside this grid; raises if not nested."""
        idx = np.searchsorted(self.times, other.times)
        if np.any(idx >= len(self.times)) or np.any(self.times[idx] != other.times):
            raise GridAlignmentError("partition is not a subset of the grid")
        return idx

    @staticmethod
    def uniform(horizon: float, cells: int) -> "TimeGrid":
        if cells < 1 or horizon <= 0:
            raise ParameterError("need horizon > 0 and at least one cell")
        return TimeGrid(np.arange(cells + 1) * (horizon / cells))


@dataclass(frozen=True)
class SampledPath:
    """A d-dimensional path sampled on a grid, piecewise linear in between."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "values", _as_readonly(vals))
        if len(vals) != len(self.grid):
            raise ParameterError("one value row per grid node required")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("path values must be finite")

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __len__(self):
        return len(self.grid)

    def at(self, t) -> np.ndarray:
        """Piecewise-linear evaluation; exact at grid nodes."""
        t = np.asarray(t, dtype=float)
        times = self.grid.times
        tt = np.clip(t, times[0], times[-1])
        hi = np.clip(np.searchsorted(times, tt, side="right"), 1, len(times) - 1)
        lo = hi - 1
        w = (tt - times[lo]) / (times[hi] - times[lo])
        out = (1 - w)[..., None] * self.values[lo] + w[..., None] * self.values[hi]
        return out

    def increment(self, i: int, j: int) -> np.ndarray:
        return self.values[j] - self.values[i]

    def window_view(self, i: int, j: int) -> np.ndarray:
        return self.values[i : j + 1]

    def restrict_to(self, partition: TimeGrid) -> "SampledPath":
        idx = self.grid.indices_of(partition)
        return SampledPath(partition, self.values[idx])


@dataclass(frozen=True)
class PartitionSequence:
    """Nested grids with mesh at least halving per level (coarsest first)."""

    levels: tuple
    enforce_mesh_halving: bool = True

    def __post_init__(self):
        levels = tuple(self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ParameterError("partition sequence is empty")
        for a, b in zip(levels, levels[1:]):
            b.indices_of(a)  # raises unless a's nodes are a subset of b's
            if self.enforce_mesh_halving and b.mesh > a.mesh / 2 * (1 + 1e-12):
                raise ParameterError(
                    f"mesh must at least halve per level ({a.mesh} -> {b.mesh})"
                )

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    @property
    def finest(self) -> TimeGrid:
        return self.levels[-1]

    @staticmethod
    def dyadic(grid: TimeGrid, n_levels: int) -> "PartitionSequence":
        """Index-dyadic refinements of ``grid``, finest level = full grid."""
        cells = len(grid) - 1
        if n_levels < 1:
            raise ParameterError("need at least one level")
        if cells % (1 << (n_levels - 1)) != 0:
            raise ParameterError(
                f"grid with {cells} cells does not support {n_levels} dyadic levels"
            )
        levels = []
        for k in range(n_levels):
            stride = 1 << (n_levels - 1 - k)
            levels.append(TimeGrid(grid.times[::stride]))
        return PartitionSequence(tuple(levels))


# ---------------------------------------------------------------------------
# p-variation
# ---------------------------------------------------------------------------


def _pvar_power_prefix(values: np.ndarray, p: float) -> np.ndarray:
    """Prefix table of sup_P sum |increment|^p; entry j covers nodes 0..j."""
    n = len(values)
    best = np.zeros(n)
    for j in range(1, n):
        d = values[j] - values[:j]
        dist = np.sqrt(np.einsum("ik,ik->i", d, d))
        best[j] = np.max(best[:j] + dist**p)
    return best


def _coarse_indices(n: int, cap: int) -> np.ndarray:
    stride = int(math.ceil(n / cap))
    idx = np.arange(0, n, stride)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def p_variation_power_bracket(path, p, window=None, node_cap=PVAR_EXACT_NODE_CAP):
    """(lower, upper) for sup_P sum |S_{u,v}|^p over the window.

    Exact (lower == upper) up to ``node_cap`` nodes; beyond that the lower
    bound is the DP on a coarsened subgrid and the upper bound follows from
    snapping arbitrary partition points to their nearest kept node.
    """
    if p < 1:
        raise ParameterError("p-variation requires p >= 1")
    i0, i1 = _window_indices(path.grid, window)
    vals = path.values[i0 : i1 + 1]
    n = len(vals)
    if n <= node_cap:
        v = float(_pvar_power_prefix(vals, p)[-1])
        return v, v
    keep = _coarse_indices(n, node_cap)
    lower = float(_pvar_power_prefix(vals[keep], p)[-1])
    # distance from every dropped node to its nearest kept node
    nearest = np.searchsorted(keep, np.arange(n))
    nearest = np.clip(nearest, 0, len(keep) - 1)
    left = np.clip(nearest - 1, 0, len(keep) - 1)
    d_right = np.abs(keep[nearest] - np.arange(n))
    d_left = np.abs(keep[left] - np.arange(n))
    snap = np.where(d_left < d_right, keep[left], keep[nearest])
    dev = np.linalg.norm(vals - vals[snap], axis=1)
    upper = (lower ** (1 / p) + 2 * float(np.sum(dev**p)) ** (1 / p)) ** p
    return lower, upper


def p_variation_power(path, p, window=None, node_cap=PVAR_EXACT_NODE_CAP):
    """sup_P sum |S_{u,v}|^p (lower bracket bound when coarsened)."""
    return p_variation_power_bracket(path, p, window, node_cap)[0]


def p_variation(path, p, window=None, node_cap=PVAR_EXACT_NODE_CAP):
    """The p-variation norm ||S||_{p,[s,t]}."""
    return p_variation_power(path, p, window, node_cap) ** (1 / p)


def _window_indices(grid: TimeGrid, window):
    if window is None:
        return 0, len(grid) - 1
    s, t = window
    i0, i1 = grid.index_of(s), grid.index_of(t)
    if i1 < i0:
        raise GridAlignmentError("window endpoints out of order")
    return i0, i1


def two_param_p_variation_power(row_norms, n, p):
    """sup_P sum |Xi_{u,v}|^p for a two-parameter map given row-wise.

    ``row_norms(j)`` must return the array |Xi(t_i, t_j)| for i = 0..j-1.
    Unlike the one-parameter case the sum runs over consecutive partition
    cells only, which is exactly what the same DP computes.
    """
    if p < 1:
        raise ParameterError("p-variation requires p >= 1")
    best = np.zeros(n)
    for j in range(1, n):
        best[j] = np.max(best[:j] + np.asarray(row_norms(j)) ** p)
    return float(best[-1])


def two_param_p_variation(xi, p, grid: TimeGrid, window=None):
    """p-variation norm of a two-parameter map ``xi(i, j)`` over grid indices.

    ``xi`` is called with window-relative node indices and may return a
    scalar, vector or matrix; the Euclidean/Frobenius norm is applied.
    """
    i0, i1 = _window_indices(grid, window)
    n = i1 - i0 + 1

    def row(j):
        return np.array(
            [np.linalg.norm(np.asarray(xi(i0 + i, i0 + j), dtype=float)) for i in range(j)]
        )

    return two_param_p_variation_power(row, n, p) ** (1 / p)


def p_variation_exhaustive(values: np.ndarray, p: float) -> float:
    """Brute-force sup over all partitions (testing oracle, <= ~16 nodes)."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] == 1:
        values = values.T
    n = len(values)
    interior = n - 2
    best = 0.0
    for mask in range(1 << interior):
        pts = [0] + [i + 1 for i in range(interior) if mask >> i & 1] + [n - 1]
        s = sum(
            np.linalg.norm(values[b] - values[a]) ** p for a, b in zip(pts, pts[1:])
        )
        best = max(best, s)
    return best


# ---------------------------------------------------------------------------
# Control functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlFunction:
    """Superadditive two-parameter bound c(s, t) >= 0 on grid-node pairs.

    ``table`` holds c at all node pairs of ``grid`` (upper triangle); the
    generic evaluator works off this table so sums/scalings stay closed.
    """

    grid: TimeGrid
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", _as_readonly(self.table))
        n = len(self.grid)
        if self.table.shape != (n, n):
            raise ParameterError("control table must be (n, n)")

    def __call__(self, s: float, t: float) -> float:
        i, j = self.grid.index_of(s), self.grid.index_of(t)
        return self.at_indices(i, j)

    def at_indices(self, i, j):
        return self.table[i, j]

    def scaled(self, kappa: float) -> "ControlFunction":
        return ControlFunction(self.grid, kappa * self.table)

    def __add__(self, other: "ControlFunction") -> "ControlFunction":
        if other.grid is not self.grid and not np.array_equal(
            other.grid.times, self.grid.times
        ):
            raise GridAlignmentError("control functions live on different grids")
        return ControlFunction(self.grid, self.table + other.table)

    def superadditivity_residual(self) -> float:
        """max over grid triples s <= u <= t of c(s,u) + c(u,t) - c(s,t)."""
        n = len(self.grid)
        worst = -np.inf
        for i in range(n):
            # residual[u, j] = c(i,u) + c(u,j) - c(i,j) for i <= u <= j
            sub = self.table[i:, i:]
            cand = self.table[i, i:][:, None] + sub - self.table[i, i:][None, :]
            iu, jj = np.triu_indices(n - i)
            worst = max(worst, float(np.max(cand[iu, jj])))
        return worst

    def is_superadditive(self, tol=SUPERADDITIVITY_TOL) -> bool:
        return self.superadditivity_residual() <= tol


def p_variation_control(path: SampledPath, p: float, node_cap=2_048) -> ControlFunction:
    """c(s,t) = ||S||_{p,[s,t]}^p tabulated at all node pairs.

    One DP sweep per start node fills a full row thanks to the prefix
    property of the dynamic program; O(n^3) work overall, hence the cap.
    """
    n = len(path)
    if n > node_cap:
        raise ParameterError(
            f"full control table needs <= {node_cap} nodes, got {n}"
        )
    table = np.zeros((n, n))
    for i in range(n):
        table[i, i:] = _pvar_power_prefix(path.values[i:], p)
    return ControlFunction(path.grid, table)


# ---------------------------------------------------------------------------
# Piecewise-constant (left-point) approximation
# ---------------------------------------------------------------------------


def piecewise_constant_approx(path: SampledPath, partition: TimeGrid) -> SampledPath:
    """Left-point step approximation sampled back on the path's grid.

    Node u carries the value at the largest partition node <= u, except the
    terminal node which keeps the exact terminal value.
    """
    idx = path.grid.indices_of(partition)
    owner = np.searchsorted(idx, np.arange(len(path)), side="right") - 1
    step_vals = path.values[idx[owner]]
    step_vals = step_vals.copy()
    step_vals[-1] = path.values[-1]
    return SampledPath(path.grid, step_vals)

"""Rough lifts, controlled paths, and pathwise integration.

The second-order data of a lift is stored as the iterated-integral path
I_t = int_0^t S_u (x) dS_u accumulated by left-point sums on the finest
grid; the two-parameter area

    A_{s,t} = I_t - I_s - S_s (x) S_{s,t}

is reconstructed on demand.  With this construction Chen's relation and
the bracket partition-sum identity hold exactly (up to float rounding),
while all limit statements are checked through mesh-refinement ratios.

Index conventions (D = reference dimension, m = integrand dimension):
    area          A[a, b]   ~ int S^a dS^b
    derivative    F'[i, j]  ~ dF^i / dS^j
    scalar rough integral of F (m = D):
        sum_cells F . dS + sum_{ij} F'[i,j] A[j,i]
    integral of F against controlled G (m_F = m_G):
        sum_cells F . dG + sum_{i,a,b} F'[i,a] G'[i,b] A[a,b]
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    GridAlignmentError,
    MeasureError,
    ParameterError,
    ReferenceMismatchError,
)
from .paths import (
    PartitionSequence,
    SampledPath,
    TimeGrid,
    _as_readonly,
    p_variation,
    two_param_p_variation_power,
)

DEFAULT_P = 2.5

EXACT_TOL = 1e-12       # algebraic identities
SUM_TOL = 1e-10         # identities accumulated over long sums
SHRINK_FACTOR = 0.75    # accepted per-level decay of limit statements


def derivative_parameters(p: float, q: float | None = None):
    """Default (q, r) for controlled paths: q = p, 1/r = 1/p + 1/q."""
    if q is None:
        q = p
    if q < p or 2 / p + 1 / q <= 1:
        raise ParameterError("need q >= p and 2/p + 1/q > 1")
    return q, 1.0 / (1.0 / p + 1.0 / q)


# ---------------------------------------------------------------------------
# Convergence reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-level gaps of a mesh-refinement run (level index, mesh, gap)."""

    levels: np.ndarray
    meshes: np.ndarray
    gaps: np.ndarray

    def shrink_factors(self) -> np.ndarray:
        g = self.gaps
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(g[:-1] > 0, g[1:] / g[:-1], 0.0)

    def geometric_factor(self) -> float:
        """Mean per-level shrink factor (gaps[-1]/gaps[0])^(1/(L-1))."""
        g = self.gaps
        if len(g) < 2:
            raise ParameterError("need at least two gap levels")
        if g[0] == 0:
            return 0.0
        return float((g[-1] / g[0]) ** (1.0 / (len(g) - 1)))

    def converged(self, factor: float = SHRINK_FACTOR) -> bool:
        if np.all(self.gaps == 0):
            return True
        return self.geometric_factor() <= factor

    def rows(self):
        return list(zip(self.levels.tolist(), self.meshes.tolist(), self.gaps.tolist()))


# ---------------------------------------------------------------------------
# Rough lift
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoughLift:
    """A path together with its left-point iterated-integral path."""

    base: SampledPath
    iterated: np.ndarray  # (n, d, d), I_0 = 0
    p: float = DEFAULT_P

    def __post_init__(self):
        object.__setattr__(self, "iterated", _as_readonly(self.iterated))
        n, d = self.base.values.shape
        if self.iterated.shape != (n, d, d):
            raise ParameterError("iterated path must be (n, d, d)")
        if not 2 < self.p < 3:
            raise ParameterError("regularity parameter p must lie in (2, 3)")

    @staticmethod
    def from_path(path: SampledPath, p: float = DEFAULT_P) -> "RoughLift":
        """Left-point lift on the path's own grid."""
        incr = np.diff(path.values, axis=0)
        terms = np.einsum("ki,kj->kij", path.values[:-1], incr)
        iterated = np.concatenate(
            [np.zeros((1,) + terms.shape[1:]), np.cumsum(terms, axis=0)]
        )
        return RoughLift(path, iterated, p)

    @property
    def grid(self) -> TimeGrid:
        return self.base.grid

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def area(self, i: int, j: int) -> np.ndarray:
        """A_{t_i, t_j} by node indices."""
        s, incr = self.base.values[i], self.base.values[j] - self.base.values[i]
        return self.iterated[j] - self.iterated[i] - np.outer(s, incr)

    def area_pairs(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        s = self.base.values[i]
        incr = self.base.values[j] - s
        return (
            self.iterated[j]
            - self.iterated[i]
            - np.einsum("ka,kb->kab", s, incr)
        )

    def area_cells(self, idx: np.ndarray) -> np.ndarray:
        """Areas over consecutive cells of a (nested) partition index array."""
        return self.area_pairs(idx[:-1], idx[1:])

    def area_row_norms(self, j: int) -> np.ndarray:
        """|A_{t_i, t_j}| for all i < j (Frobenius)."""
        a = self.area_pairs(np.arange(j), np.full(j, j))
        return np.sqrt(np.einsum("kab,kab->k", a, a))

    def chen_residual(self, i: int, u: int, t: int) -> np.ndarray:
        s_su = self.base.values[u] - self.base.values[i]
        s_ut = self.base.values[t] - self.base.values[u]
        return (
            self.area(i, t) - self.area(i, u) - self.area(u, t) - np.outer(s_su, s_ut)
        )

    def max_chen_residual(self, n_triples: int = 1000, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        n = len(self.base)
        tri = np.sort(rng.integers(0, n, size=(n_triples, 3)), axis=1)
        worst = 0.0
        for i, u, t in tri:
            worst = max(worst, float(np.max(np.abs(self.chen_residual(i, u, t)))))
        return worst

    def p_variation(self, window=None) -> float:
        return p_variation(self.base, self.p, window)

    def area_p_variation(self, window=None, node_cap: int = 8_192) -> float:
        """||A||_{p/2} over the window (coarsened lower bound beyond cap)."""
        i0 = 0 if window is None else self.grid.index_of(window[0])
        i1 = len(self.grid) - 1 if window is None else self.grid.index_of(window[1])
        idx = np.arange(i0, i1 + 1)
        if len(idx) > node_cap:
            stride = int(np.ceil(len(idx) / node_cap))
            idx = np.concatenate([idx[::stride], idx[-1:]]) if idx[::stride][-1] != idx[-1] else idx[::stride]

        def row(j):
            a = self.area_pairs(idx[:j], np.full(j, idx[j]))
            return np.sqrt(np.einsum("kab,kab->k", a, a))

        return two_param_p_variation_power(row, len(idx), self.p / 2) ** (2 / self.p)

    def restrict_to(self, partition: TimeGrid) -> "RoughLift":
        idx = self.grid.indices_of(partition)
        return RoughLift(
            SampledPath(partition, self.base.values[idx]), self.iterated[idx], self.p
        )


def chen_residual(lift: RoughLift, s: float, u: float, t: float) -> np.ndarray:
    """A_{s,t} - A_{s,u} - A_{u,t} - S_{s,u} (x) S_{u,t} at grid times."""
    g = lift.grid
    return lift.chen_residual(g.index_of(s), g.index_of(u), g.index_of(t))


# ---------------------------------------------------------------------------
# Bracket
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BracketPath:
    """[S]_t = S_{0,t} (x) S_{0,t} - 2 Sym(A_{0,t}), a matrix-valued path."""

    grid: TimeGrid
    matrices: np.ndarray          # (n, d, d)
    cell_increments: np.ndarray   # (n-1, d, d)
    partition_sum_gap: float      # | [S]_T - sum of squared increments |

    def __post_init__(self):
        object.__setattr__(self, "matrices", _as_readonly(self.matrices))
        object.__setattr__(self, "cell_increments", _as_readonly(self.cell_increments))

    @property
    def terminal(self) -> np.ndarray:
        return self.matrices[-1]

    def increment(self, i: int, j: int) -> np.ndarray:
        return self.matrices[j] - self.matrices[i]

    def diagonal_path(self) -> SampledPath:
        return SampledPath(self.grid, np.einsum("kii->ki", self.matrices))

    def trace_terminal(self) -> float:
        return float(np.trace(self.terminal))

    def as_flat_path(self) -> SampledPath:
        n, d, _ = self.matrices.shape
        return SampledPath(self.grid, self.matrices.reshape(n, d * d))

    def defining_identity_residual(self, lift: RoughLift) -> float:
        """max over node pairs of |[S]_{s,t} - S_{s,t}(x)S_{s,t} + 2Sym(A_{s,t})|.

        Evaluated on a stratified pair sample for long grids.
        """
        n = len(self.grid)
        i, j = _pair_sample(n, cap=200_000, seed=7)
        s_incr = lift.base.values[j] - lift.base.values[i]
        a = lift.area_pairs(i, j)
        lhs = self.matrices[j] - self.matrices[i]
        rhs = np.einsum("ka,kb->kab", s_incr, s_incr) - (a + np.swapaxes(a, 1, 2))
        return float(np.max(np.abs(lhs - rhs)))


def _pair_sample(n: int, cap: int = 200_000, seed: int = 0):
    """All ordered pairs when small, otherwise a stratified sample."""
    if n * (n - 1) // 2 <= cap:
        return np.triu_indices(n, k=1)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n - 1, size=cap)
    j = rng.integers(i + 1, n)
    return i, j


def bracket(lift: RoughLift) -> BracketPath:
    """The bracket path, with the partition-sum representation cross-check."""
    incr = np.diff(lift.base.values, axis=0)
    cells = np.einsum("ka,kb->kab", incr, incr)
    running = np.concatenate(
        [np.zeros((1,) + cells.shape[1:]), np.cumsum(cells, axis=0)]
    )
    s0t = lift.base.values - lift.base.values[0]
    a0t = (
        lift.iterated
        - lift.iterated[0]
        - np.einsum("a,kb->kab", lift.base.values[0], s0t)
    )
    matrices = np.einsum("ka,kb->kab", s0t, s0t) - (a0t + np.swapaxes(a0t, 1, 2))
    gap = float(np.max(np.abs(matrices[-1] - running[-1])))
    return BracketPath(lift.grid, matrices, cells, gap)


# ---------------------------------------------------------------------------
# Controlled paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlledPath:
    """Pair (F, F') with remainder R_{s,t} = F_{s,t} - F'_s S_{s,t}."""

    lift: RoughLift
    values: np.ndarray      # (n, m)
    derivative: np.ndarray  # (n, m, d)
    q: float = None
    r: float = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        deriv = np.asarray(self.derivative, dtype=float)
        if deriv.ndim == 2:
            deriv = deriv[:, None, :]
        object.__setattr__(self, "values", _as_readonly(vals))
        object.__setattr__(self, "derivative", _as_readonly(deriv))
        n, d = self.lift.base.values.shape
        if vals.shape[0] != n or deriv.shape != (n, vals.shape[1], d):
            raise ParameterError("controlled path shapes do not match the lift")
        q, r = derivative_parameters(self.lift.p, self.q)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def grid(self) -> TimeGrid:
        return self.lift.grid

    def remainder(self, i, j) -> np.ndarray:
        i = np.asarray(i)
        j = np.asarray(j)
        s_incr = self.lift.base.values[j] - self.lift.base.values[i]
        lin = np.einsum("...md,...d->...m", self.derivative[i], s_incr)
        return self.values[j] - self.values[i] - lin

    def path(self) -> SampledPath:
        return SampledPath(self.grid, self.values)

    @staticmethod
    def from_function(lift: RoughLift, f, df, q: float = None) -> "ControlledPath":
        """Controlled path (f(S), Df(S)) from analytic evaluators.

        ``f`` maps (n, d) -> (n, m); ``df`` maps (n, d) -> (n, m, d).
        """
        s = lift.base.values
        return ControlledPath(lift, np.asarray(f(s), dtype=float), np.asarray(df(s), dtype=float), q)

    @staticmethod
    def constant(lift: RoughLift, vector) -> "ControlledPath":
        vec = np.atleast_1d(np.asarray(vector, dtype=float))
        n, d = lift.base.values.shape
        return ControlledPath(
            lift,
            np.tile(vec, (n, 1)),
            np.zeros((n, len(vec), d)),
        )

    @staticmethod
    def identity(lift: RoughLift) -> "ControlledPath":
        """The reference path S controlled by itself (derivative = Id)."""
        n, d = lift.base.values.shape
        return ControlledPath(lift, lift.base.values, np.tile(np.eye(d), (n, 1, 1)))


def _same_lift(F: ControlledPath, G: ControlledPath):
    if F.lift is not G.lift:
        raise ReferenceMismatchError("controlled paths have different reference lifts")


def product(F: ControlledPath, G: ControlledPath) -> ControlledPath:
    """Componentwise product with derivative (FG)'^{ij} = F'^{ij}G^i + F^iG'^{ij}.

    A scalar factor broadcasts against a vector one.  The remainder obeys
    R^{FG} = R^F G + F R^G + F_{s,t} G_{s,t} componentwise (exactly).
    """
    _same_lift(F, G)
    fv, gv = F.values, G.values
    fd, gd = F.derivative, G.derivative
    if F.m == 1 and G.m > 1:
        fv, fd = np.repeat(fv, G.m, axis=1), np.repeat(fd, G.m, axis=1)
    elif G.m == 1 and F.m > 1:
        gv, gd = np.repeat(gv, F.m, axis=1), np.repeat(gd, F.m, axis=1)
    elif F.m != G.m:
        raise ParameterError("product needs matching (or scalar) dimensions")
    vals = fv * gv
    deriv = fd * gv[:, :, None] + fv[:, :, None] * gd
    return ControlledPath(F.lift, vals, deriv, q=max(F.q, G.q))


def product_remainder_residual(F, G, n_pairs: int = 100, seed: int = 0) -> float:
    """max |R^{FG} - (R^F G + F R^G + F_{s,t} G_{s,t})| at sampled node pairs."""
    if F.m != G.m:
        raise ParameterError("remainder relation check needs matching dimensions")
    FG = product(F, G)
    rng = np.random.default_rng(seed)
    n = len(F.grid)
    i = rng.integers(0, n - 1, size=n_pairs)
    j = rng.integers(i + 1, n)
    rF, rG, rFG = F.remainder(i, j), G.remainder(i, j), FG.remainder(i, j)
    f_i, g_i = F.values[i], G.values[i]
    f_incr = F.values[j] - F.values[i]
    g_incr = G.values[j] - G.values[i]
    rhs = rF * g_i + f_i * rG + f_incr * g_incr
    return float(np.max(np.abs(rFG - rhs)))


# ---------------------------------------------------------------------------
# Integrals
# ---------------------------------------------------------------------------


def _partition_indices(grid: TimeGrid, partition):
    if partition is None:
        return np.arange(len(grid))
    return grid.indices_of(partition)


def _running(grid_times, idx, cell_terms) -> SampledPath:
    vals = np.concatenate([[0.0], np.cumsum(cell_terms)])
    return SampledPath(TimeGrid(grid_times[idx]), vals)


def compensated_integral(
    F: ControlledPath, lift: RoughLift, partition: TimeGrid = None
) -> SampledPath:
    """Running rough integral int F . dS via compensated left-point sums."""
    if F.lift is not lift:
        raise ReferenceMismatchError("integrand is not controlled by this lift")
    if F.m != lift.dimension:
        raise ParameterError("scalar rough integral needs m == d")
    idx = _partition_indices(lift.grid, partition)
    s = lift.base.values[idx]
    ds = np.diff(s, axis=0)
    a = lift.area_cells(idx)
    terms = np.einsum("ki,ki->k", F.values[idx[:-1]], ds) + np.einsum(
        "kij,kji->k", F.derivative[idx[:-1]], a
    )
    return _running(lift.grid.times, idx, terms)


def controlled_vs_controlled_integral(
    F: ControlledPath, G: ControlledPath, partition: TimeGrid = None
) -> SampledPath:
    """Running integral int F . dG of controlled F against controlled G."""
    _same_lift(F, G)
    if F.m != G.m:
        raise ParameterError("integrand and integrator dimensions differ")
    idx = _partition_indices(F.grid, partition)
    dg = np.diff(G.values[idx], axis=0)
    a = F.lift.area_cells(idx)
    terms = np.einsum("ki,ki->k", F.values[idx[:-1]], dg) + np.einsum(
        "kia,kib,kab->k", F.derivative[idx[:-1]], G.derivative[idx[:-1]], a
    )
    return _running(F.grid.times, idx, terms)


@dataclass(frozen=True)
class LeftPointResult:
    path: SampledPath                  # finest-level running integral (full grid)
    level_paths: tuple                 # one full-grid SampledPath per level
    report: ConvergenceReport | None


def _left_point_level(Y: np.ndarray, G: np.ndarray, times, idx) -> np.ndarray:
    """Left-point sums sum_k Y_{t_k} . G_{t_k ^ t, t_{k+1} ^ t} at all grid nodes."""
    dg_cells = G[idx[1:]] - G[idx[:-1]]
    terms = np.einsum("ki,ki->k", Y[idx[:-1]], dg_cells)
    at_nodes = np.concatenate([[0.0], np.cumsum(terms)])
    owner = np.searchsorted(idx, np.arange(len(G)), side="right") - 1
    partial = np.einsum("ki,ki->k", Y[idx[owner]], G - G[idx[owner]])
    return at_nodes[owner] + partial


def left_point_integral(
    Y: SampledPath, G: SampledPath, partitions: PartitionSequence = None
) -> LeftPointResult:
    """Classical left-point Riemann sums of int Y . dG, per partition level.

    This is the financially meaningful integral; the report tracks the
    uniform (sup over the full grid) gaps between successive levels.
    """
    if len(Y) != len(G):
        raise GridAlignmentError("integrand and integrator grids differ")
    if Y.dimension != G.dimension:
        raise ParameterError("integrand and integrator dimensions differ")
    grid = Y.grid
    if partitions is None:
        partitions = PartitionSequence((grid,))
    level_paths = []
    for level in partitions:
        idx = grid.indices_of(level)
        level_paths.append(
            SampledPath(grid, _left_point_level(Y.values, G.values, grid.times, idx))
        )
    report = None
    if len(partitions) >= 2:
        gaps = np.array(
            [
                float(np.max(np.abs(b.values - a.values)))
                for a, b in zip(level_paths, level_paths[1:])
            ]
        )
        meshes = np.array([lvl.mesh for lvl in list(partitions)[1:]])
        report = ConvergenceReport(np.arange(1, len(partitions)), meshes, gaps)
    return LeftPointResult(level_paths[-1], tuple(level_paths), report)


def young_integral(Y: SampledPath, A: SampledPath) -> SampledPath:
    """Left-point Riemann-Stieltjes sums int Y . dA on the shared grid."""
    if len(Y) != len(A) or Y.dimension != A.dimension:
        raise GridAlignmentError("Young integral needs matching grids/dimensions")
    terms = np.einsum("ki,ki->k", Y.values[:-1], np.diff(A.values, axis=0))
    vals = np.concatenate([[0.0], np.cumsum(terms)])
    return SampledPath(Y.grid, vals)


# ---------------------------------------------------------------------------
# Lifts, exponential, Ito formula
# ---------------------------------------------------------------------------


def lift_via_left_point(path: SampledPath, partitions: PartitionSequence, p: float = DEFAULT_P):
    """Lift from left-point sums on the finest partition + uniform-gap report."""
    if len(partitions) < 2:
        raise ParameterError("uniform-convergence diagnostic needs >= 2 levels")
    lift = RoughLift.from_path(path.restrict_to(partitions.finest), p)
    level_paths = [_iterated_level(path, path.grid.indices_of(lvl)) for lvl in partitions]
    gaps = np.array(
        [float(np.max(np.abs(b - a))) for a, b in zip(level_paths, level_paths[1:])]
    )
    meshes = np.array([lvl.mesh for lvl in list(partitions)[1:]])
    report = ConvergenceReport(np.arange(1, len(partitions)), meshes, gaps)
    return lift, report


def _iterated_level(path: SampledPath, idx: np.ndarray) -> np.ndarray:
    """Left-point iterated sums int S^n (x) dS at every grid node."""
    S = path.values
    cells = np.einsum("ka,kb->kab", S[idx[:-1]], S[idx[1:]] - S[idx[:-1]])
    at_nodes = np.concatenate(
        [np.zeros((1,) + cells.shape[1:]), np.cumsum(cells, axis=0)]
    )
    owner = np.searchsorted(idx, np.arange(len(S)), side="right") - 1
    partial = np.einsum("ka,kb->kab", S[idx[owner]], S - S[idx[owner]])
    return at_nodes[owner] + partial


@dataclass(frozen=True)
class RieReport:
    """Diagnostic for the Riemann-sum integrability property of a path."""

    report: ConvergenceReport
    kappa: float
    converged: bool


def rie_diagnostic(
    path: SampledPath,
    partitions: PartitionSequence,
    p: float = DEFAULT_P,
    n_starts: int = 6,
    fit_node_cap: int = 4_096,
) -> RieReport:
    """Uniform-convergence gaps of the iterated sums plus a fitted control scale.

    kappa is the smallest scale such that c = kappa * c0 dominates both the
    path increments (|S_{s,t}|^p <= c) and every level's discrete areas
    (|A^lvl_{s,t}|^{p/2} <= c), where

        c0(s, t) = ||S||_{p,[s,t]}^p  (full path, exact DP).

    Windows start at a stratified sample of coarsest-level nodes; levels
    larger than ``fit_node_cap`` are strided for the area part.  This is a
    diagnostic, never a gate; a constant path reports kappa = 0.
    """
    from .paths import _pvar_power_prefix

    _, report = lift_via_left_point(path, partitions, p)
    grid = path.grid
    coarsest = list(partitions)[0]
    coarse_idx = grid.indices_of(coarsest)
    starts = coarse_idx[
        np.unique(np.linspace(0, len(coarse_idx) - 2, num=min(n_starts, len(coarse_idx) - 1), dtype=int))
    ]
    kappa = 0.0
    for s0 in starts:
        ends = coarse_idx[coarse_idx > s0]
        pvar_prefix = _pvar_power_prefix(path.values[s0:], p)
        c0 = pvar_prefix[ends - s0]
        incr = path.values[ends] - path.values[s0]
        num = np.linalg.norm(incr, axis=1) ** p
        for level in partitions:
            idx = grid.indices_of(level)
            if len(idx) > fit_node_cap:
                stride = int(np.ceil(len(idx) / fit_node_cap))
                idx = np.union1d(idx[::stride], coarse_idx)
            lvl_path = SampledPath(TimeGrid(grid.times[idx]), path.values[idx])
            lift_lvl = RoughLift.from_path(lvl_path, p)
            pos = np.searchsorted(idx, np.concatenate([[s0], ends]))
            a = lift_lvl.area_pairs(np.full(len(ends), pos[0]), pos[1:])
            num = np.maximum(num, np.sqrt(np.einsum("kab,kab->k", a, a)) ** (p / 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(num == 0, 0.0, num / np.where(c0 == 0, np.inf, c0))
        if len(ratios):
            kappa = max(kappa, float(np.max(ratios)))
    return RieReport(report, kappa, report.converged())


def canonical_lift_of_controlled(Z: ControlledPath, partition: TimeGrid = None) -> RoughLift:
    """Canonical lift of a controlled path via pairwise cross-integrals.

    The iterated path J accumulates Z_k (x) dZ_k + Z'_k A_cell Z'_k^T per
    cell, so that the area of the result is J_t - J_s - Z_s (x) Z_{s,t}.
    """
    idx = _partition_indices(Z.grid, partition)
    vals = Z.values[idx]
    dz = np.diff(vals, axis=0)
    a = Z.lift.area_cells(idx)
    cells = np.einsum("ki,kj->kij", vals[:-1], dz) + np.einsum(
        "kia,kab,kjb->kij", Z.derivative[idx[:-1]], a, Z.derivative[idx[:-1]]
    )
    iterated = np.concatenate(
        [np.zeros((1,) + cells.shape[1:]), np.cumsum(cells, axis=0)]
    )
    return RoughLift(
        SampledPath(TimeGrid(Z.grid.times[idx]), vals), iterated, Z.lift.p
    )


def rough_exponential(lift: RoughLift, partition: TimeGrid = None):
    """V = exp(X - [X]/2) for a one-dimensional lift with X_0 = 0.

    Returns (V, residual) with residual = sup_t |V_t - 1 - int_0^t V dX|,
    the integral taken as a compensated sum with derivative V' = V.
    """
    if lift.dimension != 1:
        raise ParameterError("rough exponential is defined for 1-d lifts")
    x = lift.base.values[:, 0]
    if x[0] != 0.0:
        warnings.warn("shifting path to start at 0 for the rough exponential")
        shifted = SampledPath(lift.grid, x - x[0])
        lift = RoughLift(shifted, lift.iterated, lift.p)
        x = shifted.values[:, 0]
    br = bracket(lift).matrices[:, 0, 0]
    v = np.exp(x - 0.5 * br)
    V = SampledPath(lift.grid, v)
    vc = ControlledPath(lift, v[:, None], v[:, None, None])
    integ = compensated_integral(vc, lift, partition)
    idx = _partition_indices(lift.grid, partition)
    residual = float(np.max(np.abs(v[idx] - 1.0 - integ.values[:, 0])))
    return V, residual


def ito_formula_residual(
    g, dg, d2g, F: ControlledPath, Gamma: SampledPath = None, partition: TimeGrid = None
) -> float:
    """sup_t of the pathwise change-of-variable defect for g(F_t).

    Checks g(F_t) - g(F_0) = int Dg(F) F' dS + int Dg(F) dGamma
    + (1/2) int D^2 g(F) (F' (x) F') d[S].  The integrand derivative uses
    only the variation of F itself (the fixtures all have constant F').
    """
    lift = F.lift
    idx = _partition_indices(F.grid, partition)
    fv = F.values
    dgf = np.asarray(dg(fv), dtype=float)          # (n, m)
    d2gf = np.asarray(d2g(fv), dtype=float)        # (n, m, m)
    y = np.einsum("ki,kij->kj", dgf, F.derivative)  # (n, d)
    y_deriv = np.einsum("kil,klj,kid->kjd", d2gf, F.derivative, F.derivative)
    Y = ControlledPath(lift, y, y_deriv)
    main = compensated_integral(Y, lift, partition).values[:, 0]
    br_cells = bracket(lift).cell_increments
    cell_groups = np.add.reduceat(br_cells, idx[:-1], axis=0)
    second = np.einsum(
        "kij,kia,kjb,kab->k",
        d2gf[idx[:-1]],
        F.derivative[idx[:-1]],
        F.derivative[idx[:-1]],
        cell_groups,
    )
    second = np.concatenate([[0.0], np.cumsum(0.5 * second)])
    drift = np.zeros(len(idx))
    if Gamma is not None:
        dgam = Gamma.values[idx[1:]] - Gamma.values[idx[:-1]]
        terms = np.einsum("ki,ki->k", dgf[idx[:-1]], dgam)
        drift = np.concatenate([[0.0], np.cumsum(terms)])
    lhs = np.asarray(g(fv[idx]), dtype=float).reshape(-1)
    return float(np.max(np.abs(lhs - lhs[0] - main - drift - second)))


# ---------------------------------------------------------------------------
# Finite mixtures, Fubini and associativity checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite support with non-negative weights summing to one."""

    support: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(self.support))
        w = _as_readonly(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "weights", w)
        if len(self.support) == 0:
            raise MeasureError("empty support")
        if len(self.support) != len(w):
            raise MeasureError("weights do not match the support")
        if np.any(w < 0) or abs(float(np.sum(w)) - 1.0) > EXACT_TOL:
            raise MeasureError("weights must be non-negative and sum to 1")

    @staticmethod
    def uniform(support) -> "DiscreteMeasure":
        support = tuple(support)
        n = len(support)
        if n == 0:
            raise MeasureError("empty support")
        return DiscreteMeasure(support, np.full(n, 1.0 / n))


def mixture_integral_check(members: DiscreteMeasure, lift: RoughLift) -> float:
    """Gap between int (sum w_i K_i) dS and sum w_i int K_i dS at T."""
    paths = list(members.support)
    for K in paths:
        if K.lift is not lift:
            raise ReferenceMismatchError("mixture member has a different lift")
    w = members.weights
    mixed_vals = sum(wi * K.values for wi, K in zip(w, paths))
    mixed_deriv = sum(wi * K.derivative for wi, K in zip(w, paths))
    mixed = ControlledPath(lift, mixed_vals, mixed_deriv)
    lhs = compensated_integral(mixed, lift).values
    rhs = sum(
        wi * compensated_integral(K, lift).values for wi, K in zip(w, paths)
    )
    return float(np.max(np.abs(lhs - rhs)))


def integral_as_controlled(F: ControlledPath, G: ControlledPath) -> ControlledPath:
    """(int F dG, F G') as a scalar controlled path on the full grid."""
    z = controlled_vs_controlled_integral(F, G)
    z_deriv = np.einsum("ki,kib->kb", F.values, G.derivative)
    return ControlledPath(F.lift, z.values, z_deriv[:, None, :])


def associativity_check(
    Y: ControlledPath, F: ControlledPath, G: ControlledPath, partition: TimeGrid = None
) -> float:
    """Gap between int Y dZ (Z = int F dG built on the full grid) and int YF dG."""
    if Y.m != 1:
        raise ParameterError("outer integrand must be scalar")
    _same_lift(Y, F)
    _same_lift(F, G)
    Z = integral_as_controlled(F, G)
    lhs = controlled_vs_controlled_integral(Y, Z, partition).values
    YF = product(Y, F)
    rhs = controlled_vs_controlled_integral(YF, G, partition).values
    return float(np.max(np.abs(lhs - rhs)))

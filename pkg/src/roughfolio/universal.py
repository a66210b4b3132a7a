"""Universal (mixture) portfolios over finite function families.

Families of strategy-generating functions are discretized to finite
coefficient grids over an affine-plus-quadratic basis on the simplex.
Member relative wealths all run through one shared linear recursion

    V_{k+1} = V_k (1 + z_k . dmu_k + z'_k : dA_k),      z = pi/mu,

(dA = weights-lift area over the cell, zero on the finest grid), which
makes the wealth of the mixture portfolio exactly the mixture of member
wealths under a fixed member ordering.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    InstabilityError,
    MeasureError,
    ParameterError,
)
from .market import (
    MarketPath,
    PortfolioPath,
    functionally_controlled,
    functionally_generated,
    log_relative_wealth,
    portfolio_over_weights,
)
from .paths import (
    ControlFunction,
    SampledPath,
    TimeGrid,
    _pvar_power_prefix,
    p_variation,
    two_param_p_variation_power,
)
from .rough import ControlledPath, _pair_sample, derivative_parameters

EXPLOSION_BOUND = 1e6
SIMPLEX_MESH_POINTS = 21  # per-axis resolution for sup-norm proxies
PAIR_NODE_CAP = 2_000     # all-pairs admissibility up to this many nodes


# ---------------------------------------------------------------------------
# Simplex sample mesh and coefficient-based function members
# ---------------------------------------------------------------------------


def simplex_mesh(d: int, points_per_axis: int = SIMPLEX_MESH_POINTS) -> np.ndarray:
    """Lattice points of the closed simplex, (points_per_axis-1) subdivisions."""
    m = points_per_axis - 1
    pts = [
        np.array(c + (m - sum(c),), dtype=float) / m
        for c in itertools.product(range(m + 1), repeat=d - 1)
        if sum(c) <= m
    ]
    return np.array(pts)


@dataclass(frozen=True)
class ControlledMember:
    """F(x)^i = a_i + sum_j B_ij x_j + sum_j C_ij x_j^2."""

    a: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @staticmethod
    def from_coefficients(theta, d):
        theta = np.asarray(theta, dtype=float)
        if len(theta) != d * (1 + 2 * d):
            raise ParameterError("coefficient vector has wrong length")
        a = theta[:d]
        B = theta[d : d + d * d].reshape(d, d)
        C = theta[d + d * d :].reshape(d, d)
        return ControlledMember(a, B, C)

    def coefficients(self):
        return np.concatenate([self.a, self.B.ravel(), self.C.ravel()])

    def value(self, x):
        return self.a + x @ self.B.T + (x**2) @ self.C.T

    def jacobian(self, x):
        return self.B[None, :, :] + 2 * self.C[None, :, :] * x[:, None, :]

    def c2_norm(self, mesh):
        v = np.max(np.abs(self.value(mesh)))
        j = np.max(np.abs(self.jacobian(mesh)))
        h = 2 * np.max(np.abs(self.C))
        return max(v, j, h)

    def portfolio(self, market: MarketPath) -> PortfolioPath:
        return functionally_controlled(market, self.value, self.jacobian)


@dataclass(frozen=True)
class GeneratedMember:
    """G(x) = exp(t0 + t . x + sum_j q_j x_j^2), strictly positive."""

    t0: float
    t: np.ndarray
    q: np.ndarray

    @staticmethod
    def from_coefficients(theta, d):
        theta = np.asarray(theta, dtype=float)
        if len(theta) != 1 + 2 * d:
            raise ParameterError("coefficient vector has wrong length")
        return GeneratedMember(float(theta[0]), theta[1 : 1 + d], theta[1 + d :])

    def coefficients(self):
        return np.concatenate([[self.t0], self.t, self.q])

    def log_value(self, x):
        return self.t0 + x @ self.t + (x**2) @ self.q

    def value(self, x):
        return np.exp(self.log_value(x))

    def log_gradient(self, x):
        return self.t[None, :] + 2 * self.q[None, :] * x

    def gradient(self, x):
        return self.value(x)[:, None] * self.log_gradient(x)

    def hessian(self, x):
        g = self.log_gradient(x)
        outer = np.einsum("ki,kj->kij", g, g)
        n, d = x.shape
        diag = np.zeros((n, d, d))
        idx = np.arange(d)
        diag[:, idx, idx] = 2 * self.q
        return self.value(x)[:, None, None] * (outer + diag)

    def c2_norm(self, mesh):
        v = np.abs(self.value(mesh))
        return max(
            float(np.max(v)),
            float(np.max(np.abs(self.gradient(mesh)))),
            float(np.max(np.abs(self.hessian(mesh)))),
        )

    def positive_floor(self, mesh):
        return float(np.min(self.value(mesh)))

    def portfolio(self, market: MarketPath) -> PortfolioPath:
        return functionally_generated(market, self.value, self.gradient, self.hessian)


@dataclass(frozen=True)
class EquationMember:
    """Affine matrix field f(y) = M0 + sum_k y_k M_k driving dY = f(Y) dmu."""

    M0: np.ndarray
    Mk: np.ndarray  # (d, d, d): Mk[k] multiplies y_k
    start: np.ndarray

    @staticmethod
    def from_coefficients(theta, d):
        theta = np.asarray(theta, dtype=float)
        if len(theta) != d * d * (1 + d) + d:
            raise ParameterError("coefficient vector has wrong length")
        M0 = theta[: d * d].reshape(d, d)
        Mk = theta[d * d : d * d * (1 + d)].reshape(d, d, d)
        start = theta[d * d * (1 + d) :]
        return EquationMember(M0, Mk, start)

    def coefficients(self):
        return np.concatenate([self.M0.ravel(), self.Mk.ravel(), self.start])

    def value(self, y):
        return self.M0 + np.einsum("k,kij->ij", y, self.Mk)

    def derivative(self, y):
        # df[i, j, l] = d f^{ij} / d y^l
        return np.transpose(self.Mk, (1, 2, 0))

    def c2_norm(self, mesh):
        vals = np.max(
            np.abs(self.M0[None] + np.einsum("nk,kij->nij", mesh, self.Mk))
        )
        return max(float(vals), float(np.max(np.abs(self.Mk))))

    def portfolio(self, market: MarketPath, partitions=None):
        pi, _ = controlled_equation_portfolio(
            market, self.value, self.derivative, self.start, partitions
        )
        return pi


_MEMBER_TYPES = {
    "controlled": ControlledMember,
    "generated": GeneratedMember,
    "equation": EquationMember,
}


@dataclass(frozen=True)
class FunctionFamily:
    """A finite coefficient grid of strategy generators with a C^2-norm cap."""

    kind: str
    dimension: int
    coefficients: np.ndarray  # (n_members, n_coeffs)
    K: float
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in _MEMBER_TYPES:
            raise ParameterError(f"unknown family kind {self.kind!r}")
        coeffs = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        object.__setattr__(self, "coefficients", coeffs)
        if coeffs.shape[0] == 0:
            raise MeasureError("empty family grid")
        mesh = simplex_mesh(self.dimension)
        for i, member in enumerate(self.members()):
            if member.c2_norm(mesh) > self.K:
                raise ParameterError(f"member {i} exceeds the C2-norm cap {self.K}")
            if self.kind == "generated" and member.positive_floor(mesh) < 1.0 / self.K:
                raise ParameterError(f"member {i} dips below the positivity floor 1/K")

    def __len__(self):
        return len(self.coefficients)

    def member(self, i: int):
        return _MEMBER_TYPES[self.kind].from_coefficients(
            self.coefficients[i], self.dimension
        )

    def members(self):
        return [self.member(i) for i in range(len(self))]

    def portfolios(self, market: MarketPath):
        return [m.portfolio(market) for m in self.members()]

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "basis": _BASIS_DESCRIPTIONS[self.kind],
                "dimension": self.dimension,
                "coefficients": self.coefficients.tolist(),
                "K": self.K,
                "alpha": self.alpha,
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "FunctionFamily":
        doc = json.loads(text)
        return FunctionFamily(
            kind=doc["kind"],
            dimension=int(doc["dimension"]),
            coefficients=np.asarray(doc["coefficients"], dtype=float),
            K=float(doc["K"]),
            alpha=float(doc.get("alpha", 1.0)),
        )

    @staticmethod
    def controlled_grid(d: int, scales, directions=None, K: float = 10.0) -> "FunctionFamily":
        """Grid over F(x) = s1 * (x_2, 0, ..) + s2 * (0, x_3, ..) style members.

        ``scales`` is an iterable of scalar knob values; the default two
        directions rotate the first two coordinates, giving len(scales)^2
        members.
        """
        if directions is None:
            m1 = np.zeros((d, d))
            m1[0, 1 % d] = 1.0
            m2 = np.zeros((d, d))
            m2[1 % d, 2 % d] = 1.0
            directions = (m1, m2)
        coeffs = []
        for s1 in scales:
            for s2 in scales:
                member = ControlledMember(
                    np.zeros(d), s1 * directions[0] + s2 * directions[1], np.zeros((d, d))
                )
                coeffs.append(member.coefficients())
        return FunctionFamily("controlled", d, np.array(coeffs), K)


_BASIS_DESCRIPTIONS = {
    "controlled": "per-component affine plus diagonal-quadratic on the simplex",
    "generated": "exp of (affine plus diagonal-quadratic) on the simplex",
    "equation": "affine matrix field driving a controlled equation",
}


# ---------------------------------------------------------------------------
# Shared member wealth recursion
# ---------------------------------------------------------------------------


def wealth_increments(pi: PortfolioPath, market: MarketPath, partition: TimeGrid = None):
    """Per-cell increments z . dmu + z' : dA of the linear wealth recursion."""
    z = portfolio_over_weights(pi, market)
    idx = (
        np.arange(len(market.grid))
        if partition is None
        else market.grid.indices_of(partition)
    )
    dmu = np.diff(market.weights.values[idx], axis=0)
    incr = np.einsum("ki,ki->k", z.values[idx[:-1]], dmu)
    if partition is not None:
        area = market.weights_lift.area_cells(idx)
        incr = incr + np.einsum("kia,kai->k", z.derivative[idx[:-1]], area)
    return incr


def relative_wealth_curve(
    pi: PortfolioPath, market: MarketPath, partition: TimeGrid = None
) -> np.ndarray:
    """V path from the shared recursion; raises on a wealth wipe-out."""
    incr = wealth_increments(pi, market, partition)
    if np.any(incr <= -1.0):
        raise InstabilityError("wealth recursion hit a non-positive factor")
    return np.exp(np.concatenate([[0.0], np.cumsum(np.log1p(incr))]))


def member_wealth_curves(portfolios, market, partition=None) -> np.ndarray:
    return np.array(
        [relative_wealth_curve(pi, market, partition) for pi in portfolios]
    )


def _measure_weights(measure, n_members: int) -> np.ndarray:
    if measure is None:
        return np.full(n_members, 1.0 / n_members)
    w = np.asarray(getattr(measure, "weights", measure), dtype=float)
    if len(w) != n_members:
        raise MeasureError("measure support does not match the family grid")
    if np.any(w < 0) or abs(float(np.sum(w)) - 1.0) > 1e-12:
        raise MeasureError("weights must be non-negative and sum to 1")
    return w


@dataclass(frozen=True)
class UniversalPortfolioResult:
    portfolio: PortfolioPath
    member_portfolios: tuple
    member_wealths: np.ndarray   # (n_members, n_nodes)
    weights: np.ndarray
    mixture_wealth: np.ndarray   # wealth of the mixed portfolio via the recursion

    @property
    def mixture_identity_gap(self) -> float:
        averaged = self.weights @ self.member_wealths
        return float(np.max(np.abs(self.mixture_wealth - averaged)))


def universal_portfolio(
    family: FunctionFamily, measure, market: MarketPath, partition: TimeGrid = None
) -> UniversalPortfolioResult:
    """Wealth-weighted mixture portfolio over the family grid.

    pi^nu_t = sum_i w_i pi_{i,t} V_{i,t} / sum_i w_i V_{i,t}; the controlled
    derivative is mixed with the same wealth weights, so the shared
    recursion reproduces the mixture wealth exactly (the member ordering is
    fixed, keeping the reduction bitwise-reproducible).
    """
    if len(family) == 0:
        raise MeasureError("empty family")
    w = _measure_weights(measure, len(family))
    portfolios = family.portfolios(market)
    V = member_wealth_curves(portfolios, market, partition)
    idx = (
        np.arange(len(market.grid))
        if partition is None
        else market.grid.indices_of(partition)
    )
    wv = w[:, None] * V                      # (members, nodes)
    norm = np.sum(wv, axis=0)
    mix = wv / norm[None, :]
    pi_vals = np.einsum(
        "mk,mki->ki", mix, np.stack([pi.values[idx] for pi in portfolios])
    )
    pi_deriv = np.einsum(
        "mk,mkij->kij", mix, np.stack([pi.derivative[idx] for pi in portfolios])
    )
    if partition is None:
        mixed = PortfolioPath(
            ControlledPath(market.weights_lift, pi_vals, pi_deriv), kind="universal"
        )
        mixture_wealth = relative_wealth_curve(mixed, market)
    else:
        # run the shared recursion directly so the mixture sees the same
        # fine-lift area cells as the members
        recip = 1.0 / market.weights.values[idx]
        z_vals = pi_vals * recip
        z_deriv = _mixture_z_derivative(portfolios, mix, market, idx)
        dmu = np.diff(market.weights.values[idx], axis=0)
        incr = np.einsum("ki,ki->k", z_vals[:-1], dmu) + np.einsum(
            "kia,kai->k", z_deriv[:-1], market.weights_lift.area_cells(idx)
        )
        if np.any(incr <= -1.0):
            raise InstabilityError("wealth recursion hit a non-positive factor")
        mixture_wealth = np.exp(np.concatenate([[0.0], np.cumsum(np.log1p(incr))]))
        sub = MarketPath.from_prices(
            market.prices.restrict_to(partition), market.price_lift.p
        )
        mixed = PortfolioPath(
            ControlledPath(sub.weights_lift, pi_vals, pi_deriv), kind="universal"
        )
    return UniversalPortfolioResult(mixed, tuple(portfolios), V, w, mixture_wealth)


def _mixture_z_derivative(portfolios, mix, market, idx):
    """Wealth-weighted mixture of the members' (pi/mu)' paths at partition nodes."""
    zs = np.stack(
        [
            portfolio_over_weights(pi, market).derivative[idx]
            for pi in portfolios
        ]
    )
    return np.einsum("mk,mkij->kij", mix, zs)


def mixture_wealth_identity(
    family: FunctionFamily, measure, market: MarketPath, partition: TimeGrid = None
) -> float:
    """Max-abs gap between the mixed recursion wealth and sum_i w_i V_i."""
    return universal_portfolio(family, measure, market, partition).mixture_identity_gap


# ---------------------------------------------------------------------------
# Best retrospective member
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BestRetrospective:
    index: int
    coefficients: np.ndarray
    terminal_wealth: float
    refined: bool = False


def best_retrospective(
    family: FunctionFamily,
    market: MarketPath,
    T: float,
    refine: bool = False,
    refine_step: float = 0.25,
    refine_halvings: int = 3,
) -> BestRetrospective:
    """argmax of V^pi_T over the grid; ties break at the lowest index.

    With ``refine`` one coordinate-descent sweep (step halving, C2 cap
    respected) polishes the winning coefficient vector.
    """
    i_t = market.grid.nearest_index(T)
    V = member_wealth_curves(family.portfolios(market), market)[:, i_t]
    best = int(np.argmax(V))  # argmax returns the first (lowest) maximizer
    best_coeffs = family.coefficients[best].copy()
    best_v = float(V[best])
    if not refine:
        return BestRetrospective(best, best_coeffs, best_v)
    mesh = simplex_mesh(family.dimension)
    member_type = _MEMBER_TYPES[family.kind]

    def terminal(coeffs):
        member = member_type.from_coefficients(coeffs, family.dimension)
        if member.c2_norm(mesh) > family.K:
            return -np.inf
        pi = member.portfolio(market)
        return float(relative_wealth_curve(pi, market)[i_t])

    for c in range(len(best_coeffs)):
        step = refine_step
        for _ in range(refine_halvings):
            improved = False
            for sign in (+1.0, -1.0):
                trial = best_coeffs.copy()
                trial[c] += sign * step
                v = terminal(trial)
                if v > best_v:
                    best_coeffs, best_v, improved = trial, v, True
                    break
            if not improved:
                step /= 2.0
    return BestRetrospective(best, best_coeffs, best_v, refined=True)


# ---------------------------------------------------------------------------
# Seminorms, admissibility, metric
# ---------------------------------------------------------------------------


def _matrix_pvar_power_prefix(mats: np.ndarray, p: float) -> np.ndarray:
    flat = mats.reshape(len(mats), -1)
    return _pvar_power_prefix(flat, p)


def seminorm(
    pi: PortfolioPath, market: MarketPath, T: float, qprime: float = None
) -> float:
    """|z_0| + |z'_0| + ||z'||_{q',[0,T]} + ||R^z||_{r',[0,T]} for z = pi/mu."""
    p = market.weights_lift.p
    q, _ = derivative_parameters(p)
    if qprime is not None and qprime <= q:
        raise ParameterError("seminorm exponent must exceed the derivative exponent")
    z = portfolio_over_weights(pi, market)
    return _seminorm_of_controlled(z, market, T, qprime)


@dataclass(frozen=True)
class AdmissibilityReport:
    initial_bound: float
    derivative_ratio: float
    remainder_ratio: float
    M: float
    admissible: bool


def admissibility_check(
    pi: PortfolioPath,
    market: MarketPath,
    M: float,
    control: ControlFunction,
    q: float = None,
) -> AdmissibilityReport:
    """Evaluate the defining bounds of the admissible class over grid pairs.

    Uses all pairs of the control grid (stratified sampling is delegated to
    the control-table construction for long paths).
    """
    p = market.weights_lift.p
    q, r = derivative_parameters(p, q)
    z = portfolio_over_weights(pi, market)
    idx = market.grid.indices_of(control.grid)
    i, j = _pair_sample(len(idx), cap=PAIR_NODE_CAP**2 // 2)
    gi, gj = idx[i], idx[j]
    dpr = z.derivative[gj] - z.derivative[gi]
    num_d = np.sqrt(np.einsum("kmd,kmd->k", dpr, dpr)) ** q
    mu = market.weights.values
    lin = np.einsum("kmd,kd->km", z.derivative[gi], mu[gj] - mu[gi])
    rem = z.values[gj] - z.values[gi] - lin
    num_r = np.linalg.norm(rem, axis=1) ** r
    c = control.table[i, j]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_d = np.where(num_d == 0, 0.0, num_d / np.where(c == 0, np.inf, c))
        ratio_r = np.where(num_r == 0, 0.0, num_r / np.where(c == 0, np.inf, c))
        bad = (c == 0) & ((num_d > 0) | (num_r > 0))
    head = float(np.linalg.norm(z.values[0])) + float(np.linalg.norm(z.derivative[0]))
    rd = float(np.max(ratio_d)) if len(ratio_d) else 0.0
    rr = float(np.max(ratio_r)) if len(ratio_r) else 0.0
    if np.any(bad):
        rd = np.inf
    ok = head <= M and rd + rr <= 1.0
    return AdmissibilityReport(head, rd, rr, M, ok)


def fit_control_scale(
    pi: PortfolioPath, market: MarketPath, control: ControlFunction, q: float = None
) -> float:
    """Smallest C with sup |z'|^q/(C c) + sup |R^z|^r/(C c) <= 1 on grid pairs."""
    rep = admissibility_check(pi, market, M=np.inf, control=control, q=q)
    return rep.derivative_ratio + rep.remainder_ratio


@dataclass(frozen=True)
class PortfolioMetric:
    """d_beta(pi, phi) = sup_N p_N(pi - phi) / (beta_N gamma_N), N = 1..horizon."""

    market: MarketPath
    M: float
    control: ControlFunction
    qprime: float = None
    beta: tuple = None  # beta_N schedule; defaults to beta_N = N

    def horizons(self):
        t_end = self.market.grid.horizon
        return [n for n in range(1, int(math.floor(t_end)) + 1)]

    def gamma(self, N: int) -> float:
        p = self.market.weights_lift.p
        q, r = derivative_parameters(p)
        c0 = self.control(0.0, self._snap_control(N))
        return 1.0 + self.M + c0 ** (1 / q) + c0 ** (1 / r)

    def _snap_control(self, N: float) -> float:
        times = self.control.grid.times
        return float(times[np.argmin(np.abs(times - N))])

    def _snap(self, N: float) -> float:
        times = self.market.grid.times
        return float(times[np.argmin(np.abs(times - N))])

    def __call__(self, pi: PortfolioPath, phi: PortfolioPath) -> float:
        horizons = self.horizons()
        if not horizons:
            raise ParameterError("metric needs a horizon of at least 1 time unit")
        z1 = portfolio_over_weights(pi, self.market)
        z2 = portfolio_over_weights(phi, self.market)
        diff = ControlledPath(
            self.market.weights_lift,
            z1.values - z2.values,
            z1.derivative - z2.derivative,
        )
        out = 0.0
        for k, N in enumerate(horizons):
            beta_n = self.beta[k] if self.beta is not None else float(N)
            p_n = _seminorm_of_controlled(
                diff, self.market, self._snap(N), self.qprime
            )
            out = max(out, p_n / (beta_n * self.gamma(N)))
        return out


def _seminorm_of_controlled(z: ControlledPath, market: MarketPath, T, qprime):
    p = market.weights_lift.p
    q, _ = derivative_parameters(p)
    if qprime is None:
        qprime = q + 0.5
    rprime = 1.0 / (1.0 / p + 1.0 / qprime)
    i_t = market.grid.index_of(T)
    head = float(np.linalg.norm(z.values[0])) + float(np.linalg.norm(z.derivative[0]))
    deriv_var = _matrix_pvar_power_prefix(z.derivative[: i_t + 1], qprime)[-1] ** (
        1 / qprime
    )
    mu = market.weights.values

    def rem_row(j):
        lin = np.einsum("kmd,d->km", z.derivative[:j], mu[j]) - np.einsum(
            "kmd,kd->km", z.derivative[:j], mu[:j]
        )
        rem = z.values[j] - z.values[:j] - lin
        return np.linalg.norm(rem, axis=1)

    rem_var = two_param_p_variation_power(rem_row, i_t + 1, rprime) ** (1 / rprime)
    return head + float(deriv_var) + float(rem_var)


def metric_d_beta(
    pi: PortfolioPath,
    phi: PortfolioPath,
    market: MarketPath,
    M: float,
    control: ControlFunction,
    beta=None,
    qprime: float = None,
) -> float:
    return PortfolioMetric(market, M, control, qprime, beta)(pi, phi)


# ---------------------------------------------------------------------------
# Growth clock and Cover-gap trajectory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClockValues:
    T: float
    mu_p_variation: float
    area_p_variation: float
    bracket_trace: float
    xi: float
    lam: float

    @staticmethod
    def compute(market: MarketPath, T: float, node_cap: int = 8_192) -> "ClockValues":
        lift = market.weights_lift
        i_t = market.grid.nearest_index(T)
        T = float(market.grid.times[i_t])
        mu_pv = p_variation(market.weights, lift.p, (0.0, T), node_cap=node_cap)
        area_pv = lift.area_p_variation((0.0, T), node_cap=node_cap)
        incr = np.diff(market.weights.values[: i_t + 1], axis=0)
        trace = float(np.sum(incr**2))
        xi = mu_pv + area_pv + trace
        lam = (1.0 + mu_pv**2) * xi
        return ClockValues(T, mu_pv, area_pv, trace, xi, lam)


def growth_clock(market: MarketPath, T: float, node_cap: int = 8_192) -> ClockValues:
    """xi_T = ||mu||_p + ||A^mu||_{p/2} + sum_i [mu]^{ii}_T and the scaled clock."""
    return ClockValues.compute(market, T, node_cap)


@dataclass(frozen=True)
class CoverGapTrajectory:
    horizons: np.ndarray
    log_v_star: np.ndarray
    log_v_universal: np.ndarray
    lam: np.ndarray
    gap_scaled: np.ndarray
    winners: np.ndarray

    @property
    def decreasing_trend(self) -> bool:
        slope = np.polyfit(self.horizons, self.gap_scaled, 1)[0]
        return bool(self.gap_scaled[-1] < self.gap_scaled[0] and slope < 0)


def cover_gap_trajectory(
    family: FunctionFamily,
    measure,
    market: MarketPath,
    horizons,
    node_cap: int = 8_192,
) -> CoverGapTrajectory:
    """T -> (log V*_T - log V^{pi^nu}_T) / lambda(T) over the horizon grid."""
    res = universal_portfolio(family, measure, market)
    V = res.member_wealths
    w = res.weights
    out_T, lv_star, lv_uni, lams, winners = [], [], [], [], []
    for T in horizons:
        i_t = market.grid.nearest_index(T)
        vt = V[:, i_t]
        best = int(np.argmax(vt))
        star = float(np.log(vt[best]))
        uni = float(np.log(np.sum(w * vt)))
        lam = ClockValues.compute(market, T, node_cap).lam
        out_T.append(T)
        lv_star.append(star)
        lv_uni.append(uni)
        lams.append(lam)
        winners.append(best)
    out_T, lv_star, lv_uni, lams = map(
        np.asarray, (out_T, lv_star, lv_uni, lams)
    )
    return CoverGapTrajectory(
        out_T, lv_star, lv_uni, lams, (lv_star - lv_uni) / lams, np.asarray(winners)
    )


# ---------------------------------------------------------------------------
# The explicit slowly-decaying oscillation path
# ---------------------------------------------------------------------------


def nontriviality_path(
    lam: float, n_periods: int, nodes_per_period: int = 256, p: float = 2.5
) -> SampledPath:
    """Three-asset weights rotating around (1/3, 1/3, 1/3) with k^{-lam} amplitude.

    On [2 pi (k-1), 2 pi k) the components are
        (1/3)(1 + k^-lam (1 - cos t) / 3),
        (1/3)(1 + k^-lam sin t / 3),
        (1/3)(1 + k^-lam (cos t - 1 - sin t) / 3);
    the perturbations sum to zero, so the path stays on the simplex exactly.
    """
    if not (1.0 / p < lam < 0.5):
        raise ParameterError(f"decay exponent must lie in (1/p, 1/2) = ({1/p}, 0.5)")
    if n_periods < 1 or nodes_per_period < 8:
        raise ParameterError("need at least one period and 8 nodes per period")
    m = nodes_per_period
    t = np.arange(n_periods * m + 1) * (2 * np.pi / m)
    k = np.minimum(t // (2 * np.pi) + 1, n_periods).astype(float)
    a = k ** (-lam) / 3.0
    c1 = (1 + a * (1 - np.cos(t))) / 3.0
    c2 = (1 + a * np.sin(t)) / 3.0
    c3 = (1 + a * (np.cos(t) - 1 - np.sin(t))) / 3.0
    return SampledPath(TimeGrid(t), np.stack([c1, c2, c3], axis=1))


# ---------------------------------------------------------------------------
# Gradient-type bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradientBoundReport:
    log_v_terminal: float
    endpoint_difference: float
    sup_log_v: float
    bound: float
    within_bound: bool
    endpoint_gaps: np.ndarray


def gradient_bound_check(
    market: MarketPath,
    potential,
    gradient,
    K: float,
    partitions=None,
    bracket_tol: float = 0.1,
    mesh_points: int = SIMPLEX_MESH_POINTS,
) -> GradientBoundReport:
    """For F = grad(f) on a (numerically) finite-variation market:
    log V_T ~ f(mu_T) - f(mu_0) under refinement and sup_t log V <= 2K.

    Requires ||grad f||_inf <= K on the simplex sample mesh and a
    negligible weights bracket; violations raise parameter errors.
    """
    d = market.dimension
    mesh = simplex_mesh(d, mesh_points)
    grad_sup = float(np.max(np.linalg.norm(np.asarray(gradient(mesh)), axis=1)))
    if grad_sup > K * (1 + 1e-9):
        raise ParameterError(f"gradient sup-norm {grad_sup:.3g} exceeds K = {K}")
    mu_all = market.weights.values
    trace = float(np.sum(np.diff(mu_all, axis=0) ** 2))
    if trace > bracket_tol * 1e-3:
        # a finite-variation bracket halves under 2x coarsening; a diffusive
        # one persists -- use the ratio to tell a sampling artifact from
        # genuine quadratic variation
        trace_coarse = float(np.sum(np.diff(mu_all[::2], axis=0) ** 2))
        if trace_coarse < 1.5 * trace or trace > bracket_tol:
            raise ParameterError(
                f"weights bracket trace {trace:.3g} does not vanish under "
                "refinement; the market is not of finite variation"
            )

    def f(x):
        return np.asarray(gradient(x), dtype=float)

    # only (f, grad f) are supplied, so the derivative path is set to zero:
    # every integral below then reduces to plain left-point Riemann sums,
    # which the left-point representation of the integral makes legitimate
    def df_zero(x):
        return np.zeros((len(x), d, d))

    pi = functionally_controlled(market, f, df_zero, kind="gradient")
    levels = partitions if partitions is not None else [market.grid]
    gaps = []
    mu = market.weights.values
    fe = np.asarray(potential(mu), dtype=float)
    for level in levels:
        lv = log_relative_wealth(pi, market, level).values[:, 0]
        idx = market.grid.indices_of(level)
        gaps.append(float(abs(lv[-1] - (fe[idx[-1]] - fe[idx[0]]))))
    lv_full = log_relative_wealth(pi, market).values[:, 0]
    sup_lv = float(np.max(lv_full))
    return GradientBoundReport(
        log_v_terminal=float(lv_full[-1]),
        endpoint_difference=float(fe[-1] - fe[0]),
        sup_log_v=sup_lv,
        bound=2 * K,
        within_bound=sup_lv <= 2 * K + 1e-6,
        endpoint_gaps=np.asarray(gaps),
    )


def witness_log_wealth(market: MarketPath) -> SampledPath:
    """log V of the non-gradient witness F(x) = (x_2, 0, 0) on a 3-asset market."""
    if market.dimension != 3:
        raise ParameterError("the witness strategy lives on a 3-asset market")

    def f(x):
        return np.stack([x[:, 1], np.zeros(len(x)), np.zeros(len(x))], axis=1)

    mat = np.zeros((3, 3))
    mat[0, 1] = 1.0

    def df(x):
        return np.tile(mat, (len(x), 1, 1))

    pi = functionally_controlled(market, f, df, kind="witness")
    return log_relative_wealth(pi, market)


# ---------------------------------------------------------------------------
# Controlled-equation portfolios
# ---------------------------------------------------------------------------


def _davie_solve(mu_vals, area_cells, f, df, y0):
    n = len(mu_vals)
    d = mu_vals.shape[1]
    y = np.empty((n, d))
    y[0] = y0
    fy = np.empty((n, d, d))
    for k in range(n - 1):
        fk = f(y[k])
        fy[k] = fk
        step = fk @ (mu_vals[k + 1] - mu_vals[k])
        if area_cells is not None:
            dfk = df(y[k])
            step = step + np.einsum("ijl,lk,kj->i", dfk, fk, area_cells[k])
        y[k + 1] = y[k] + step
        if np.max(np.abs(y[k + 1])) > EXPLOSION_BOUND:
            raise InstabilityError("controlled equation solution exploded")
    fy[-1] = f(y[-1])
    return y, fy


def controlled_equation_portfolio(
    market: MarketPath, f, df, start, partitions=None
):
    """Solve dY = f(Y) dmu with the second-order scheme and wrap the portfolio
    pi = mu (Y + (1 - mu . Y) 1).

    ``f(y) -> (d, d)``, ``df(y) -> (d, d, d)`` with df[i,j,l] = df^{ij}/dy^l.
    Returns (portfolio, report) where the report holds the sup gaps of the
    solution across partition levels (None with a single level).
    """
    from .rough import ConvergenceReport

    start = np.asarray(start, dtype=float)
    mu = market.weights.values
    grid = market.grid
    # the full-grid solution backs the portfolio (cell areas vanish there)
    y, fy = _davie_solve(mu, None, f, df, start)
    report = None
    if partitions is not None and len(partitions) >= 2:
        solutions = []
        for level in partitions:
            idx = grid.indices_of(level)
            area = market.weights_lift.area_cells(idx)
            y_lvl, _ = _davie_solve(mu[idx], area, f, df, start)
            solutions.append((idx, y_lvl))
        gaps = []
        for (idx_a, y_a), (idx_b, y_b) in zip(solutions, solutions[1:]):
            common = np.searchsorted(idx_b, idx_a)
            gaps.append(float(np.max(np.abs(y_b[common] - y_a))))
        meshes = np.array([lvl.mesh for lvl in list(partitions)[1:]])
        report = ConvergenceReport(
            np.arange(1, len(partitions)), meshes, np.asarray(gaps)
        )

    h = y + (1.0 - np.einsum("ki,ki->k", mu, y))[:, None]
    # d h^i/d mu^j = Y'^{ij} - (Y^j + sum_l mu^l Y'^{lj}),  Y' = f(Y)
    dh = fy - (y[:, None, :] + np.einsum("kl,klj->kj", mu, fy)[:, None, :])
    d = market.dimension
    deriv = np.zeros((len(mu), d, d))
    ii = np.arange(d)
    deriv[:, ii, ii] = h
    deriv += mu[:, :, None] * dh
    ctrl = ControlledPath(market.weights_lift, mu * h, deriv)
    return PortfolioPath(ctrl, kind="equation"), report

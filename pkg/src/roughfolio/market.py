"""Price paths, market weights, wealth processes and the master formula.

A market is built from strictly positive prices S.  The weights
mu^i = S^i / sum_j S^j carry their own lift; portfolios are controlled
paths against the weights lift, with an adapter to the price lift for the
wealth formula.  Covariance cells use left-node evaluation throughout:

    a_cell^{ij} = d[S]^{ij} / (S^i_left S^j_left).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryError, DomainError, PortfolioError
from .paths import SampledPath, TimeGrid
from .rough import (
    DEFAULT_P,
    BracketPath,
    ControlledPath,
    ConvergenceReport,
    RoughLift,
    bracket,
    compensated_integral,
    product,
)

WEIGHT_FLOOR = 1e-10
SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class MarketPath:
    """Prices, market weights, their lifts, and covariance cell measures."""

    prices: SampledPath
    price_lift: RoughLift
    weights: SampledPath
    weights_lift: RoughLift
    price_bracket: BracketPath
    cov_cells: np.ndarray  # (n-1, d, d)

    @staticmethod
    def from_prices(prices: SampledPath, p: float = DEFAULT_P) -> "MarketPath":
        s = prices.values
        if np.any(s <= 0):
            raise DomainError("prices must be strictly positive")
        totals = np.sum(s, axis=1)
        mu = s / totals[:, None]
        if np.any(mu < WEIGHT_FLOOR):
            raise BoundaryError(
                f"market weight below {WEIGHT_FLOOR}; refusing degenerate market"
            )
        weights = SampledPath(prices.grid, mu)
        price_lift = RoughLift.from_path(prices, p)
        weights_lift = RoughLift.from_path(weights, p)
        br = bracket(price_lift)
        left = s[:-1]
        cov = br.cell_increments / np.einsum("ki,kj->kij", left, left)
        cov.setflags(write=False)
        return MarketPath(prices, price_lift, weights, weights_lift, br, cov)

    @staticmethod
    def from_weights(weights: SampledPath, p: float = DEFAULT_P) -> "MarketPath":
        """Market whose total capitalization is constant 1 (prices = weights)."""
        return MarketPath.from_prices(weights, p)

    @property
    def grid(self) -> TimeGrid:
        return self.prices.grid

    @property
    def dimension(self) -> int:
        return self.prices.dimension

    @property
    def totals(self) -> np.ndarray:
        return np.sum(self.prices.values, axis=1)

    def benchmark_wealth(self) -> np.ndarray:
        """W^mu_t = (S^1_t + ... + S^d_t) / (S^1_0 + ... + S^d_0)."""
        tot = self.totals
        return tot / tot[0]

    def weights_bracket_cells(self) -> np.ndarray:
        incr = np.diff(self.weights.values, axis=0)
        return np.einsum("ka,kb->kab", incr, incr)

    def restrict_to_horizon(self, T: float) -> "MarketPath":
        i = self.grid.index_of(T)
        sub = SampledPath(TimeGrid(self.grid.times[: i + 1]), self.prices.values[: i + 1])
        return MarketPath.from_prices(sub, self.price_lift.p)


def market_weights(prices: SampledPath, p: float = DEFAULT_P) -> MarketPath:
    return MarketPath.from_prices(prices, p)


@dataclass(frozen=True)
class PortfolioPath:
    """A sum-to-one strategy as a controlled path against the weights lift."""

    controlled: ControlledPath
    kind: str = "explicit"

    def __post_init__(self):
        sums = np.sum(self.controlled.values, axis=1)
        if np.max(np.abs(sums - 1.0)) > SIMPLEX_TOL:
            raise PortfolioError("portfolio weights must sum to 1 at every node")

    @property
    def values(self) -> np.ndarray:
        return self.controlled.values

    @property
    def derivative(self) -> np.ndarray:
        return self.controlled.derivative

    @property
    def grid(self) -> TimeGrid:
        return self.controlled.grid


def market_portfolio(market: MarketPath) -> PortfolioPath:
    return PortfolioPath(ControlledPath.identity(market.weights_lift), kind="market")


def constant_portfolio(market: MarketPath, weights) -> PortfolioPath:
    w = np.asarray(weights, dtype=float)
    if abs(float(np.sum(w)) - 1.0) > SIMPLEX_TOL:
        raise PortfolioError("constant portfolio must sum to 1")
    return PortfolioPath(
        ControlledPath.constant(market.weights_lift, w), kind="constant"
    )


def reciprocal_weights(market: MarketPath) -> ControlledPath:
    """(1/mu, -diag(1/mu^2)) as a controlled path against the weights lift."""
    mu = market.weights.values
    n, d = mu.shape
    deriv = np.zeros((n, d, d))
    idx = np.arange(d)
    deriv[:, idx, idx] = -1.0 / mu**2
    return ControlledPath(market.weights_lift, 1.0 / mu, deriv)


def portfolio_over_weights(pi: PortfolioPath, market: MarketPath) -> ControlledPath:
    return product(pi.controlled, reciprocal_weights(market))


# ---------------------------------------------------------------------------
# Covariance structure
# ---------------------------------------------------------------------------


def relative_covariance(pi: PortfolioPath, market: MarketPath) -> np.ndarray:
    """Cells tau^pi_{ij} = (pi_left - e_i)^T a_cell (pi_left - e_j)."""
    a = market.cov_cells
    p_left = pi.values[:-1]
    q = np.einsum("ki,kij,kj->k", p_left, a, p_left)
    b = np.einsum("kij,kj->ki", a, p_left)
    # (pi - e_i)^T a (pi - e_j) = q - b_i - b_j + a_ij
    return q[:, None, None] - b[:, :, None] - b[:, None, :] + a


def excess_growth(pi: PortfolioPath, market: MarketPath) -> SampledPath:
    """Cumulative (1/2)(sum_i pi^i a^{ii} - sum_{ij} pi^i pi^j a^{ij})."""
    a = market.cov_cells
    p_left = pi.values[:-1]
    diag = np.einsum("ki,kii->k", p_left, a)
    full = np.einsum("ki,kij,kj->k", p_left, a, p_left)
    vals = np.concatenate([[0.0], np.cumsum(0.5 * (diag - full))])
    return SampledPath(market.grid, vals)


def _cov_correction_cells(pi_left, mu_left, a_cells) -> np.ndarray:
    """sum_{ij} pi^i pi^j tau^mu_{ij} per cell = (mu - pi)^T a (mu - pi)."""
    diff = mu_left - pi_left
    return np.einsum("ki,kij,kj->k", diff, a_cells, diff)


# ---------------------------------------------------------------------------
# Wealth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WealthRecord:
    grid: TimeGrid
    W: np.ndarray
    V: np.ndarray
    logV: np.ndarray
    int_term: np.ndarray
    cov_term: np.ndarray

    def rows(self):
        return zip(
            self.grid.times.tolist(),
            self.W.tolist(),
            self.V.tolist(),
            self.logV.tolist(),
            self.int_term.tolist(),
            self.cov_term.tolist(),
        )


def _price_controlled(pi: PortfolioPath, market: MarketPath) -> ControlledPath:
    """Adapter: re-express a weights-controlled portfolio against the price lift."""
    mu = market.weights.values
    tot = market.totals
    d = market.dimension
    jac = (np.eye(d)[None, :, :] - mu[:, :, None]) / tot[:, None, None]
    deriv_s = np.einsum("nik,nkj->nij", pi.derivative, jac)
    return ControlledPath(market.price_lift, pi.values, deriv_s)


def wealth(pi: PortfolioPath, market: MarketPath, partition: TimeGrid = None) -> WealthRecord:
    """W^pi = exp(int (pi/S) dS - (1/2) sum_ij int pi^i pi^j/(S^i S^j) d[S]^ij)."""
    s = market.prices.values
    n, d = s.shape
    pi_s = _price_controlled(pi, market)
    recip = ControlledPath(
        market.price_lift,
        1.0 / s,
        _neg_inv_square_diag(s),
    )
    z = product(pi_s, recip)
    idx = np.arange(n) if partition is None else market.grid.indices_of(partition)
    int_term = compensated_integral(z, market.price_lift, partition).values[:, 0]
    z_left = z.values[idx[:-1]]
    dbr = np.add.reduceat(market.price_bracket.cell_increments, idx[:-1], axis=0)
    quad = np.einsum("ki,kij,kj->k", z_left, dbr, z_left)
    cov_term = np.concatenate([[0.0], np.cumsum(0.5 * quad)])
    logW = int_term - cov_term
    W = np.exp(logW)
    w_mu = market.benchmark_wealth()[idx]
    V = W / w_mu
    logV = logW - np.log(w_mu)
    grid = market.grid if partition is None else partition
    return WealthRecord(grid, W, V, logV, int_term, cov_term)


def _neg_inv_square_diag(s: np.ndarray) -> np.ndarray:
    n, d = s.shape
    out = np.zeros((n, d, d))
    idx = np.arange(d)
    out[:, idx, idx] = -1.0 / s**2
    return out


def log_relative_wealth(
    pi: PortfolioPath, market: MarketPath, partition: TimeGrid = None
) -> SampledPath:
    """log V^pi = int (pi/mu) dmu - (1/2) sum_ij int pi^i pi^j tau^mu_ij."""
    z = portfolio_over_weights(pi, market)
    idx = (
        np.arange(len(market.grid))
        if partition is None
        else market.grid.indices_of(partition)
    )
    integral = compensated_integral(z, market.weights_lift, partition).values[:, 0]
    a_coarse = np.add.reduceat(market.cov_cells, idx[:-1], axis=0)
    corr = _cov_correction_cells(
        pi.values[idx[:-1]], market.weights.values[idx[:-1]], a_coarse
    )
    cov = np.concatenate([[0.0], np.cumsum(0.5 * corr)])
    grid = market.grid if partition is None else partition
    return SampledPath(grid, integral - cov)


# ---------------------------------------------------------------------------
# Function-driven portfolios
# ---------------------------------------------------------------------------


def functionally_controlled(market: MarketPath, f, df, kind="controlled") -> PortfolioPath:
    """pi^i = mu^i (F^i(mu) + 1 - sum_j mu^j F^j(mu)) with the product-rule derivative.

    ``f``: (n, d) -> (n, d); ``df``: (n, d) -> (n, d, d) with df[n, i, j] =
    dF^i/dx_j, both evaluated along the weight path.
    """
    mu = market.weights.values
    n, d = mu.shape
    fv = np.asarray(f(mu), dtype=float)
    dfv = np.asarray(df(mu), dtype=float)
    mf = np.einsum("kj,kj->k", mu, fv)
    h = fv + (1.0 - mf)[:, None]
    # d h^i / d x_j = dF^i/dx_j - (F^j + sum_l mu^l dF^l/dx_j)
    dh = dfv - (fv[:, None, :] + np.einsum("kl,klj->kj", mu, dfv)[:, None, :])
    deriv = np.zeros((n, d, d))
    idx = np.arange(d)
    deriv[:, idx, idx] = h
    deriv += mu[:, :, None] * dh
    return PortfolioPath(
        ControlledPath(market.weights_lift, mu * h, deriv), kind=kind
    )


def functionally_generated(market: MarketPath, g, dg, d2g) -> PortfolioPath:
    """Portfolio generated by a positive function G of the weights.

    pi^i = mu^i (d_i log G(mu) + 1 - sum_k mu^k d_k log G(mu)); the
    controlled-path derivative comes from the analytic gradient/Hessian.
    """
    mu = market.weights.values
    gv = np.asarray(g(mu), dtype=float)
    if np.any(gv <= 0):
        raise DomainError("generating function must stay positive on the data")
    dgv = np.asarray(dg(mu), dtype=float)
    d2gv = np.asarray(d2g(mu), dtype=float)

    def f(_):
        return dgv / gv[:, None]

    def df(_):
        return d2gv / gv[:, None, None] - np.einsum(
            "ki,kj->kij", dgv, dgv
        ) / (gv**2)[:, None, None]

    return functionally_controlled(market, f, df, kind="generated")


# ---------------------------------------------------------------------------
# Master formula
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MasterFormulaReport:
    report: ConvergenceReport
    lhs_terminal: float
    rhs_terminal: float

    @property
    def terminal_gap(self) -> float:
        return abs(self.lhs_terminal - self.rhs_terminal)


def master_formula_check(market: MarketPath, g, dg, d2g, partitions) -> MasterFormulaReport:
    """Compare log V^{pi^G} with the generating-function decomposition.

    rhs = log(G(mu_t)/G(mu_0))
          - (1/2) sum_ij int (1/G) d^2_ij G  mu^i mu^j tau^mu_ij (ds),
    evaluated with left-point cells per partition level; reports the sup
    gap per level.
    """
    pi = functionally_generated(market, g, dg, d2g)
    mu = market.weights.values
    gv = np.asarray(g(mu), dtype=float)
    d2gv = np.asarray(d2g(mu), dtype=float)
    a = market.cov_cells
    gaps, meshes = [], []
    for level in partitions:
        idx = market.grid.indices_of(level)
        lhs = log_relative_wealth(pi, market, level).values[:, 0]
        a_coarse = np.add.reduceat(a, idx[:-1], axis=0)
        mu_l = mu[idx[:-1]]
        q = np.einsum("ki,kij,kj->k", mu_l, a_coarse, mu_l)
        b = np.einsum("kij,kj->ki", a_coarse, mu_l)
        tau = q[:, None, None] - b[:, :, None] - b[:, None, :] + a_coarse
        weighted = np.einsum("ki,kj,kij->kij", mu_l, mu_l, tau)
        hess_term = np.einsum("kij,kij->k", d2gv[idx[:-1]] / gv[idx[:-1], None, None], weighted)
        rhs = (
            np.log(gv[idx] / gv[idx[0]])
            - np.concatenate([[0.0], np.cumsum(0.5 * hess_term)])
        )
        gaps.append(float(np.max(np.abs(lhs - rhs))))
        meshes.append(level.mesh)
    report = ConvergenceReport(
        np.arange(len(gaps)), np.asarray(meshes), np.asarray(gaps)
    )
    return MasterFormulaReport(report, float(lhs[-1]), float(rhs[-1]))


def benchmark_wealth_consistency(market: MarketPath, partitions) -> ConvergenceReport:
    """Gap between the closed-form benchmark wealth and the exponential route."""
    pi = market_portfolio(market)
    gaps, meshes = [], []
    for level in partitions:
        idx = market.grid.indices_of(level)
        rec = wealth(pi, market, level)
        gaps.append(float(np.max(np.abs(rec.W - market.benchmark_wealth()[idx]))))
        meshes.append(level.mesh)
    return ConvergenceReport(np.arange(len(gaps)), np.asarray(meshes), np.asarray(gaps))

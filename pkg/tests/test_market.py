import numpy as np
import pytest

from roughfolio.errors import BoundaryError, DomainError, PortfolioError
from roughfolio.market import (
    MarketPath,
    PortfolioPath,
    benchmark_wealth_consistency,
    constant_portfolio,
    excess_growth,
    functionally_controlled,
    functionally_generated,
    log_relative_wealth,
    market_portfolio,
    market_weights,
    master_formula_check,
    portfolio_over_weights,
    relative_covariance,
    wealth,
)
from roughfolio.paths import PartitionSequence, SampledPath, TimeGrid
from roughfolio.rough import ControlledPath

from conftest import brownian_like


@pytest.fixture(scope="module")
def geometric_market():
    bm = brownian_like(seed=23, n_cells=1 << 12, dim=3, scale=0.3)
    drift = 0.05 * bm.grid.times[:, None] * np.array([1.0, -0.5, 0.2])
    prices = SampledPath(bm.grid, np.exp(bm.values + drift))
    return market_weights(prices)


@pytest.fixture(scope="module")
def geometric_levels(geometric_market):
    return PartitionSequence.dyadic(geometric_market.grid, 5)


def constant_market(values=(1.0, 1.0, 1.0), n=16):
    v = np.tile(np.asarray(values, dtype=float), (n + 1, 1))
    return market_weights(SampledPath(TimeGrid.uniform(1.0, n), v))


def entropy_like(scale=0.5):
    """G = exp(scale * H(x)) with H the Shannon entropy; returns (g, dg, d2g)."""

    def g(x):
        return np.exp(-scale * np.sum(x * np.log(x), axis=1))

    def glog_grad(x):
        return scale * (-np.log(x) - 1.0)

    def dg(x):
        return g(x)[:, None] * glog_grad(x)

    def d2g(x):
        gr = glog_grad(x)
        outer = np.einsum("ki,kj->kij", gr, gr)
        n, d = x.shape
        diag = np.zeros((n, d, d))
        idx = np.arange(d)
        diag[:, idx, idx] = -scale / x
        return g(x)[:, None, None] * (outer + diag)

    return g, dg, d2g


class TestMarketWeights:
    def test_equal_constant_prices(self):
        m = constant_market()
        np.testing.assert_allclose(m.weights.values, 1.0 / 3)
        np.testing.assert_allclose(m.benchmark_wealth(), 1.0)

    def test_specific_ratio(self):
        m = constant_market((2.0, 1.0, 1.0))
        np.testing.assert_allclose(m.weights.values[0], [0.5, 0.25, 0.25])

    def test_benchmark_wealth_closed_form(self, geometric_market):
        tot = np.sum(geometric_market.prices.values, axis=1)
        np.testing.assert_allclose(
            geometric_market.benchmark_wealth(), tot / tot[0], rtol=1e-15
        )

    def test_rejects_nonpositive_prices(self):
        t = TimeGrid.uniform(1.0, 2)
        with pytest.raises(DomainError):
            market_weights(SampledPath(t, np.array([[1.0, 1.0], [0.0, 1.0], [1.0, 1.0]])))

    def test_rejects_degenerate_weights(self):
        t = TimeGrid.uniform(1.0, 2)
        vals = np.array([[1.0, 1e-15], [1.0, 1e-15], [1.0, 1e-15]])
        with pytest.raises(BoundaryError):
            market_weights(SampledPath(t, vals))

    def test_benchmark_matches_rough_exponential_route(
        self, geometric_market, geometric_levels
    ):
        report = benchmark_wealth_consistency(geometric_market, geometric_levels)
        assert report.geometric_factor() <= 0.75


class TestPortfolios:
    def test_market_portfolio_sums_to_one(self, geometric_market):
        pi = market_portfolio(geometric_market)
        assert np.max(np.abs(np.sum(pi.values, axis=1) - 1)) <= 1e-12

    def test_non_simplex_rejected(self, geometric_market):
        bad = ControlledPath.constant(
            geometric_market.weights_lift, np.array([0.5, 0.2, 0.2])
        )
        with pytest.raises(PortfolioError):
            PortfolioPath(bad)

    def test_pi_over_mu_of_market_portfolio_is_ones(self, geometric_market):
        z = portfolio_over_weights(market_portfolio(geometric_market), geometric_market)
        np.testing.assert_allclose(z.values, 1.0, atol=1e-14)
        assert np.max(np.abs(z.derivative)) <= 1e-14


class TestRelativeCovariance:
    def test_market_portfolio_annihilates_weights(self, geometric_market):
        tau = relative_covariance(market_portfolio(geometric_market), geometric_market)
        mu_left = geometric_market.weights.values[:-1]
        contraction = np.einsum("kj,kij->ki", mu_left, tau)
        assert np.max(np.abs(contraction)) <= 1e-12

    def test_constant_prices_zero(self):
        m = constant_market((1.0, 2.0, 3.0))
        tau = relative_covariance(market_portfolio(m), m)
        assert np.max(np.abs(tau)) == 0.0

    def test_one_asset_market(self):
        t = TimeGrid.uniform(1.0, 8)
        m = market_weights(SampledPath(t, np.exp(np.linspace(0, 1, 9))))
        tau = relative_covariance(market_portfolio(m), m)
        assert np.max(np.abs(tau)) <= 1e-15


class TestExcessGrowth:
    def test_zero_for_constant_prices(self):
        m = constant_market((1.0, 2.0, 3.0))
        eg = excess_growth(market_portfolio(m), m)
        assert np.max(np.abs(eg.values)) == 0.0

    def test_zero_for_single_asset_bets(self, geometric_market):
        pi = constant_portfolio(geometric_market, [1.0, 0.0, 0.0])
        eg = excess_growth(pi, geometric_market)
        assert np.max(np.abs(eg.values)) <= 1e-14

    def test_tau_route_matches_cellwise(self, geometric_market):
        # gamma* = (1/2)(sum pi tau_ii - sum pi pi tau_ij) cellwise
        pi = constant_portfolio(geometric_market, [0.5, 0.3, 0.2])
        eg = excess_growth(pi, geometric_market).values[:, 0]
        tau = relative_covariance(
            market_portfolio(geometric_market), geometric_market
        )
        p_left = pi.values[:-1]
        alt_cells = 0.5 * (
            np.einsum("ki,kii->k", p_left, tau)
            - np.einsum("ki,kij,kj->k", p_left, tau, p_left)
        )
        alt = np.concatenate([[0.0], np.cumsum(alt_cells)])
        np.testing.assert_allclose(eg, alt, atol=1e-10)


class TestWealth:
    def test_market_portfolio_relative_wealth_is_one(self, geometric_market):
        rec = wealth(market_portfolio(geometric_market), geometric_market)
        assert np.max(np.abs(rec.V - 1.0)) <= 0.01
        report = benchmark_wealth_consistency(
            geometric_market, PartitionSequence.dyadic(geometric_market.grid, 4)
        )
        assert report.geometric_factor() <= 0.75

    def test_constant_prices_unit_wealth(self):
        m = constant_market((1.0, 2.0, 3.0))
        rec = wealth(market_portfolio(m), m)
        np.testing.assert_allclose(rec.W, 1.0, atol=1e-14)

    def test_buy_and_hold_tracks_price_ratio(self, geometric_market, geometric_levels):
        pi = constant_portfolio(geometric_market, [1.0, 0.0, 0.0])
        target = (
            geometric_market.prices.values[:, 0]
            / geometric_market.prices.values[0, 0]
        )
        gaps = []
        for level in geometric_levels:
            idx = geometric_market.grid.indices_of(level)
            rec = wealth(pi, geometric_market, level)
            gaps.append(float(np.max(np.abs(rec.W - target[idx]))))
        gaps = np.array(gaps)
        assert (gaps[-1] / gaps[0]) ** (1 / (len(gaps) - 1)) <= 0.75

    def test_logV_consistent_with_V(self, geometric_market):
        pi = constant_portfolio(geometric_market, [0.2, 0.5, 0.3])
        rec = wealth(pi, geometric_market)
        np.testing.assert_allclose(rec.logV, np.log(rec.V), atol=1e-12)


class TestLogRelativeWealth:
    def test_market_portfolio_is_zero(self, geometric_market):
        lv = log_relative_wealth(market_portfolio(geometric_market), geometric_market)
        assert np.max(np.abs(lv.values)) <= 1e-12

    def test_agrees_with_wealth_ratio_route(self, geometric_market, geometric_levels):
        pi = constant_portfolio(geometric_market, [0.2, 0.5, 0.3])
        gaps = []
        for level in geometric_levels:
            lv = log_relative_wealth(pi, geometric_market, level).values[:, 0]
            rec = wealth(pi, geometric_market, level)
            gaps.append(float(np.max(np.abs(lv - rec.logV))))
        gaps = np.array(gaps)
        assert (gaps[-1] / gaps[0]) ** (1 / (len(gaps) - 1)) <= 0.75

    def test_finite_variation_reduction(self):
        # low-variation market: integral term telescopes against F exactly
        t = np.linspace(0, 1, 257)
        mu = np.stack(
            [1 / 3 + 0.05 * np.sin(2 * np.pi * t), 1 / 3 + 0.05 * np.cos(2 * np.pi * t) - 0.05],
            axis=1,
        )
        mu = np.column_stack([mu, 1.0 - mu.sum(axis=1)])
        m = MarketPath.from_weights(SampledPath(TimeGrid(t), mu))
        f = lambda x: np.stack([x[:, 1], np.zeros(len(x)), np.zeros(len(x))], axis=1)
        df_mat = np.array([[0.0, 1.0, 0.0], [0, 0, 0], [0, 0, 0]])
        df = lambda x: np.tile(df_mat, (len(x), 1, 1))
        pi = functionally_controlled(m, f, df)
        z = portfolio_over_weights(pi, m)
        from roughfolio.rough import compensated_integral

        integral = compensated_integral(z, m.weights_lift).values[-1, 0]
        direct = float(np.sum(f(mu)[:-1, :] * np.diff(mu, axis=0)))
        # the 1-vector part of pi/mu integrates to zero against dmu
        assert integral == pytest.approx(direct, abs=1e-12)


class TestFunctionPortfolios:
    def test_zero_function_gives_market_portfolio(self, geometric_market):
        f = lambda x: np.zeros_like(x)
        df = lambda x: np.zeros((len(x), 3, 3))
        pi = functionally_controlled(geometric_market, f, df)
        np.testing.assert_allclose(
            pi.values, geometric_market.weights.values, atol=1e-15
        )

    def test_constant_generating_function(self, geometric_market):
        g = lambda x: np.full(len(x), 7.0)
        dg = lambda x: np.zeros_like(x)
        d2g = lambda x: np.zeros((len(x), 3, 3))
        pi = functionally_generated(geometric_market, g, dg, d2g)
        np.testing.assert_allclose(
            pi.values, geometric_market.weights.values, atol=1e-15
        )

    def test_geometric_mean_gives_constant_weights(self, geometric_market):
        w = np.array([0.5, 0.3, 0.2])

        def g(x):
            return np.prod(x**w, axis=1)

        def dg(x):
            return g(x)[:, None] * w / x

        def d2g(x):
            gr = w / x
            outer = np.einsum("ki,kj->kij", gr, gr)
            n, d = x.shape
            diag = np.zeros((n, d, d))
            idx = np.arange(d)
            diag[:, idx, idx] = -w / x**2
            return g(x)[:, None, None] * (outer + diag)

        pi = functionally_generated(geometric_market, g, dg, d2g)
        np.testing.assert_allclose(pi.values, np.tile(w, (len(pi.values), 1)), atol=1e-12)

    def test_gradient_function_matches_generated(self, geometric_market):
        g, dg, d2g = entropy_like(0.4)
        gen = functionally_generated(geometric_market, g, dg, d2g)
        mu = geometric_market.weights.values

        def f(x):
            return dg(x) / g(x)[:, None]

        def df(x):
            return d2g(x) / g(x)[:, None, None] - np.einsum(
                "ki,kj->kij", dg(x), dg(x)
            ) / (g(x) ** 2)[:, None, None]

        ctrl = functionally_controlled(geometric_market, f, df)
        np.testing.assert_allclose(ctrl.values, gen.values, atol=1e-12)
        np.testing.assert_allclose(ctrl.derivative, gen.derivative, atol=1e-12)

    def test_positivity_enforced(self, geometric_market):
        g = lambda x: x[:, 0] - 10.0
        dg = lambda x: np.zeros_like(x)
        d2g = lambda x: np.zeros((len(x), 3, 3))
        with pytest.raises(DomainError):
            functionally_generated(geometric_market, g, dg, d2g)


class TestMasterFormula:
    def test_constant_g_both_sides_vanish(self, geometric_market, geometric_levels):
        g = lambda x: np.full(len(x), 3.0)
        dg = lambda x: np.zeros_like(x)
        d2g = lambda x: np.zeros((len(x), 3, 3))
        rep = master_formula_check(geometric_market, g, dg, d2g, geometric_levels)
        assert rep.terminal_gap <= 1e-12
        assert np.max(rep.report.gaps) <= 1e-10

    def test_log_affine_g_exact_on_any_market(self, geometric_market, geometric_levels):
        v = np.array([0.4, -0.2, 0.1])

        def g(x):
            return np.exp(x @ v)

        def dg(x):
            return g(x)[:, None] * v

        def d2g(x):
            return g(x)[:, None, None] * np.outer(v, v)

        rep = master_formula_check(geometric_market, g, dg, d2g, geometric_levels)
        assert np.max(rep.report.gaps) <= 1e-10

    def test_entropy_like_g_converges(self, geometric_market, geometric_levels):
        g, dg, d2g = entropy_like(0.6)
        rep = master_formula_check(geometric_market, g, dg, d2g, geometric_levels)
        assert rep.report.geometric_factor() <= 0.75

"""Simplex-valued diffusion simulation and log-optimal growth experiments.

The weight process follows dmu = c(mu) lambda(mu) dt + sqrt(c(mu)) dW with
c(x) 1 = 0, simulated by Euler-Maruyama with a symmetric-eigendecomposition
matrix square root, then renormalized and clamped to the eps-interior of
the simplex.  Per-path randomness comes from counter-based streams keyed
by (seed, path index), so ensembles are bitwise-reproducible regardless of
batching.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConditioningError,
    InstabilityError,
    ParameterError,
)
from .market import MarketPath
from .paths import SampledPath, TimeGrid

DEFAULT_CHUNK = 250  # paths simulated per vectorized batch (fixed: determinism)


# ---------------------------------------------------------------------------
# Model specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficients of the weight diffusion: c(x) = gamma x^i (delta_ij - x^j)
    with drift c(x) lambda(x) = B x (or a closed-form lambda)."""

    d: int
    gamma: float
    kind: str
    B: np.ndarray = None
    C: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.gamma <= 0:
            raise ParameterError("diffusion scale gamma must be positive")
        if self.B is not None:
            B = np.asarray(self.B, dtype=float)
            object.__setattr__(self, "B", B)
            if B.shape != (self.d, self.d):
                raise ParameterError("drift matrix has wrong shape")
            if np.max(np.abs(np.sum(B, axis=0))) > 1e-12:
                raise ParameterError("drift matrix columns must sum to zero")

    def c(self, x: np.ndarray) -> np.ndarray:
        """Covariance gamma x^i (delta_ij - x^j) at points x of shape (k, d)."""
        x = np.atleast_2d(x)
        eye = np.eye(self.d)
        return self.gamma * (
            np.einsum("ki,ij->kij", x, eye) - np.einsum("ki,kj->kij", x, x)
        )

    def drift(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.B is not None:
            return x @ self.B.T
        return np.einsum("kij,kj->ki", self.c(x), self.lam(x))

    def lam(self, x: np.ndarray) -> np.ndarray:
        """Closed-form market price of risk where available."""
        x = np.atleast_2d(x)
        if self.kind == "vol_stabilized":
            alpha = self.params["alpha"]
            return (1 + alpha) / (2 * self.gamma * x) + self.C
        if self.kind == "polynomial":
            p, q, r = (self.params[k] for k in ("p", "q", "r"))
            g = self.gamma
            lam1 = (r - p + q * x[:, 1] / x[:, 0] + r * x[:, 2] / x[:, 0]) / g
            lam2 = (r - q + p * x[:, 0] / x[:, 1]) / g
            lam3 = np.zeros(len(x))
            return np.stack([lam1, lam2, lam3], axis=1) + self.C
        raise ParameterError(f"no closed-form lambda for kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "gamma": self.gamma,
            "kind": self.kind,
            "B": None if self.B is None else self.B.tolist(),
            "C": self.C,
            "params": dict(self.params),
        }

    @staticmethod
    def from_dict(doc: dict) -> "DiffusionSpec":
        kind = doc["kind"]
        if kind == "vol_stabilized":
            return vol_stabilized_spec(
                doc["params"]["alpha"], doc["gamma"], doc.get("C", 0.0), doc["d"]
            )
        if kind == "polynomial":
            p, q, r = (doc["params"][k] for k in ("p", "q", "r"))
            return polynomial_spec(p, q, r, doc["gamma"], doc.get("C", 0.0))
        B = None if doc.get("B") is None else np.asarray(doc["B"], dtype=float)
        return DiffusionSpec(doc["d"], doc["gamma"], kind, B, doc.get("C", 0.0),
                             dict(doc.get("params", {})))


def vol_stabilized_spec(alpha: float, gamma: float, C: float = 0.0, d: int = 3) -> DiffusionSpec:
    """Volatility-stabilized model: B_ij = (1+alpha)/2 (1 - delta_ij d)."""
    if alpha <= gamma - 1:
        raise ParameterError("boundary condition alpha > gamma - 1 violated")
    B = (1 + alpha) / 2 * (np.ones((d, d)) - d * np.eye(d))
    return DiffusionSpec(d, gamma, "vol_stabilized", B, C, {"alpha": alpha})


def polynomial_spec(p: float, q: float, r: float, gamma: float, C: float = 0.0) -> DiffusionSpec:
    """Three-asset polynomial model with drift matrix [[-p,q,r],[p,-q,0],[0,0,-r]]."""
    if min(p, q, r) <= 0:
        raise ParameterError("drift parameters must be positive")
    if 2 * min(p, q, r) - gamma < 0:
        raise ParameterError("boundary condition 2 min(p,q,r) >= gamma violated")
    B = np.array([[-p, q, r], [p, -q, 0.0], [0.0, 0.0, -r]])
    return DiffusionSpec(3, gamma, "polynomial", B, C, {"p": p, "q": q, "r": r})


def solve_lambda(spec: DiffusionSpec, x) -> np.ndarray:
    """Least-squares solution of c(x) lambda = B x orthogonal to 1, plus C 1.

    The kernel direction 1 is free; comparisons against closed forms should
    quotient it out (the offset drops from every portfolio).
    """
    if spec.B is None:
        raise ParameterError("lambda solve needs a drift matrix")
    x = np.atleast_2d(x)
    c = spec.c(x)
    b = x @ spec.B.T
    out = np.empty_like(b)
    for k in range(len(x)):
        w, v = np.linalg.eigh(c[k])
        scale = np.max(np.abs(w))
        small = np.abs(w) <= 1e-12 * scale
        if np.sum(small) != 1:
            raise ConditioningError(
                "covariance is rank-deficient beyond the simplex kernel"
            )
        inv = np.where(small, 0.0, _safe_reciprocal(w))
        out[k] = v @ (inv * (v.T @ b[k]))
    return out + spec.C


def _safe_reciprocal(w):
    with np.errstate(divide="ignore"):
        return np.where(w == 0, 0.0, 1.0 / w)


def center_mod_ones(v: np.ndarray) -> np.ndarray:
    """Remove the 1-direction component (lambda is defined modulo it)."""
    v = np.atleast_2d(v)
    return v - np.mean(v, axis=1, keepdims=True)


def log_optimal_portfolio(spec: DiffusionSpec, x) -> np.ndarray:
    """pi^i = x^i (lambda^i(x) + 1 - sum_j x^j lambda^j(x)); offset-invariant."""
    x = np.atleast_2d(x)
    lam = spec.lam(x)
    inner = np.einsum("ki,ki->k", x, lam)
    out = x * (lam + (1.0 - inner)[:, None])
    return out[0] if out.shape[0] == 1 and np.ndim(x) == 1 else out


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulationConfig:
    step: float
    horizon: float
    paths: int
    seed: int
    epsilon: float = 1e-4
    initial: object = "uniform"  # simplex point or "uniform"

    def __post_init__(self):
        if self.step <= 0 or self.horizon <= 0:
            raise ParameterError("step and horizon must be positive")
        if self.paths < 1:
            raise ParameterError("need at least one path")

    def validate_for(self, d: int):
        if not 0 < self.epsilon < 1.0 / d:
            raise ParameterError("interior floor must lie in (0, 1/d)")
        if isinstance(self.initial, str):
            if self.initial != "uniform":
                raise ParameterError(f"unknown initial spec {self.initial!r}")
        else:
            x0 = np.asarray(self.initial, dtype=float)
            if x0.shape != (d,) or abs(float(np.sum(x0)) - 1.0) > 1e-12:
                raise ParameterError("initial point must be a simplex point")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step))

    def grid(self) -> TimeGrid:
        return TimeGrid(np.arange(self.n_steps + 1) * self.step)

    def to_dict(self) -> dict:
        initial = self.initial
        if not isinstance(initial, str):
            initial = np.asarray(initial, dtype=float).tolist()
        return {
            "step": self.step,
            "horizon": self.horizon,
            "paths": self.paths,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "initial": initial,
        }

    @staticmethod
    def from_dict(doc: dict) -> "SimulationConfig":
        return SimulationConfig(
            step=float(doc["step"]),
            horizon=float(doc["horizon"]),
            paths=int(doc["paths"]),
            seed=int(doc["seed"]),
            epsilon=float(doc.get("epsilon", 1e-4)),
            initial=doc.get("initial", "uniform"),
        )


def _path_rng(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _project_interior(x: np.ndarray, eps: float) -> np.ndarray:
    """Renormalize to sum 1, clamp to [eps, 1-eps], redistribute the residual."""
    x = x / np.sum(x, axis=1, keepdims=True)
    for _ in range(8):
        clipped = np.clip(x, eps, 1.0 - eps)
        resid = 1.0 - np.sum(clipped, axis=1)
        if np.max(np.abs(resid)) <= 1e-15:
            return clipped
        room_up = (1.0 - eps) - clipped
        room_dn = clipped - eps
        room = np.where(resid[:, None] > 0, room_up, room_dn)
        share = room / np.sum(room, axis=1, keepdims=True)
        x = clipped + resid[:, None] * share
    return x


@dataclass(frozen=True)
class WeightEnsemble:
    """Simulated weight paths: values[i] is path i sampled on the grid."""

    grid: TimeGrid
    values: np.ndarray  # (paths, n_nodes, d)
    spec: DiffusionSpec
    config: SimulationConfig

    def __len__(self):
        return self.values.shape[0]

    def path(self, i: int) -> SampledPath:
        return SampledPath(self.grid, self.values[i])

    def paths(self):
        return (self.path(i) for i in range(len(self)))

    def market(self, i: int) -> MarketPath:
        return MarketPath.from_weights(self.path(i))


def _simulate_block(spec, config, indices, keep_nodes=None):
    """Simulate a batch of paths; returns (k, n_kept, d) values."""
    d = spec.d
    n_steps = config.n_steps
    dt = config.step
    sqdt = np.sqrt(dt)
    k = len(indices)
    rngs = [_path_rng(config.seed, int(i)) for i in indices]
    if isinstance(config.initial, str):
        x = np.stack([rng.dirichlet(np.ones(d)) for rng in rngs])
        x = _project_interior(x, config.epsilon)
    else:
        x = np.tile(np.asarray(config.initial, dtype=float), (k, 1))
        x = _project_interior(x, config.epsilon)
    normals = np.stack([rng.standard_normal((n_steps, d)) for rng in rngs])
    keep = np.arange(n_steps + 1) if keep_nodes is None else keep_nodes
    out = np.empty((k, len(keep), d))
    kept = 0
    if keep[0] == 0:
        out[:, 0] = x
        kept = 1
    for step in range(n_steps):
        c = spec.c(x)
        drift = spec.drift(x)
        w, v = np.linalg.eigh(c)
        w = np.clip(w, 0.0, None)
        sq = np.einsum("kij,kj,klj->kil", v, np.sqrt(w), v)
        x = x + drift * dt + np.einsum("kij,kj->ki", sq, normals[:, step]) * sqdt
        if not np.all(np.isfinite(x)):
            raise InstabilityError(
                "simulation produced non-finite weights; reduce the step size"
            )
        x = _project_interior(x, config.epsilon)
        if kept < len(keep) and keep[kept] == step + 1:
            out[:, kept] = x
            kept += 1
    return out


def simulate_market_weights(spec: DiffusionSpec, config: SimulationConfig) -> WeightEnsemble:
    """Euler-Maruyama ensemble of weight paths (materialized)."""
    config.validate_for(spec.d)
    blocks = []
    for start in range(0, config.paths, DEFAULT_CHUNK):
        idx = np.arange(start, min(start + DEFAULT_CHUNK, config.paths))
        blocks.append(_simulate_block(spec, config, idx))
    return WeightEnsemble(config.grid(), np.concatenate(blocks, axis=0), spec, config)


# ---------------------------------------------------------------------------
# Pathwise quantities
# ---------------------------------------------------------------------------


def quadratic_drift_integrand(spec: DiffusionSpec, x: np.ndarray) -> np.ndarray:
    """lambda(x)^T c(x) lambda(x) pointwise (the structure-condition density)."""
    lam = spec.lam(x)
    return np.einsum("ki,kij,kj->k", lam, spec.c(x), lam)


def log_optimal_wealth_curve(spec: DiffusionSpec, mu: np.ndarray, dt: float,
                             floor: float = -0.999999):
    """Running log V for pi-hat along one or many weight paths.

    ``mu``: (n, d) or (paths, n, d).  Uses the product recursion
    V_{k+1} = V_k (1 + z_k . dmu_k); factors below ``1 + floor`` are clamped
    and counted (Euler steps adjacent to the boundary can overshoot).
    """
    single = mu.ndim == 2
    if single:
        mu = mu[None]
    z = _z_log_optimal(spec, mu)
    dmu = np.diff(mu, axis=1)
    incr = np.einsum("pki,pki->pk", z[:, :-1], dmu)
    clamped = int(np.sum(incr <= floor))
    incr = np.maximum(incr, floor)
    logv = np.concatenate(
        [np.zeros((len(mu), 1)), np.cumsum(np.log1p(incr), axis=1)], axis=1
    )
    return (logv[0], clamped) if single else (logv, clamped)


def _z_log_optimal(spec, mu):
    flat = mu.reshape(-1, spec.d)
    lam = spec.lam(flat)
    inner = np.einsum("ki,ki->k", flat, lam)
    z = lam + (1.0 - inner)[:, None]
    return z.reshape(mu.shape)


def generated_wealth_curve(grad_log_g, mu: np.ndarray, dt: float,
                           floor: float = -0.999999):
    """Running log V for the portfolio generated by G, along weight paths."""
    single = mu.ndim == 2
    if single:
        mu = mu[None]
    flat = mu.reshape(-1, mu.shape[-1])
    g = grad_log_g(flat)
    inner = np.einsum("ki,ki->k", flat, g)
    z = (g + (1.0 - inner)[:, None]).reshape(mu.shape)
    dmu = np.diff(mu, axis=1)
    incr = np.einsum("pki,pki->pk", z[:, :-1], dmu)
    clamped = int(np.sum(incr <= floor))
    incr = np.maximum(incr, floor)
    logv = np.concatenate(
        [np.zeros((len(mu), 1)), np.cumsum(np.log1p(incr), axis=1)], axis=1
    )
    return (logv[0], clamped) if single else (logv, clamped)


# ---------------------------------------------------------------------------
# Monte Carlo results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MCResult:
    times: np.ndarray
    curves: dict  # name -> (mean array, stderr array)
    metadata: dict

    def curve(self, name):
        return self.curves[name]

    def rows(self):
        for name in self.curves:
            mean, err = self.curves[name]
            for t, m, e in zip(self.times, mean, err):
                yield t, name, m, e


def run_id(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


class _CurveAccumulator:
    """Fixed-order accumulation of per-path curves into mean and stderr."""

    def __init__(self, n_nodes):
        self.s = np.zeros(n_nodes)
        self.s2 = np.zeros(n_nodes)
        self.n = 0

    def add(self, block):  # block: (paths, n_nodes)
        self.s += np.sum(block, axis=0)
        self.s2 += np.sum(block**2, axis=0)
        self.n += block.shape[0]

    def mean(self):
        return self.s / self.n

    def stderr(self):
        var = np.maximum(self.s2 / self.n - (self.s / self.n) ** 2, 0.0)
        if self.n > 1:
            var = var * self.n / (self.n - 1)
        return np.sqrt(var / self.n)


def expected_log_optimal(spec: DiffusionSpec, config: SimulationConfig) -> MCResult:
    """E[log V-hat_t] two ways: (1/2) int lambda^T c lambda ds averaged over
    paths, and the pathwise wealth recursion; both curves with stderr."""
    config.validate_for(spec.d)
    n_nodes = config.n_steps + 1
    acc_q = _CurveAccumulator(n_nodes)
    acc_w = _CurveAccumulator(n_nodes)
    clamp_total = 0
    for start in range(0, config.paths, DEFAULT_CHUNK):
        idx = np.arange(start, min(start + DEFAULT_CHUNK, config.paths))
        mu = _simulate_block(spec, config, idx)
        flat = mu.reshape(-1, spec.d)
        dens = quadratic_drift_integrand(spec, flat).reshape(len(idx), n_nodes)
        quad = np.concatenate(
            [
                np.zeros((len(idx), 1)),
                0.5 * np.cumsum(dens[:, :-1] * config.step, axis=1),
            ],
            axis=1,
        )
        acc_q.add(quad)
        logv, clamped = log_optimal_wealth_curve(spec, mu, config.step)
        clamp_total += clamped
        acc_w.add(logv)
    meta = {
        "spec": spec.to_dict(),
        "config": config.to_dict(),
        "clamped_steps": clamp_total,
    }
    meta["run_id"] = run_id(meta)
    return MCResult(
        config.grid().times,
        {
            "expected_log_optimal": (acc_q.mean(), acc_q.stderr()),
            "pathwise_log_wealth": (acc_w.mean(), acc_w.stderr()),
        },
        meta,
    )


# ---------------------------------------------------------------------------
# The alpha-matched generated portfolio
# ---------------------------------------------------------------------------


def alpha_star_integrals(ensemble_values: np.ndarray, B: np.ndarray, dt: float):
    """Per-path left-point integrals (int (1/mu)^T B mu ds, int sum 1/mu^i ds)."""
    mu = ensemble_values
    recip = 1.0 / mu[:, :-1]
    bmu = np.einsum("ij,pkj->pki", B, mu[:, :-1])
    num = np.einsum("pki,pki->p", recip, bmu) * dt
    den = np.sum(recip, axis=(1, 2)) * dt
    return num, den


def alpha_star(ensemble: WeightEnsemble, B: np.ndarray, gamma: float, T: float) -> float:
    """alpha* = 2 E[int (1/mu) B mu ds] / (E[int sum 1/mu ds] - d^2 T) - 1."""
    i_t = ensemble.grid.nearest_index(T)
    d = ensemble.spec.d
    num, den = alpha_star_integrals(
        ensemble.values[:, : i_t + 1], np.asarray(B, dtype=float), ensemble.config.step
    )
    mean_den = float(np.mean(den)) - d * d * T
    stderr_den = float(np.std(den, ddof=1) / np.sqrt(len(den))) if len(den) > 1 else 0.0
    if abs(mean_den) <= 2 * stderr_den:
        raise ConditioningError("alpha* denominator is within 2 stderr of zero")
    return 2.0 * float(np.mean(num)) / mean_den - 1.0


@dataclass(frozen=True)
class Figure1Result:
    mc: MCResult
    alpha_star: float

    @property
    def gap(self):
        return self.mc.curves["gap"]

    def dominance_margin(self) -> float:
        """min over t of gap_mean + 1 stderr (log-optimality => >= 0-ish)."""
        mean, err = self.gap
        return float(np.min(mean + err))

    def terminal_gap_in_stderr(self) -> float:
        mean, err = self.gap
        if err[-1] == 0:
            return np.inf if mean[-1] > 0 else 0.0
        return float(mean[-1] / err[-1])


def figure1_experiment(
    p: float, q: float, r: float, gamma: float, config: SimulationConfig
) -> Figure1Result:
    """Expected log wealth of the log-optimal portfolio vs the best
    volatility-stabilized generated portfolio (alpha fitted on the same
    paths), on shared paths for variance reduction."""
    spec = polynomial_spec(p, q, r, gamma)
    config.validate_for(spec.d)
    n_nodes = config.n_steps + 1
    T = config.horizon
    # pass 1: fit alpha* from the ensemble expectations
    nums, dens = [], []
    for start in range(0, config.paths, DEFAULT_CHUNK):
        idx = np.arange(start, min(start + DEFAULT_CHUNK, config.paths))
        mu = _simulate_block(spec, config, idx)
        n_b, d_b = alpha_star_integrals(mu, spec.B, config.step)
        nums.append(n_b)
        dens.append(d_b)
    num = np.concatenate(nums)
    den = np.concatenate(dens)
    mean_den = float(np.mean(den)) - spec.d**2 * T
    stderr_den = float(np.std(den, ddof=1) / np.sqrt(len(den))) if len(den) > 1 else 0.0
    if abs(mean_den) <= 2 * stderr_den:
        raise ConditioningError("alpha* denominator is within 2 stderr of zero")
    a_star = 2.0 * float(np.mean(num)) / mean_den - 1.0

    # pass 2: wealth curves for both portfolios on the same paths
    coef = (1 + a_star) / (2 * gamma)

    def grad_log_g(x):
        return coef / x

    acc_opt = _CurveAccumulator(n_nodes)
    acc_alpha = _CurveAccumulator(n_nodes)
    acc_gap = _CurveAccumulator(n_nodes)
    clamp_total = 0
    for start in range(0, config.paths, DEFAULT_CHUNK):
        idx = np.arange(start, min(start + DEFAULT_CHUNK, config.paths))
        mu = _simulate_block(spec, config, idx)
        lv_opt, c1 = log_optimal_wealth_curve(spec, mu, config.step)
        lv_alpha, c2 = generated_wealth_curve(grad_log_g, mu, config.step)
        clamp_total += c1 + c2
        acc_opt.add(lv_opt)
        acc_alpha.add(lv_alpha)
        acc_gap.add(lv_opt - lv_alpha)
    meta = {
        "spec": spec.to_dict(),
        "config": config.to_dict(),
        "alpha_star": a_star,
        "clamped_steps": clamp_total,
    }
    meta["run_id"] = run_id(meta)
    mc = MCResult(
        config.grid().times,
        {
            "log_optimal": (acc_opt.mean(), acc_opt.stderr()),
            "alpha_optimal": (acc_alpha.mean(), acc_alpha.stderr()),
            "gap": (acc_gap.mean(), acc_gap.stderr()),
        },
        meta,
    )
    return Figure1Result(mc, a_star)


# ---------------------------------------------------------------------------
# Ergodic growth-rate comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErgodicReport:
    horizons: np.ndarray
    time_average_rate: np.ndarray      # L-hat estimate per horizon
    log_optimal_rate: np.ndarray       # (1/T) log V-hat_T
    universal_rate: np.ndarray         # (1/T) log V^{pi^nu}_T
    cover_gap_scaled: np.ndarray       # (log V* - log V^nu)/lambda(T)
    relative_gaps: dict

    @property
    def final_relative_gap(self) -> float:
        return self.relative_gaps["log_optimal_vs_time_average"][-1]


def ergodic_growth_rate(
    spec: DiffusionSpec,
    config: SimulationConfig,
    horizons=(25.0, 50.0, 100.0, 200.0),
    family=None,
    clock_node_cap: int = 8_192,
) -> ErgodicReport:
    """Long-horizon growth rates: the time-average estimate of the optimal
    rate, the realized log-optimal rate, and a finite-family universal
    portfolio's rate, averaged over a small ensemble."""
    from .universal import ClockValues, FunctionFamily, member_wealth_curves

    config.validate_for(spec.d)
    if family is None:
        family = FunctionFamily.controlled_grid(spec.d, scales=(-0.5, 0.0, 0.5), K=10.0)
    horizons = np.asarray(sorted(horizons), dtype=float)
    if horizons[-1] > config.horizon + 1e-12:
        raise ParameterError("requested horizon exceeds the simulated horizon")
    n_paths = config.paths
    grid = config.grid()
    h_idx = [grid.nearest_index(T) for T in horizons]
    lhat = np.zeros((n_paths, len(horizons)))
    lopt = np.zeros_like(lhat)
    luni = np.zeros_like(lhat)
    lstar = np.zeros_like(lhat)
    lam_clock = np.zeros_like(lhat)
    for i in range(n_paths):
        mu = _simulate_block(spec, config, np.array([i]))[0]
        dens = quadratic_drift_integrand(spec, mu)
        quad = 0.5 * np.cumsum(dens[:-1] * config.step)
        logv, _ = log_optimal_wealth_curve(spec, mu, config.step)
        market = MarketPath.from_weights(SampledPath(grid, mu))
        V = member_wealth_curves(family.portfolios(market), market)
        w = np.full(len(family), 1.0 / len(family))
        for j, (T, it) in enumerate(zip(horizons, h_idx)):
            lhat[i, j] = quad[it - 1] / T
            lopt[i, j] = logv[it] / T
            luni[i, j] = np.log(np.sum(w * V[:, it])) / T
            lstar[i, j] = np.log(np.max(V[:, it])) / T
            lam_clock[i, j] = ClockValues.compute(market, T, clock_node_cap).lam
    mean = lambda a: np.mean(a, axis=0)
    gap_scaled = mean((lstar - luni) * horizons[None, :] / lam_clock)
    rel = lambda a, b: np.abs(mean(a) - mean(b)) / np.maximum(np.abs(mean(b)), 1e-300)
    return ErgodicReport(
        horizons,
        mean(lhat),
        mean(lopt),
        mean(luni),
        gap_scaled,
        {
            "log_optimal_vs_time_average": rel(lopt, lhat),
            "universal_vs_log_optimal": rel(luni, lopt),
        },
    )


def structure_condition_report(
    spec: DiffusionSpec, ensemble: WeightEnsemble, T: float
) -> dict:
    """Per-path int_0^T lambda^T c lambda ds with a finiteness flag."""
    i_t = ensemble.grid.nearest_index(T)
    vals = np.empty(len(ensemble))
    for i in range(len(ensemble)):
        mu = ensemble.values[i, : i_t + 1]
        dens = quadratic_drift_integrand(spec, mu)
        vals[i] = float(np.sum(dens[:-1]) * ensemble.config.step)
    return {
        "values": vals,
        "all_finite": bool(np.all(np.isfinite(vals))),
        "horizon": T,
    }

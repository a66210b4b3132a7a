"""Deterministic command-line front end.

Commands read JSON configs and CSV inputs and emit CSV outputs plus JSON
sidecars; identical configs and seeds produce byte-identical CSVs.  Exit
codes: 0 success, 2 input error, 3 numerical instability.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .diffusion import (
    DiffusionSpec,
    SimulationConfig,
    figure1_experiment,
)
from .errors import InstabilityError, RoughfolioError
from .io import (
    read_json,
    read_path_csv,
    write_convergence_csv,
    write_cover_csv,
    write_curves_csv,
    write_json,
    write_path_csv,
    write_wealth_csv,
)
from .market import (
    constant_portfolio,
    market_portfolio,
    market_weights,
    master_formula_check,
    wealth,
)
from .paths import PartitionSequence, SampledPath, TimeGrid
from .rough import SHRINK_FACTOR, bracket, lift_via_left_point, rie_diagnostic
from .universal import FunctionFamily, cover_gap_trajectory

OUTPUT_DIR_ENV = "ROUGHFOLIO_OUT"


def _resolve_out(path_str: str) -> Path:
    path = Path(path_str)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(command: str, config: dict, seed, outputs, started: float) -> None:
    outputs = [str(p) for p in outputs]
    missing = [p for p in outputs if not Path(p).exists()]
    if missing:
        raise InstabilityError(f"declared outputs missing: {missing}")
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "outputs": outputs,
        "duration_seconds": time.time() - started,
    }
    write_json(manifest, Path(outputs[0]).with_suffix(".manifest.json"))


# ---------------------------------------------------------------------------
# lift
# ---------------------------------------------------------------------------


def cmd_lift(args) -> int:
    started = time.time()
    path = read_path_csv(args.input)
    cells = len(path) - 1
    if cells % (1 << (args.levels - 1)) != 0:
        raise_parameter(
            f"input with {cells} cells does not support {args.levels} dyadic levels"
        )
    partitions = PartitionSequence.dyadic(path.grid, args.levels)
    lift, _ = lift_via_left_point(path, partitions, args.p)
    diag = rie_diagnostic(path, partitions, args.p)
    out = _resolve_out(args.out)
    warn = None if diag.converged else diag.report.geometric_factor()
    write_convergence_csv(diag.report, out, warn_factor=warn)
    br = bracket(lift)
    summary = {
        "chen_max_residual": lift.max_chen_residual(1000, seed=args.seed or 0),
        "bracket_diagonal_terminal": np.diag(br.terminal).tolist(),
        "bracket_partition_sum_gap": br.partition_sum_gap,
        "kappa": diag.kappa,
        "converged": bool(diag.converged),
        "shrink_target": SHRINK_FACTOR,
    }
    summary_path = out.with_name(out.stem + "_summary.json")
    write_json(summary, summary_path)
    config = {"input": str(args.input), "levels": args.levels, "p": args.p}
    _write_manifest("lift", config, args.seed, [out, summary_path], started)
    return 0


def raise_parameter(msg: str):
    from .errors import ParameterError

    raise ParameterError(msg)


# ---------------------------------------------------------------------------
# wealth
# ---------------------------------------------------------------------------


def _portfolio_from_spec(doc: dict, market):
    kind = doc.get("kind")
    if kind == "market":
        return market_portfolio(market), None
    if kind == "constant":
        return constant_portfolio(market, np.asarray(doc["weights"], dtype=float)), None
    if kind == "explicit":
        pi_path = read_path_csv(doc["path"])
        from .rough import ControlledPath
        from .market import PortfolioPath

        if len(pi_path) != len(market.grid):
            raise_parameter("explicit portfolio grid does not match the market")
        n, d = pi_path.values.shape
        ctrl = ControlledPath(market.weights_lift, pi_path.values, np.zeros((n, d, d)))
        return PortfolioPath(ctrl, kind="explicit"), None
    if kind in ("controlled", "generated", "equation"):
        family = FunctionFamily(
            kind=kind,
            dimension=int(doc.get("dimension", market.dimension)),
            coefficients=np.asarray(doc["coefficients"], dtype=float),
            K=float(doc.get("K", 10.0)),
            alpha=float(doc.get("alpha", 1.0)),
        )
        member = family.member(int(doc.get("member", 0)))
        if kind == "generated":
            return member.portfolio(market), member
        return member.portfolio(market), None
    raise_parameter(f"unknown portfolio spec kind {kind!r}")


def cmd_wealth(args) -> int:
    started = time.time()
    prices = read_path_csv(args.market)
    market = market_weights(prices)
    if args.T is not None:
        i_t = market.grid.nearest_index(args.T)
        market = market.restrict_to_horizon(float(market.grid.times[i_t]))
    spec_doc = read_json(args.portfolio)
    pi, generated_member = _portfolio_from_spec(spec_doc, market)
    record = wealth(pi, market)
    extra = {}
    if generated_member is not None:
        levels = PartitionSequence((market.grid,))
        rep = master_formula_check(
            market,
            generated_member.value,
            generated_member.gradient,
            generated_member.hessian,
            levels,
        )
        from .market import log_relative_wealth, functionally_generated

        gen_pi = functionally_generated(
            market,
            generated_member.value,
            generated_member.gradient,
            generated_member.hessian,
        )
        lhs = log_relative_wealth(gen_pi, market).values[:, 0]
        gv = generated_member.value(market.weights.values)
        mu = market.weights.values
        d2gv = generated_member.hessian(mu)
        a = market.cov_cells
        mu_l = mu[:-1]
        q = np.einsum("ki,kij,kj->k", mu_l, a, mu_l)
        b = np.einsum("kij,kj->ki", a, mu_l)
        tau = q[:, None, None] - b[:, :, None] - b[:, None, :] + a
        weighted = np.einsum("ki,kj,kij->kij", mu_l, mu_l, tau)
        hess_term = np.einsum("kij,kij->k", d2gv[:-1] / gv[:-1, None, None], weighted)
        rhs = np.log(gv / gv[0]) - np.concatenate([[0.0], np.cumsum(0.5 * hess_term)])
        extra = {"master_lhs": lhs, "master_rhs": rhs}
    out = _resolve_out(args.out)
    write_wealth_csv(record, out, extra_columns=extra)
    config = {
        "market": str(args.market),
        "portfolio": spec_doc,
        "T": args.T,
    }
    _write_manifest("wealth", config, args.seed, [out], started)
    return 0


# ---------------------------------------------------------------------------
# universal
# ---------------------------------------------------------------------------


def cmd_universal(args) -> int:
    started = time.time()
    prices = read_path_csv(args.market)
    market = market_weights(prices)
    family = FunctionFamily.from_json(Path(args.family).read_text())
    if args.measure == "uniform":
        measure = None
    else:
        weights = np.asarray(read_json(args.measure)["weights"], dtype=float)
        measure = weights
    horizons = [float(tok) for tok in args.T_grid.split(",") if tok]
    if not horizons:
        raise_parameter("empty horizon grid")
    snapped = [float(market.grid.times[market.grid.nearest_index(T)]) for T in horizons]
    traj = cover_gap_trajectory(family, measure, market, snapped)
    out = _resolve_out(args.out)
    write_cover_csv(traj, out)
    config = {
        "market": str(args.market),
        "family": str(args.family),
        "measure": args.measure,
        "T_grid": horizons,
    }
    _write_manifest("universal", config, args.seed, [out], started)
    return 0


# ---------------------------------------------------------------------------
# figure1
# ---------------------------------------------------------------------------


def cmd_figure1(args) -> int:
    started = time.time()
    doc = read_json(args.config)
    spec_doc = doc["spec"]
    config = SimulationConfig.from_dict(doc)
    if args.seed is not None:
        config = SimulationConfig.from_dict({**doc, "seed": args.seed})
    spec = DiffusionSpec.from_dict(spec_doc)
    if spec.kind != "polynomial":
        raise_parameter("the comparison experiment expects a polynomial spec")
    p, q, r = (spec.params[k] for k in ("p", "q", "r"))
    result = figure1_experiment(p, q, r, spec.gamma, config)
    out = _resolve_out(args.out)
    write_curves_csv(result.mc, out, curve_names=["log_optimal", "alpha_optimal"])
    meta = dict(result.mc.metadata)
    write_json(meta, out.with_name(out.stem + "_meta.json"))
    _write_manifest(
        "figure1",
        {"config": doc},
        config.seed,
        [out, out.with_name(out.stem + "_meta.json")],
        started,
    )
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roughfolio",
        description="Pathwise portfolio analytics: lifts, wealth, mixtures, experiments",
    )
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed everywhere")
    sub = parser.add_subparsers(dest="command", required=True)

    p_lift = sub.add_parser("lift", help="lift a path and report convergence")
    p_lift.add_argument("--input", required=True)
    p_lift.add_argument("--levels", type=int, default=5)
    p_lift.add_argument("--p", type=float, default=2.5)
    p_lift.add_argument("--out", required=True)
    p_lift.set_defaults(func=cmd_lift)

    p_wealth = sub.add_parser("wealth", help="wealth curves for a portfolio spec")
    p_wealth.add_argument("--market", required=True)
    p_wealth.add_argument("--portfolio", required=True)
    p_wealth.add_argument("--T", type=float, default=None)
    p_wealth.add_argument("--out", required=True)
    p_wealth.set_defaults(func=cmd_wealth)

    p_uni = sub.add_parser("universal", help="mixture vs best retrospective diagnostics")
    p_uni.add_argument("--market", required=True)
    p_uni.add_argument("--family", required=True)
    p_uni.add_argument("--measure", default="uniform")
    p_uni.add_argument("--T-grid", dest="T_grid", required=True)
    p_uni.add_argument("--out", required=True)
    p_uni.set_defaults(func=cmd_universal)

    p_fig = sub.add_parser("figure1", help="log-optimal vs alpha-matched comparison")
    p_fig.add_argument("--config", required=True)
    p_fig.add_argument("--out", required=True)
    p_fig.set_defaults(func=cmd_figure1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InstabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (RoughfolioError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment runner.

Every subcommand writes CSV files plus ``manifest.json`` (seed, arguments,
catalog configuration and their hash) into ``<out>/<subcommand>/``, where
``<out>`` defaults to ``$TTLCUM_OUT`` or ``./results``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
from scipy import stats

from .catalog import benchmark_config, catalog_from_config, load_config
from .decentralized import (
    BLogPenalty,
    DualController,
    FixedTimers,
    PowerPenalty,
    PrimalController,
    PrimalDualController,
)
from .errors import TtlCumError
from .online import LruDualController, OnlinePoissonController
from .sim import POLICIES, catalog_events, simulate_replacement, simulate_ttl
from .solver import MODES, compare_modes, crossover_index, solve_cum
from .stability import (
    gamma_star_schedule,
    linear_multiplier,
    poisson_threshold,
    schedule_gamma,
    simulate_recursion,
)
from .trace import (
    WeightScheme,
    parse_trace,
    synth_trace,
    weighted_utility_report,
    window_hits,
    windowed_relative_error,
)
from .workload import Mmpp2, mmpp2_fast_limit_rate, mmpp2_slow_limit, mmpp2_to_h2, sample_stream

log = logging.getLogger("ttlcum")

OUT_ENV = "TTLCUM_OUT"
ALGORITHMS = ("dual", "primal", "primal-dual", "online-poisson", "lru-dual", "centralized") + POLICIES


class CatalogNotFound(Exception):
    pass


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------


def _load_catalog_config(args) -> dict:
    if args.catalog is None:
        config = benchmark_config()
    else:
        path = Path(args.catalog)
        if not path.is_file():
            raise CatalogNotFound(f"catalog file not found: {path}")
        config = load_config(path)
    if getattr(args, "beta", None) is not None:
        config["beta"] = args.beta
    if getattr(args, "cache_size", None) is not None:
        config["cache_size"] = args.cache_size
    return config


def config_hash(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _write_manifest(out: Path, args, config: dict | None, outputs: list[str], extra: dict | None = None) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    payload = {"command": args.command, "args": params, "catalog": config}
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    manifest = dict(payload, seed=getattr(args, "seed", None), config_hash=config_hash(payload),
                    version=version, outputs=outputs, **(extra or {}))
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)


def _out_dir(args) -> Path:
    out = Path(args.out) / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_solve(args) -> int:
    config = _load_catalog_config(args)
    catalog = catalog_from_config(config)
    out = _out_dir(args)
    sol = solve_cum(catalog, args.mode)
    sol.to_csv(out / "solution.csv")
    print(f"mode={sol.mode} eta={sol.eta!r} total_occupancy={sol.total_occupancy!r} "
          f"B={catalog.cache_size!r} objective={sol.objective(catalog)!r}")
    _write_manifest(out, args, config, ["solution.csv"])
    return 0


def cmd_compare(args) -> int:
    config = _load_catalog_config(args)
    catalog = catalog_from_config(config)
    out = _out_dir(args)
    cmp = compare_modes(catalog)
    cmp.to_csv(out / "compare.csv")
    change = cmp.sign_change()
    line = f"sign_change={change}"
    alpha = config.get("generate", {}).get("alpha")
    if alpha is not None and catalog.beta != 1:
        line += f" i0={crossover_index(catalog.weights, alpha, catalog.beta)}"
    print(line)
    _write_manifest(out, args, config, ["compare.csv"], {"sign_change": change})
    return 0


def _controller(args, catalog):
    algo = args.algo
    eta0 = args.eta0
    if algo == "dual":
        return DualController(catalog, args.mode, args.gamma, eta0)
    if algo == "primal":
        penalty = BLogPenalty(catalog.cache_size) if args.penalty == "blog" else PowerPenalty(args.penalty_power)
        return PrimalController(catalog, penalty, args.mode, args.rho)
    if algo == "primal-dual":
        return PrimalDualController(catalog, args.mode, args.gamma, args.rho, eta0)
    if algo == "online-poisson":
        rates = catalog.rates if args.known_rates else None
        return OnlinePoissonController(catalog.weights, catalog.beta, catalog.cache_size, args.gamma, eta0,
                                       rates=rates, estimator=args.estimator, mode=args.mode)
    if algo == "lru-dual":
        return LruDualController(catalog.n, catalog.cache_size, args.gamma, eta0)
    if algo == "centralized":
        return FixedTimers(solve_cum(catalog, args.mode).timer)
    return None


def cmd_simulate(args) -> int:
    config = _load_catalog_config(args)
    catalog = catalog_from_config(config)
    out = _out_dir(args)
    t0 = time.perf_counter()
    events = catalog_events(catalog, args.seed, requests=args.requests)
    ctl = _controller(args, catalog)
    if ctl is None:
        st = simulate_replacement(args.algo, events, int(round(catalog.cache_size)), args.seed, args.warmup)
    else:
        st = simulate_ttl(events, ctl, args.warmup, eta_stride=args.eta_stride)
    elapsed = time.perf_counter() - t0
    st.to_csv(out / "hits.csv", catalog.ids)
    st.histogram_to_csv(out / "occupancy.csv")
    outputs = ["hits.csv", "occupancy.csv"]
    if st.eta is not None:
        _write_rows(out / "eta.csv", ["request", "eta"],
                    ((k * args.eta_stride, repr(float(e))) for k, e in enumerate(st.eta)))
        outputs.append("eta.csv")
    B = catalog.cache_size
    summary = {"aggregate_hit_rate": st.aggregate_hit_rate, "aggregate_hit_prob": st.aggregate_hit_prob,
               "mean_occupancy": float(st.occupancy.mean()),
               "mass_within_15pct": st.mass_within(0.85 * B, 1.15 * B), "seconds": elapsed}
    print(" ".join(f"{k}={v!r}" for k, v in summary.items()))
    _write_manifest(out, args, config, outputs, {"summary": summary})
    return 0


def cmd_stability(args) -> int:
    config = _load_catalog_config(args)
    catalog = catalog_from_config(config)
    out = _out_dir(args)
    W, B = float(np.sum(catalog.weights)), float(catalog.cache_size)
    threshold = poisson_threshold(W, B)
    eta_star = W / B
    if args.schedule:
        gamma = schedule_gamma(W, B, args.schedule_fraction)
        label = f"schedule(fraction={args.schedule_fraction})"
    else:
        gamma = args.gamma if args.gamma is not None else args.gamma_factor * threshold
        label = repr(gamma)
    eta0 = args.eta0 if args.eta0 is not None else args.eta0_factor * eta_star
    report = simulate_recursion(eta0, gamma, W, B, args.steps)
    report.to_csv(out / "trajectory.csv")
    _write_rows(out / "thresholds.csv", ["quantity", "value"], [
        ["W", repr(W)], ["B", repr(B)], ["eta_star", repr(eta_star)], ["threshold", repr(threshold)],
        ["gamma", label],
        ["linear_multiplier", "" if args.schedule else repr(linear_multiplier(W, B, gamma))],
        ["gamma_hat_star_2", repr(gamma_star_schedule(2.0))],
    ])
    print(report.verdict_line)
    _write_manifest(out, args, config, ["trajectory.csv", "thresholds.csv"], {"verdict": report.verdict})
    return 0


def cmd_trace(args) -> int:
    config = _load_catalog_config(args)
    catalog = catalog_from_config(config)
    out = _out_dir(args)
    if args.trace is not None:
        if not Path(args.trace).is_file():
            raise CatalogNotFound(f"trace file not found: {args.trace}")
        trace = parse_trace(args.trace, args.format)
    else:
        trace = synth_trace(catalog, args.seed, args.requests)
        trace.to_csv(out / "trace.csv")
    events = trace.events
    B = int(round(catalog.cache_size))
    rates = trace.empirical_rates()
    weights = WeightScheme(args.weights, args.seed).weights(rates)
    lru = simulate_replacement("lru", events, B, args.seed, args.warmup)
    lru_dual = simulate_ttl(events, LruDualController(trace.n, B, args.gamma_lru, args.eta0), args.warmup,
                            record_eta=False)
    online = simulate_ttl(events, OnlinePoissonController(weights, catalog.beta, B, args.gamma, args.eta0,
                                                          estimator=args.estimator), args.warmup, record_eta=False)
    err = windowed_relative_error(lru_dual.hit_flags, lru.hit_flags, args.window)
    _write_rows(out / "windowed_error.csv", ["window", "lru_hits", "lru_dual_hits", "relative_error"],
                ([k, int(a), int(b), repr(float(e))] for k, (a, b, e) in
                 enumerate(zip(window_hits(lru.hit_flags, args.window),
                               window_hits(lru_dual.hit_flags, args.window), err))))
    ids = np.arange(1, trace.n + 1)
    lru.to_csv(out / "hits_lru.csv", ids)
    lru_dual.to_csv(out / "hits_lru_dual.csv", ids)
    online.to_csv(out / "hits_online_poisson.csv", ids)
    report = weighted_utility_report({"lru": lru.hit_rate, "lru-dual": lru_dual.hit_rate,
                                      "online-poisson": online.hit_rate}, weights, catalog.beta)
    report.to_csv(out / "utility.csv")
    print(f"requests={len(trace)} mean_windowed_error={float(err.mean())!r} "
          f"online_vs_lru={report.ratio('online-poisson')!r}")
    outputs = ["windowed_error.csv", "hits_lru.csv", "hits_lru_dual.csv", "hits_online_poisson.csv", "utility.csv"]
    if args.trace is None:
        outputs.append("trace.csv")
    _write_manifest(out, args, config, outputs)
    return 0


def cmd_limits(args) -> int:
    out = _out_dir(args)
    th1, th2, a12, a21 = args.theta1, args.theta2, args.a12, args.a21
    limit = mmpp2_slow_limit(th1, th2, a12, a21)
    fast = mmpp2_fast_limit_rate(th1, th2, a12, a21)
    rows = []
    rng = np.random.default_rng(args.seed)
    for x in args.x:
        h2 = mmpp2_to_h2(th1, th2, a12 * x, a21 * x)
        gap = max(abs(h2.q1 - limit.q1), abs(h2.q2 - limit.q2), abs(h2.u1 - limit.u1), abs(h2.u2 - limit.u2))
        stream = sample_stream(Mmpp2(th1, th2, a12 * x, a21 * x), rng, args.horizon)
        irts = np.diff(stream.times)
        p_value = float(stats.kstest(irts, "expon", args=(0, 1.0 / fast)).pvalue) if len(irts) > 1 else math.nan
        rows.append([repr(x), repr(h2.q1), repr(h2.q2), repr(h2.u1), repr(h2.u2), repr(gap), len(irts), repr(p_value)])
        print(f"x={x!r} slow_limit_gap={gap!r} ks_pvalue_exp={p_value!r}")
    _write_rows(out / "limits.csv", ["x", "q1", "q2", "u1", "u2", "slow_limit_gap", "irts", "ks_pvalue_exp"], rows)
    _write_manifest(out, args, None, ["limits.csv"],
                    {"slow_limit": limit._asdict(), "fast_limit_rate": fast})
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=os.environ.get(OUT_ENV, "results"),
                        help=f"output directory (default: ${OUT_ENV} or ./results)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    cat = argparse.ArgumentParser(add_help=False)
    cat.add_argument("--catalog", help="catalog JSON file (default: bundled benchmark)")
    cat.add_argument("--beta", type=float, help="override the catalog's beta")
    cat.add_argument("--cache-size", type=float, help="override the catalog's cache size B")
    cat.add_argument("--mode", choices=MODES, default="hrb")

    parser = argparse.ArgumentParser(prog="ttlcum", description="Utility-driven TTL cache experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common, cat], help="centralized optimal timers")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", parents=[common, cat], help="hit-rate vs hit-probability objectives")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", parents=[common, cat], help="request-driven controller in the simulator")
    p.add_argument("--algo", choices=ALGORITHMS, default="dual")
    p.add_argument("--gamma", type=float, default=1e-5)
    p.add_argument("--rho", type=float, default=1e-3)
    p.add_argument("--eta0", type=float, default=1.0)
    p.add_argument("--penalty", choices=("blog", "power"), default="blog")
    p.add_argument("--penalty-power", type=float, default=2.0)
    p.add_argument("--estimator", choices=("ewma", "raw"), default="ewma")
    p.add_argument("--known-rates", action="store_true", help="online-poisson with the true mean rates")
    p.add_argument("--requests", type=int, default=1_000_000)
    p.add_argument("--warmup", type=float, default=0.2)
    p.add_argument("--eta-stride", type=int, default=100, help="record every k-th multiplier value")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stability", parents=[common, cat], help="deterministic multiplier recursion")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--gamma", type=float, help="constant step size")
    g.add_argument("--gamma-factor", type=float, default=0.5, help="step as a multiple of 2W/B^2")
    g.add_argument("--schedule", action="store_true", help="state-dependent step size")
    p.add_argument("--schedule-fraction", type=float, default=0.9)
    p.add_argument("--eta0", type=float, help="initial multiplier (default: eta0-factor * eta*)")
    p.add_argument("--eta0-factor", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=10_000)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("trace", parents=[common, cat], help="replay a trace through LRU and TTL controllers")
    p.add_argument("--trace", help="trace file (default: synthesize one from the catalog)")
    p.add_argument("--format", choices=("csv", "ids"), default="csv")
    p.add_argument("--requests", type=int, default=1_000_000, help="length of a synthesized trace")
    p.add_argument("--weights", choices=("rate", "inverse_rate", "random"), default="rate")
    p.add_argument("--gamma", type=float, default=1e-5, help="online-poisson step size")
    p.add_argument("--gamma-lru", type=float, default=1e-7, help="lru-dual step size")
    p.add_argument("--eta0", type=float, default=1.0)
    p.add_argument("--estimator", choices=("ewma", "raw"), default="ewma")
    p.add_argument("--window", type=int, default=3000)
    p.add_argument("--warmup", type=float, default=0.2)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("limits", parents=[common], help="two-state MMPP limits in the switching rate")
    p.add_argument("--theta1", type=float, default=0.05)
    p.add_argument("--theta2", type=float, default=0.01)
    p.add_argument("--a12", type=float, default=5.0)
    p.add_argument("--a21", type=float, default=2.0)
    p.add_argument("--x", type=float, nargs="+", default=[1e-9, 1e-3, 1.0, 1e9])
    p.add_argument("--horizon", type=float, default=2e5)
    p.set_defaults(func=cmd_limits)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CatalogNotFound as exc:
        print(f"ttlcum: error: {exc}", file=sys.stderr)
        return 2
    except (TtlCumError, ValueError) as exc:
        print(f"ttlcum: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

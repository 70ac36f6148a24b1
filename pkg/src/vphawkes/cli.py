"""Command-line surface: simulate, fit, productivity, residuals, bench.

Exit codes: 0 success, 1 data/processing error, 2 usage error, 3 benchmark
tolerance failure in ``bench --check``.  All randomized paths honor ``--seed``
end to end, and a ``--config`` file of ``key = value`` lines supplies defaults
that explicit flags override.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .catalog_io import (
    CatalogFileSpec,
    CatalogParseError,
    read_catalog,
    write_catalog,
)
from .core import EventCatalog, ExponentialKernel, intensity_function
from .diagnostics import normalized_cumsum, path_in_band, super_thin, uniformity_band
from .estimate import (
    SingularMatrixError,
    empirical_productivities,
    fit_constant_hawkes,
    mle_productivities,
)
from .experiments import (
    ETAS_CONFIG,
    TABLE_SCENARIOS,
    ExperimentConfig,
    check_table_row,
    default_config,
    run_etas_magnitude,
    run_scenario,
    scenario_true_k,
)
from .simulate import MagnitudeDistribution, simulate_etas, simulate_variable_hawkes
from .stabilize import SmootherConfig, ZeroSumError, stabilize_pipeline, smooth_by_mark, truncate_nonneg
from .experiments import _SCENARIO_SPECS  # scenario registry shared with bench

USAGE_ERROR = 2
DATA_ERROR = 1
CHECK_FAILED = 3

CONFIG_KEYS = {
    "seed": int,
    "ridge": float,
    "bandwidth": float,
    "delta": float,
    "b_rate": float,
    "silverman_exponent": float,
}


def _load_config(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = CONFIG_KEYS[key](value.strip())
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vphawkes",
        description="Variable-productivity Hawkes process estimation toolkit (time unit: days)",
    )
    parser.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    parser.add_argument("--config", default=None, help="key = value run-config file")
    parser.add_argument("--ridge", type=float, default=None, help="diagonal ridge for the triggering matrix")
    parser.add_argument("--bandwidth", type=float, default=None, help="smoothing bandwidth (default: Silverman)")
    parser.add_argument("--delta", type=float, default=None, help="empirical estimator window (days, default 7)")
    parser.add_argument("--b-rate", dest="b_rate", type=float, default=None, help="super-thinning rate (default: n/T)")
    parser.add_argument(
        "--silverman-exponent",
        dest="silverman_exponent",
        type=float,
        default=None,
        help="sample-size exponent of the bandwidth rule (default -0.2)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a scenario to a catalog file")
    p_sim.add_argument("--scenario", required=True, choices=TABLE_SCENARIOS + ("etas",))
    p_sim.add_argument("--t-end", type=float, default=1000.0)
    p_sim.add_argument("--out", required=True)

    p_fit = sub.add_parser("fit", help="fit a constant-productivity Hawkes model")
    p_fit.add_argument("--catalog", required=True)
    p_fit.add_argument("--out", default=None, help="write the fit as JSON (default: stdout)")

    p_prod = sub.add_parser("productivity", help="stabilized per-event productivity estimates")
    p_prod.add_argument("--catalog", required=True)
    p_prod.add_argument("--mu", type=float, default=None, help="background rate (default: fitted)")
    p_prod.add_argument("--beta", type=float, default=None, help="exponential kernel rate (default: fitted)")
    p_prod.add_argument("--estimator", choices=("mle", "empirical"), default="empirical")
    p_prod.add_argument("--domain", choices=("time", "mark"), default="time")
    p_prod.add_argument("--out", required=True)

    p_res = sub.add_parser("residuals", help="super-thinned residuals and uniformity band")
    p_res.add_argument("--catalog", required=True)
    p_res.add_argument("--mu", type=float, default=None)
    p_res.add_argument("--beta", type=float, default=None)
    p_res.add_argument("--nsim", type=int, default=1000, help="band simulations")
    p_res.add_argument("--out", required=True)

    p_bench = sub.add_parser("bench", help="run the simulation benchmark scenarios")
    p_bench.add_argument("--scenario", default="all", choices=TABLE_SCENARIOS + ("etas", "all"))
    p_bench.add_argument("--replicates", type=int, default=100)
    p_bench.add_argument("--check", action="store_true", help="exit 3 unless reference tolerances hold")
    p_bench.add_argument("--out", default=None, help="write per-replicate RMSEs as CSV")
    return parser


def _fill_defaults(args) -> None:
    config = _load_config(args.config) if args.config else {}
    for key, default in (
        ("seed", 0),
        ("ridge", 0.0),
        ("bandwidth", None),
        ("delta", 7.0),
        ("b_rate", None),
        ("silverman_exponent", -0.2),
    ):
        if getattr(args, key) is None:
            setattr(args, key, config.get(key, default))


def _smoother(args, domain="time") -> SmootherConfig:
    return SmootherConfig(
        bandwidth=args.bandwidth,
        domain=domain,
        silverman_exponent=args.silverman_exponent,
    )


def _model_params(args, catalog):
    """(mu, kernel) from flags, fitting the constant model when not given."""
    if args.mu is not None and args.beta is not None:
        return args.mu, ExponentialKernel(args.beta)
    fit = fit_constant_hawkes(catalog)
    mu = args.mu if args.mu is not None else fit.mu
    beta = args.beta if args.beta is not None else fit.beta
    print(f"fitted constant model: mu={fit.mu:.6g} k={fit.k:.6g} beta={fit.beta:.6g}", file=sys.stderr)
    return mu, ExponentialKernel(beta)


def _cmd_simulate(args) -> int:
    if args.scenario == "etas":
        p = ETAS_CONFIG
        catalog = simulate_etas(
            p["mu"], ExponentialKernel(p["beta"]), p["base"], p["a"],
            MagnitudeDistribution(p["mag_rate"], p["m0"]), args.t_end, rng_seed=args.seed,
        )
        write_catalog(catalog, args.out)
        print(f"wrote {catalog.n} events (with magnitudes) to {args.out}")
        return 0
    cfg = default_config(args.scenario, seed=args.seed, t_end=args.t_end)
    catalog, true_k = simulate_variable_hawkes(
        cfg.mu, ExponentialKernel(cfg.beta), _SCENARIO_SPECS[args.scenario](),
        args.t_end, rng_seed=args.seed,
    )
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "true_k"])
        for t, k in zip(catalog.times, true_k):
            writer.writerow([repr(float(t)), repr(float(k))])
    print(f"wrote {catalog.n} events to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    catalog = read_catalog(args.catalog)
    fit = fit_constant_hawkes(catalog)
    payload = {
        "mu": fit.mu,
        "k": fit.k,
        "beta": fit.beta,
        "standard_errors": {"mu": fit.se_mu, "k": fit.se_k, "beta": fit.se_beta},
        "log_likelihood": fit.log_likelihood,
        "converged": fit.converged,
        "n_events": catalog.n,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_productivity(args) -> int:
    catalog = read_catalog(args.catalog)
    mu, kernel = _model_params(args, catalog)
    if args.estimator == "mle":
        raw = mle_productivities(catalog, mu, kernel, ridge=args.ridge)
    else:
        raw = empirical_productivities(catalog, args.delta, mu)
    if args.domain == "mark":
        if catalog.marks is None:
            raise ValueError("mark-domain output needs a magnitude column")
        curve = smooth_by_mark(
            truncate_nonneg(raw), catalog.marks, _smoother(args, "mark"), mu, catalog.duration
        )
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["magnitude", "productivity", "mark_density"])
            for m, k, f in zip(curve.grid, curve.values, curve.density):
                writer.writerow([m, k, f])
    else:
        stable = stabilize_pipeline(raw, catalog, mu, _smoother(args))
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "raw", "stabilized"])
            for t, r, s in zip(catalog.times, raw.values, stable.values):
                writer.writerow([t, r, s])
    print(f"wrote productivity estimates to {args.out}")
    return 0


def _cmd_residuals(args) -> int:
    catalog = read_catalog(args.catalog)
    mu, kernel = _model_params(args, catalog)
    raw = empirical_productivities(catalog, args.delta, mu)
    stable = stabilize_pipeline(raw, catalog, mu, _smoother(args))
    lam = intensity_function(catalog, mu, kernel, stable.values)
    b = args.b_rate if args.b_rate is not None else catalog.n / catalog.duration
    result = super_thin(catalog, lam, b, rng_seed=args.seed)
    band = uniformity_band(result.m, args.nsim, rng_seed=args.seed)
    path = normalized_cumsum(result.standardized_u)
    inside = path_in_band(path, band)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_k", "u_k", "cumsum", "lower", "upper"])
        for row in zip(result.times, result.standardized_u, path, band.lower, band.upper):
            writer.writerow(row)
    print(
        f"{result.m} super-thinned residuals at b={b:.4g}; "
        f"cumulative-sum path {'inside' if inside else 'OUTSIDE'} the {band.level:.0%} band"
    )
    return 0


def _cmd_bench(args) -> int:
    failures = []
    if args.scenario in ("etas", "all"):
        cfg = default_config("etas", seed=args.seed,
                             replicates=args.replicates if args.scenario == "etas" else 10)
        etas = run_etas_magnitude(cfg)
        print(
            f"scenario etas: mean curve RMSE closed-form {etas.rmse_mle.mean():.4g}, "
            f"empirical {etas.rmse_empirical.mean():.4g}"
        )
        if args.out and args.scenario == "etas":
            etas.write_csv(args.out)
        if args.check and not etas.rmse_empirical.mean() < etas.rmse_mle.mean():
            failures.append("etas/ordering: empirical should beat the closed-form pipeline")
    scenarios = TABLE_SCENARIOS if args.scenario == "all" else (
        (args.scenario,) if args.scenario != "etas" else ()
    )
    for name in scenarios:
        cfg = default_config(
            name, seed=args.seed, replicates=args.replicates, ridge=args.ridge,
            delta=args.delta, smoother=SmootherConfig(bandwidth=args.bandwidth,
                                                      silverman_exponent=args.silverman_exponent),
        )
        result = run_scenario(cfg)
        print(result.summary())
        if args.out and args.scenario == name:
            result.write_csv(args.out)
        if args.check:
            for label, ok, detail in check_table_row(result):
                status = "ok" if ok else "FAIL"
                print(f"  check {label}: {status} ({detail})")
                if not ok:
                    failures.append(label)
    if args.check and failures:
        print(f"{len(failures)} benchmark check(s) failed", file=sys.stderr)
        return CHECK_FAILED
    return 0


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        _fill_defaults(args)
        handler = {
            "simulate": _cmd_simulate,
            "fit": _cmd_fit,
            "productivity": _cmd_productivity,
            "residuals": _cmd_residuals,
            "bench": _cmd_bench,
        }[args.command]
        return handler(args)
    except (OSError, ValueError, CatalogParseError, SingularMatrixError, ZeroSumError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

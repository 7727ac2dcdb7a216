"""Command-line interface: ``spectralvol {simulate,estimate,montecarlo,table1}``.

Exit codes: 0 success, 2 configuration error, 3 numeric-domain error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .asymptotics import NumericDomainError
from .basis import BinGrid
from .linalg import SingularMatrixError
from .montecarlo import (ESTIMATORS, TABLE1_HEADER, ScenarioMismatchError, coverage_analysis,
                         format_table, run_monte_carlo, run_table1)
from .multivariate import adaptive_icv, adaptive_lmm, multivariate_grid
from .observations import ObservationSet
from .report import InvalidReportError
from .simulation import ScenarioConfig, simulate_paths, sample_noisy_observations, stream_generators
from .univariate import adaptive_iv, default_bins

log = logging.getLogger("spectralvol")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    pass


def load_config(path: str | None, seed: int | None = None) -> ScenarioConfig:
    try:
        cfg = ScenarioConfig.load(path) if path else ScenarioConfig()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    if seed is not None:
        cfg.seed = int(seed)
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed)
    gens = stream_generators(cfg.seed)
    paths = simulate_paths(cfg, gens["paths"])
    obs = sample_noisy_observations(paths, cfg, gens["obs"])
    if args.out:
        obs.to_csv(args.out)
        if args.paths_out:
            paths.to_csv(args.paths_out, every=args.every)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(["component", "time", "value"])
        for p in range(obs.d):
            for t, v in zip(obs.times[p], obs.values[p]):
                w.writerow([p, repr(float(t)), repr(float(v))])
    if paths.clamp_count:
        log.warning("volatility floor hit on %.3g%% of the fine grid", 100 * paths.clamp_fraction)
    return EXIT_OK


def cmd_estimate(args) -> int:
    try:
        obs = ObservationSet.from_csv(args.observations)
    except FileNotFoundError as exc:
        raise ConfigError(f"observation file not found: {args.observations}") from exc
    n = min(obs.n_obs(p) for p in range(obs.d))
    bins = args.bins or default_bins(n)
    estimator = args.estimator or ("iv" if obs.d == 1 else "lmm")
    kw = {"j_max": args.j_max} if args.j_max else {}
    if estimator in ("iv", "iv_adaptive"):
        if obs.d != 1:
            raise ConfigError("the iv estimator needs one component; use icv or lmm")
        grid = BinGrid.for_sample(bins, n) if obs.is_regular(0) else BinGrid.for_sample(bins)
        rep = adaptive_iv(obs, grid, **kw)
        rep.meta.pop("pilot", None)
    elif estimator in ("icv", "lmm"):
        if obs.d < 2 and estimator == "icv":
            raise ConfigError("the icv estimator needs two components")
        grid = multivariate_grid(obs, bins)
        rep = adaptive_icv(obs, grid, args.p, args.q, **kw) if estimator == "icv" else adaptive_lmm(obs, grid, **kw)
        rep.meta.pop("info_inverse", None)
    else:
        raise ConfigError(f"unknown estimator {estimator!r} for estimate (iv, icv, lmm)")
    rep.meta["level"] = args.level
    if args.format == "csv":
        rep.to_csv(args.out or sys.stdout, args.level)
    else:
        text = rep.to_json(args.out)
        if not args.out:
            print(text)
    return EXIT_OK


def _mc_options(args) -> dict:
    opts = {}
    if args.j_max:
        opts["j_max"] = args.j_max
    if args.pilot_j:
        opts["pilot_j"] = args.pilot_j
    return opts


def cmd_montecarlo(args) -> int:
    cfg = load_config(args.config, args.seed)
    estimator = args.estimator or ("iv_oracle" if cfg.d == 1 else "lmm")
    if estimator not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {estimator!r}; choose from {', '.join(ESTIMATORS)}")
    rep = run_monte_carlo(cfg, estimator, args.reps, cfg.seed, args.threads, args.level, **_mc_options(args))
    if not rep.is_vector:
        cov = coverage_analysis(rep, args.level)
        rep.aggregates["coverage_lo"], rep.aggregates["coverage_hi"] = cov.ci_low, cov.ci_high
    print(format_table([list(r) for r in rep.summary_rows()], ["quantity", "value"]))
    if args.out:
        if args.format == "csv":
            with open(args.out, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["rep", "estimate", "variance", "truth", "hit"])
                for r in rep.records:
                    row = [r.rep]
                    for x in (r.estimate, r.variance, r.truth, r.hit):
                        row.extend(np.ravel(x).tolist())
                    w.writerow(row)
        else:
            with open(args.out, "w") as fh:
                json.dump(rep.to_dict(), fh, indent=2)
    return EXIT_OK


def cmd_table1(args) -> int:
    rows = run_table1(args.reps, args.seed or 0, args.threads, **_mc_options(args))
    body = [r.as_list() for r in rows]
    print(format_table(body, TABLE1_HEADER))
    if args.out:
        if args.format == "csv":
            with open(args.out, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(TABLE1_HEADER + ["coverage_oracle", "coverage_adaptive"])
                for r, b in zip(rows, body):
                    w.writerow(b + [f"{r.coverage_oracle:.3f}", f"{r.coverage_adaptive:.3f}"])
        else:
            with open(args.out, "w") as fh:
                json.dump([r.__dict__ for r in rows], fh, indent=2)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectralvol",
                                     description="Spectral volatility estimation from noisy high-frequency data.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="scenario JSON file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output file (default: stdout where applicable)")
        p.add_argument("--format", choices=("csv", "json"), default="json")

    s = sub.add_parser("simulate", help="simulate noisy observations and write them as CSV")
    common(s)
    s.add_argument("--paths-out", help="also write the fine-grid truth to this CSV")
    s.add_argument("--every", type=int, default=10, help="thinning of the truth CSV")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate integrated (co)volatility from an observation CSV")
    e.add_argument("observations", help="CSV with header component,time,value")
    common(e, config=False)
    e.add_argument("--estimator", choices=("iv", "icv", "lmm"))
    e.add_argument("--bins", type=int, help="number of bins (default scales with n)")
    e.add_argument("--j-max", type=int)
    e.add_argument("--level", type=float, default=0.95)
    e.add_argument("-p", type=int, default=0)
    e.add_argument("-q", type=int, default=1)
    e.set_defaults(func=cmd_estimate)

    m = sub.add_parser("montecarlo", help="Monte Carlo study of one scenario")
    common(m)
    m.add_argument("--estimator", choices=ESTIMATORS)
    m.add_argument("--reps", type=int, default=1000)
    m.add_argument("--threads", type=int, default=1)
    m.add_argument("--level", type=float, default=0.95)
    m.add_argument("--j-max", type=int)
    m.add_argument("--pilot-j", type=int)
    m.set_defaults(func=cmd_montecarlo)

    t = sub.add_parser("table1", help="relative efficiencies of all twelve efficiency-table configurations")
    common(t, config=False)
    t.add_argument("--reps", type=int, default=1000)
    t.add_argument("--threads", type=int, default=1)
    t.add_argument("--j-max", type=int)
    t.add_argument("--pilot-j", type=int)
    t.set_defaults(func=cmd_table1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NumericDomainError, InvalidReportError, SingularMatrixError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ScenarioMismatchError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

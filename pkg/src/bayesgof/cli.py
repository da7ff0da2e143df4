"""Command-line interface.

    bayesgof test --data x.txt --model gpd --method bayes --N 999 --seed 1
    bayesgof experiment --config study.cfg --workers 4 --output-dir results/
    bayesgof report --results results/study.csv --grid-size 100

Exit status: 0 success, 1 computational failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .distributions import GammaParams, GpdParams
from .errors import ConfigError, EstimationError, ResultParseError
from .gof import DEFAULT_N, DEFAULT_N_OUTER, Method, ModelFamily, run_method
from .harness import (coverage_curve, format_distribution, format_result_line,
                      load_config, read_result_table, rejection_rate,
                      run_experiment, with_output, write_result)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

HIST_BINS = 20


class UsageError(Exception):
    pass


def read_data_file(path) -> np.ndarray:
    """One observation per line; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ResultParseError(f"cannot read data file: {exc.strerror}", path) from exc
    values = []
    for lineno, line in enumerate(lines, 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            v = float(text)
        except ValueError:
            raise ResultParseError(f"not a number: {text!r}", path, lineno) from None
        if not math.isfinite(v):
            raise ResultParseError(f"non-finite value {text!r}", path, lineno)
        values.append(v)
    if len(values) < 2:
        raise ResultParseError("need at least 2 observations", path)
    return np.array(values)


def _parse_theta0(text, model):
    try:
        a, b = (float(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"--theta0 expects two comma-separated numbers, got {text!r}") from None
    try:
        return GammaParams(a, b) if model is ModelFamily.GAMMA else GpdParams(a, b)
    except ValueError as exc:
        raise UsageError(f"--theta0: {exc}") from None


def cmd_test(args) -> int:
    model = ModelFamily.parse(args.model)
    method = Method(args.method)
    if method is Method.EXACT and args.theta0 is None:
        raise UsageError("--method exact requires --theta0")
    if method is not Method.EXACT and args.theta0 is not None:
        raise UsageError("--theta0 is only valid with --method exact")
    theta0 = _parse_theta0(args.theta0, model) if args.theta0 else None
    x = read_data_file(args.data)
    if np.any(x <= 0):
        raise UsageError(f"{args.data}: {model.value} data must be positive")
    rng = np.random.default_rng(args.seed)
    try:
        res = run_method(method, x, model, rng, N=args.N, mode=args.mode,
                         inner_n=args.inner_n, n_outer=args.n_outer, theta0=theta0)
    except (EstimationError, ValueError) as exc:
        print(f"error: test failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if args.machine:
        print(format_result_line(0, method.value, res.p_value, res.observed_stat, res.n_failed))
    else:
        print(f"model           {model.value}")
        print(f"method          {method.value}")
        print(f"n               {x.size}")
        print(f"p_value         {res.p_value:.6f}")
        print(f"observed_stat   {res.observed_stat:.6f}")
        print(f"replicates_used {res.n_replicates_used}")
        print(f"failed          {res.n_failed}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    cfg = load_config(args.config)
    if args.output_dir is not None:
        cfg = with_output(cfg, Path(args.output_dir) / Path(cfg.output_path).name)
    result = run_experiment(cfg, workers=args.workers)
    write_result(result)
    dist = format_distribution(cfg.sampling)
    for m in result.methods():
        try:
            rate = rejection_rate(result.p_values[m], 0.05)
        except ValueError:
            rate = math.nan
        print(f"{dist} {m} {rate:.4f}")
    return EXIT_OK


def cmd_report(args) -> int:
    if args.grid_size < 2:
        raise UsageError("--grid-size must be at least 2")
    table = read_result_table(args.results)
    edges = np.linspace(0.0, 1.0, HIST_BINS + 1)
    grid = np.arange(1, args.grid_size) / args.grid_size
    print("method,bin_lo,bin_hi,count")
    for m, (p, _, _) in table.items():
        ok = p[~np.isnan(p)]
        counts, _ = np.histogram(ok, bins=edges)
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            print(f"{m},{lo:.2f},{hi:.2f},{c}")
    print()
    print("method,level,coverage")
    for m, (p, _, _) in table.items():
        if np.all(np.isnan(p)):
            continue
        for lv, cov in coverage_curve(p, grid):
            print(f"{m},{lv:.6g},{cov:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayesgof", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run one goodness-of-fit test on a data file")
    t.add_argument("--data", required=True, help="one observation per line")
    t.add_argument("--model", required=True, choices=["gamma", "gpd"])
    t.add_argument("--method", required=True, choices=[m.value for m in Method])
    t.add_argument("--N", type=int, default=DEFAULT_N, help="replicates (default %(default)s)")
    t.add_argument("--mode", choices=["approximate", "exact"], default="approximate",
                   help="Bayes statistic mode")
    t.add_argument("--inner-n", type=int, default=None,
                   help="posterior draws per replicate in exact mode (default: N)")
    t.add_argument("--n-outer", type=int, default=DEFAULT_N_OUTER, help="posterior draws for ppp")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--theta0", help="null parameters 'a,b' for --method exact")
    t.add_argument("--machine", action="store_true", help="print one result CSV line")
    t.set_defaults(func=cmd_test)

    e = sub.add_parser("experiment", help="run a Monte Carlo experiment from a config file")
    e.add_argument("--config", required=True)
    e.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
    e.add_argument("--output-dir", default=None, help="directory for the result CSVs")
    e.set_defaults(func=cmd_experiment)

    r = sub.add_parser("report", help="histogram and coverage tables from a result CSV")
    r.add_argument("--results", required=True)
    r.add_argument("--grid-size", type=int, default=100, help="coverage grid spacing 1/G (default %(default)s)")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("N", "inner_n", "n_outer", "workers"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            print(f"error: --{name.replace('_', '-')} must be positive", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, ResultParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EstimationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

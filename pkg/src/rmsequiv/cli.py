"""Command-line interface: data ingestion, tests, estimation, simulation grids.

Exit codes: 0 success, 2 usage/parse problems, 3 degenerate data,
4 internal numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time
from importlib import resources

from . import __version__
from .data import DegenerateDataError, Hypothesis, SummaryStats, TestResult
from .estimate import ConvergenceError, fit_mle
from .gt import GtConfig, gt_ci, gt_ci_plain, gt_pvalue, gt_pvalue_plain
from .kernels import active_backend
from .sim import (ConfigError, ScenarioError, format_grid_tables, load_config,
                  run_grid)
from .ztests import NULL_VARIANCE_MODES, z_score_test, z_wald_test

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_NUMERICAL = 4

_METHOD_CHOICES = ("gt", "gt-plain", "zscore", "zwald")


class CliParseError(Exception):
    """Input file could not be parsed; message carries line/column context."""


def _default_parallelism() -> int:
    env = os.environ.get("RMSEQUIV_PARALLELISM", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


# ---------------------------------------------------------------------------
# input ingestion
# ---------------------------------------------------------------------------

def _read_rows(path: str) -> list[tuple[int, list[str]]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = []
            for lineno, row in enumerate(reader, start=1):
                if not row or all(not cell.strip() for cell in row):
                    continue
                rows.append((lineno, [cell.strip() for cell in row]))
    except OSError as exc:
        raise CliParseError(f"{path}: cannot read ({exc})") from exc
    except csv.Error as exc:
        raise CliParseError(f"{path}: CSV error: {exc}") from exc
    if not rows:
        raise CliParseError(f"{path}: file is empty")
    return rows


def read_long_csv(path: str) -> SummaryStats:
    """Ingest `subject,value` rows (header required, any subject interleaving)."""
    rows = _read_rows(path)
    lineno, header = rows[0]
    if [h.lower() for h in header] != ["subject", "value"]:
        raise CliParseError(
            f"{path}:{lineno}: expected header 'subject,value', got {','.join(header)!r}"
        )
    order: list[str] = []
    values: dict[str, list[float]] = {}
    for lineno, row in rows[1:]:
        if len(row) != 2:
            raise CliParseError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        subject, raw = row
        try:
            value = float(raw)
        except ValueError as exc:
            raise CliParseError(
                f"{path}:{lineno}: column 2: {raw!r} is not a number"
            ) from exc
        if subject not in values:
            order.append(subject)
            values[subject] = []
        values[subject].append(value)
    from .data import GroupedSample, summarize

    return summarize(GroupedSample([(s, values[s]) for s in order]))


def read_summary_csv(path: str, sse: float) -> SummaryStats:
    """Ingest `m,mean` rows (one subject per row, order defining the index)."""
    rows = _read_rows(path)
    lineno, header = rows[0]
    if [h.lower() for h in header] != ["m", "mean"]:
        raise CliParseError(
            f"{path}:{lineno}: expected header 'm,mean', got {','.join(header)!r}"
        )
    m: list[int] = []
    ybar: list[float] = []
    for lineno, row in rows[1:]:
        if len(row) != 2:
            raise CliParseError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            count = int(row[0])
        except ValueError as exc:
            raise CliParseError(
                f"{path}:{lineno}: column 1: {row[0]!r} is not an integer"
            ) from exc
        try:
            mean = float(row[1])
        except ValueError as exc:
            raise CliParseError(
                f"{path}:{lineno}: column 2: {row[1]!r} is not a number"
            ) from exc
        m.append(count)
        ybar.append(mean)
    return SummaryStats(m=tuple(m), ybar=tuple(ybar), sse=sse)


def _load_input(args) -> SummaryStats:
    if args.format == "summary":
        if args.sse is None:
            raise CliParseError("--sse is required with --format summary")
        return read_summary_csv(args.input, args.sse)
    if args.sse is not None:
        raise CliParseError("--sse only applies to --format summary")
    return read_long_csv(args.input)


def _digest(summary: SummaryStats) -> str:
    h = hashlib.sha256()
    h.update(repr((summary.m, summary.ybar, summary.sse)).encode())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _echo_config(command: str, pairs: list[tuple[str, object]]) -> None:
    rendered = " ".join(f"{k}={v}" for k, v in pairs)
    print(f"# rmsequiv {command} {rendered}")


def _estimates_dict(result: TestResult) -> dict:
    est = result.estimates
    return {"mu": est.mu, "sigma_w": est.sigma_w, "sigma_b": est.sigma_b, "rho": est.rho}


def cmd_test(args) -> int:
    summary = _load_input(args)
    hyp = Hypothesis(rho0=args.rho0, alpha=args.alpha)
    cfg = GtConfig(B=args.B, seed=args.seed)
    _echo_config("test", [
        ("method", args.method), ("format", args.format), ("input", args.input),
        ("sse", summary.sse), ("rho0", args.rho0), ("alpha", args.alpha),
        ("B", args.B), ("seed", args.seed), ("parallelism", args.parallelism),
        ("null-variance", args.null_variance), ("backend", active_backend()),
        ("version", __version__),
    ])
    if args.method == "gt":
        result = gt_pvalue(summary, hyp, cfg, parallelism=args.parallelism)
    elif args.method == "gt-plain":
        result = gt_pvalue_plain(summary, hyp, cfg, parallelism=args.parallelism)
    elif args.method == "zscore":
        result = z_score_test(summary, hyp, null_variance=args.null_variance)
    else:
        result = z_wald_test(summary, hyp)

    level = 100.0 * (1.0 - args.alpha)
    print(f"method: {result.method}")
    print(f"p-value: {result.p_value:.4g}")
    print(f"{level:g}% CI for rho: [{result.ci_rho[0]:.3f}, {result.ci_rho[1]:.3f}]")
    if result.ci_rho2 is not None:
        print(f"{level:g}% CI for rho^2: [{result.ci_rho2[0]:.3f}, {result.ci_rho2[1]:.3f}]")
    est = result.estimates
    print(f"estimates: mu={est.mu:.4f} sigma_w={est.sigma_w:.4f} "
          f"sigma_b={est.sigma_b:.4f} rho={est.rho:.4f}")
    if result.B is not None:
        print(f"replication: B={result.B} seed={result.seed}")
    if args.json:
        record = {
            "command": "test", "method": result.method, "format": args.format,
            "input": args.input, "input_digest": _digest(summary),
            "n": summary.n, "N": summary.total_n, "sse": summary.sse,
            "rho0": args.rho0, "alpha": args.alpha, "B": result.B,
            "seed": result.seed, "parallelism": args.parallelism,
            "null_variance": args.null_variance, "backend": active_backend(),
            "version": __version__, "p_value": result.p_value,
            "ci_rho": list(result.ci_rho),
            "ci_rho2": None if result.ci_rho2 is None else list(result.ci_rho2),
            "estimates": _estimates_dict(result),
        }
        print(json.dumps(record, sort_keys=True))
    return EXIT_OK


def cmd_estimate(args) -> int:
    summary = _load_input(args)
    _echo_config("estimate", [
        ("format", args.format), ("input", args.input), ("sse", summary.sse),
        ("backend", active_backend()), ("version", __version__),
    ])
    report = fit_mle(summary)
    p = report.params
    print(f"mu_hat: {p.mu:.6f}")
    print(f"sigma_w_hat: {p.sigma_w:.6f}")
    print(f"sigma_b_hat: {p.sigma_b:.6f}")
    print(f"rho_hat: {p.rho:.6f}")
    print(f"neg2loglik: {report.neg2loglik:.6f}")
    print(f"boundary_sigma_b2: {report.boundary_sigma_b2}")
    if args.json:
        record = {
            "command": "estimate", "format": args.format, "input": args.input,
            "input_digest": _digest(summary), "n": summary.n, "N": summary.total_n,
            "sse": summary.sse, "backend": active_backend(), "version": __version__,
            "estimates": {"mu": p.mu, "sigma_w": p.sigma_w, "sigma_b": p.sigma_b,
                          "rho": p.rho},
            "neg2loglik": report.neg2loglik, "converged": report.converged,
            "boundary_sigma_b2": report.boundary_sigma_b2,
        }
        print(json.dumps(record, sort_keys=True))
    return EXIT_OK


def _resolve_config(path: str) -> str:
    if os.path.exists(path):
        return path
    bundled = resources.files("rmsequiv").joinpath("configs")
    for candidate in (path, path + ".cfg"):
        ref = bundled.joinpath(candidate)
        if ref.is_file():
            return str(ref)
    raise CliParseError(f"config not found: {path!r} (not a file, not bundled)")


def cmd_simulate(args) -> int:
    path = _resolve_config(args.config)
    title, scenarios = load_config(path)
    if args.full_scale:
        scenarios = [dataclasses.replace(sc, nsim=10_000, B=10_000) for sc in scenarios]
    _echo_config("simulate", [
        ("config", path), ("title", title or "-"), ("scenarios", len(scenarios)),
        ("parallelism", args.parallelism), ("full-scale", args.full_scale),
        ("backend", active_backend()), ("version", __version__),
    ])
    t0 = time.perf_counter()
    log_sink = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        results = run_grid(scenarios, parallelism=args.parallelism, log_sink=log_sink)
    finally:
        if log_sink is not None:
            log_sink.close()
    print(format_grid_tables(results))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"title": title, "results": [r.to_dict() for r in results]},
                      fh, indent=2, sort_keys=True)
        print(f"results written to {args.out}")
    if args.log:
        print(f"per-replicate log written to {args.log}")
    print(f"total runtime: {time.perf_counter() - t0:.2f} s")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_input_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("input", help="CSV file (see --format)")
    parser.add_argument("--format", choices=("long", "summary"), default="long",
                        help="'long': subject,value rows; 'summary': m,mean rows "
                             "plus --sse (default: long)")
    parser.add_argument("--sse", type=float, default=None,
                        help="within-subject sum of squares (required with --format summary)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmsequiv",
        description="Equivalency testing of paired repeated-measure comparison data "
                    "via the root-mean-squares parameter of a one-way random-effects model.",
    )
    parser.add_argument("--version", action="version", version=f"rmsequiv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run an equivalency test")
    _add_input_args(p_test)
    p_test.add_argument("--rho0", type=float, required=True, help="equivalency threshold")
    p_test.add_argument("--alpha", type=float, default=0.05,
                        help="significance level / 1 - CI coefficient (default 0.05)")
    p_test.add_argument("--method", choices=_METHOD_CHOICES, default="gt",
                        help="test method (default gt)")
    p_test.add_argument("--B", type=int, default=10_000,
                        help="Monte Carlo draws for the gt methods (default 10000)")
    p_test.add_argument("--seed", type=int, default=0, help="stream seed (default 0)")
    p_test.add_argument("--null-variance", choices=NULL_VARIANCE_MODES,
                        default="constrained", dest="null_variance",
                        help="null-variance recipe for zscore (default constrained)")
    p_test.add_argument("--parallelism", type=int, default=_default_parallelism(),
                        help="worker threads for the Monte Carlo engine "
                             "(default $RMSEQUIV_PARALLELISM or 1)")
    p_test.add_argument("--json", action="store_true",
                        help="also print one machine-readable JSON record")
    p_test.set_defaults(func=cmd_test)

    p_est = sub.add_parser("estimate", help="maximum-likelihood estimation only")
    _add_input_args(p_est)
    p_est.add_argument("--json", action="store_true",
                       help="also print one machine-readable JSON record")
    p_est.set_defaults(func=cmd_estimate)

    p_sim = sub.add_parser("simulate", help="run a scenario grid from a config file")
    p_sim.add_argument("config", help="YAML config path or bundled name (e.g. table1.cfg)")
    p_sim.add_argument("--parallelism", type=int, default=_default_parallelism(),
                       help="worker processes across replicates "
                            "(default $RMSEQUIV_PARALLELISM or 1)")
    p_sim.add_argument("--out", default=None, help="write machine-readable results JSON here")
    p_sim.add_argument("--log", default=None, help="write per-replicate JSONL records here")
    p_sim.add_argument("--full-scale", action="store_true",
                       help="override nsim and B to 10000 each (long runtime)")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "test":
            if args.B < 100:
                parser.error("--B must be >= 100")
            if not (0.0 < args.alpha < 1.0):
                parser.error("--alpha must lie in (0, 1)")
            if args.rho0 <= 0.0:
                parser.error("--rho0 must be > 0")
        return args.func(args)
    except CliParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print("config errors:", file=sys.stderr)
        for item in exc.errors:
            print(f"  - {item}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateDataError as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ConvergenceError, ScenarioError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

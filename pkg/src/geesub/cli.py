"""Command-line interface: simulate, fit, subsample, benchmark.

Every run validates its configuration before any compute starts and
writes a self-describing provenance block (full config, seed, package
version) into its JSON outputs.  All randomness flows from the --seed
flag.  Exit codes: 0 success, 2 configuration error, 3 data/IO error,
4 numeric or convergence error, 5 benchmark failure-rate error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import SimulationConfig, run_benchmark, write_result_csv
from .correlation import parse_structure
from .errors import (
    BenchmarkError,
    ConvergenceError,
    DataError,
    DegenerateError,
    DomainError,
    GeesubError,
    InfeasibleError,
    RankError,
)
from .inference import confidence_interval, sandwich_full, sandwich_subsample
from .panel import load_csv, validate_conditions, write_csv
from .simulate import simulate_panel
from .solver import fit
from .subsampling import subsample_fit, two_step_fit, uniform_plan

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_BENCHMARK = 5

_STRUCTURES = ("ind", "ex", "ar1", "ma1", "unstructured")
_FAMILIES = ("gaussian_identity", "bernoulli_logit")


class ConfigError(Exception):
    """Configuration problem detected before compute starts."""


def _provenance(args: argparse.Namespace) -> dict:
    config = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "config") and not k.startswith("_")
    }
    return {"version": __version__, "config": config}


def _write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]):
    """Let --config KEY=VALUE pairs in a JSON file stand in for flags."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return argv
    path = Path(known.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        values = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(values, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    extra: list[str] = []
    for key, value in values.items():
        flag = "--" + str(key).replace("_", "-")
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        else:
            extra.extend([flag, str(value)])
    # command-line flags win: file-derived flags come first
    return argv[:1] + extra + argv[1:]


def cmd_simulate(args) -> int:
    if args.rows_out is None:
        raise ConfigError("--out is required")
    try:
        data, beta0 = simulate_panel(
            args.case, args.n, args.m, args.p,
            args.true_structure, args.alpha, args.seed,
        )
    except DomainError as exc:
        # generator inputs are all configuration, so this is a config error
        raise ConfigError(str(exc)) from exc
    write_csv(data, args.rows_out)
    sidecar = Path(args.rows_out).with_suffix(".json")
    payload = _provenance(args)
    payload["truth"] = {
        "beta0": beta0.tolist(),
        "structure": parse_structure(args.true_structure).value,
        "alpha": args.alpha,
        "seed": args.seed,
        "n": args.n,
        "m": args.m,
        "p": args.p,
        "family": "gaussian_identity",
    }
    _write_json(sidecar, payload)
    print(f"wrote {args.n * args.m} rows to {args.rows_out} (truth: {sidecar})")
    return EXIT_OK


def cmd_fit(args) -> int:
    data = load_csv(args.input, args.family)
    diagnostics = validate_conditions(data)
    for flag in diagnostics.flags:
        print(f"warning: {flag}", file=sys.stderr)
    started = time.perf_counter()
    result = fit(data, args.structure)
    elapsed = time.perf_counter() - started
    payload = _provenance(args)
    payload["fit"] = result.to_dict()
    payload["design"] = diagnostics.to_dict()
    payload["timings"] = {"fit_seconds": elapsed}
    if args.cov:
        payload["sandwich"] = sandwich_full(data, result).to_dict()
    _write_json(args.out, payload)
    print(
        f"fit converged in {result.iterations} iterations "
        f"(alpha={result.correlation.alpha}, phi={result.dispersion:.6g}) "
        f"-> {args.out}"
    )
    return EXIT_OK


def _validate_subsample_args(args, n_subjects: int):
    if args.r1 < 1 or args.r2 < 1:
        raise ConfigError("r1 and r2 must be positive")
    if not 0.0 < args.rho < 1.0:
        raise ConfigError(f"rho={args.rho} must lie in (0, 1)")
    if not 0.0 < args.level < 1.0:
        raise ConfigError(f"level={args.level} must lie in (0, 1)")
    if args.r1 + args.r2 > n_subjects:
        raise ConfigError(
            f"r1 + r2 = {args.r1 + args.r2} exceeds the subject count "
            f"{n_subjects}"
        )
    if args.contrast_index < 0:
        raise ConfigError("contrast index must be non-negative")


def cmd_subsample(args) -> int:
    # fail-fast range checks that need no data
    if not 0.0 < args.rho < 1.0:
        raise ConfigError(f"rho={args.rho} must lie in (0, 1)")
    if args.dump_h_scores and args.method.lower() == "punif":
        raise ConfigError("--dump-h-scores applies to pmv/pmvc only")
    data = load_csv(args.input, args.family)
    _validate_subsample_args(args, data.n)
    if args.contrast_index >= data.p:
        raise ConfigError(
            f"contrast index {args.contrast_index} out of range for p={data.p}"
        )
    payload = _provenance(args)
    method = args.method.lower()
    started = time.perf_counter()
    if method == "punif":
        plan = uniform_plan(data.n, args.r1 + args.r2)
        fitted, draw = subsample_fit(data, args.structure, plan, args.seed)
        payload["plan"] = plan.to_dict()
        payload["plan"]["uniform_probability"] = (args.r1 + args.r2) / data.n
        payload["realized_size"] = draw.realized_size
        payload["timings"] = {"estimation_seconds": time.perf_counter() - started}
    else:
        criterion = {"pmv": "MV", "pmvc": "MVc"}[method]
        result = two_step_fit(
            data, args.structure, args.r1, args.r2, criterion,
            rho=args.rho, seed=args.seed,
        )
        fitted, draw, plan = result.fit, result.draw, result.plan
        payload.update(result.to_dict())
        if args.dump_h_scores:
            with Path(args.dump_h_scores).open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["subject", "h_score", "probability"])
                for sid, h, pi in zip(
                    data.subject_ids, result.scores.values, plan.probabilities
                ):
                    writer.writerow([sid, repr(float(h)), repr(float(pi))])
    payload["fit"] = fitted.to_dict()
    cov = sandwich_subsample(draw, data, fitted, plan, mode=args.sandwich_mode)
    payload["sandwich"] = cov.to_dict()
    contrast = np.zeros(data.p)
    contrast[args.contrast_index] = 1.0
    payload["interval"] = confidence_interval(
        fitted, cov, contrast, args.level
    ).to_dict()
    _write_json(args.out, payload)
    print(
        f"{args.method} estimate written to {args.out} "
        f"(realized size {draw.realized_size})"
    )
    return EXIT_OK


def cmd_benchmark(args) -> int:
    reps = args.reps
    p_values = [args.p]
    if args.profile == "paper":
        reps = 1000
        p_values = [30, 50, 70]
        print(
            "warning: the paper profile runs 1000 replications at "
            f"p in {{30, 50, 70}} on n={args.n}; expect hours of runtime",
            file=sys.stderr,
        )
    configs = []
    try:
        for p in p_values:
            configs.append(
                SimulationConfig(
                    n=args.n,
                    m=args.m,
                    p=p,
                    case=args.case,
                    true_structure=args.true_structure,
                    alpha=args.alpha,
                    working_structure=args.working_structure,
                    r1=args.r1,
                    r2_grid=tuple(int(v) for v in args.r2_grid.split(",")),
                    rho=args.rho,
                    replications=reps,
                    base_seed=args.seed,
                )
            )
    except (DomainError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    results = [run_benchmark(config, n_jobs=args.threads) for config in configs]
    if args.out_csv:
        write_result_csv(results, args.out_csv)
    if args.out_json:
        payload = _provenance(args)
        payload["results"] = [r.to_dict() for r in results]
        _write_json(args.out_json, payload)
    for result in results:
        for cell in result.cells:
            r2 = "" if cell.r2 is None else cell.r2
            print(
                f"p={result.config.p} method={cell.method:<6} r2={r2!s:<5} "
                f"mse={cell.mse:.6e} log_mse={cell.log_mse:+.4f} "
                f"time={cell.mean_time_s:.4f}s failures={cell.failures}"
            )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geesub",
        description=(
            "Generalized estimating equations with optimal Poisson "
            "subsampling for balanced panels"
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic panel CSV")
    sim.add_argument("--config", default=None, help="JSON file of flag values")
    sim.add_argument("--out", dest="rows_out", required=True)
    sim.add_argument("--case", choices=("t3", "lognormal"), default="t3")
    sim.add_argument("--n", type=int, default=1000)
    sim.add_argument("--m", type=int, default=5)
    sim.add_argument("--p", type=int, default=30)
    sim.add_argument("--true-structure", choices=_STRUCTURES[:4], default="ar1")
    sim.add_argument("--alpha", type=float, default=0.5)
    sim.add_argument("--seed", type=int, default=0)
    sim.set_defaults(func=cmd_simulate)

    fit_p = sub.add_parser("fit", help="full-data GEE fit")
    fit_p.add_argument("--config", default=None)
    fit_p.add_argument("--input", required=True)
    fit_p.add_argument("--family", choices=_FAMILIES, default="gaussian_identity")
    fit_p.add_argument("--structure", choices=_STRUCTURES, default="ar1")
    fit_p.add_argument("--out", default="fit.json")
    fit_p.add_argument(
        "--cov", action="store_true",
        help="include the full-data sandwich covariance",
    )
    fit_p.set_defaults(func=cmd_fit)

    ss = sub.add_parser("subsample", help="subsampled GEE fit with inference")
    ss.add_argument("--config", default=None)
    ss.add_argument("--input", required=True)
    ss.add_argument("--family", choices=_FAMILIES, default="gaussian_identity")
    ss.add_argument("--structure", choices=_STRUCTURES, default="ar1")
    ss.add_argument("--method", choices=("punif", "pmv", "pmvc"), required=True)
    ss.add_argument("--r1", type=int, default=200)
    ss.add_argument("--r2", type=int, default=600)
    ss.add_argument("--rho", type=float, default=0.2)
    ss.add_argument("--seed", type=int, default=0)
    ss.add_argument("--level", type=float, default=0.95)
    ss.add_argument("--contrast-index", type=int, default=0)
    ss.add_argument("--sandwich-mode", choices=("ht", "plain"), default="ht")
    ss.add_argument("--out", default="subsample.json")
    ss.add_argument("--dump-h-scores", default=None, metavar="CSV")
    ss.set_defaults(func=cmd_subsample)

    bm = sub.add_parser("benchmark", help="replicated method comparison")
    bm.add_argument("--config", default=None)
    bm.add_argument("--case", choices=("t3", "lognormal"), default="t3")
    bm.add_argument("--n", type=int, default=10_000)
    bm.add_argument("--m", type=int, default=5)
    bm.add_argument("--p", type=int, default=30)
    bm.add_argument("--true-structure", choices=_STRUCTURES[:4], default="ar1")
    bm.add_argument("--alpha", type=float, default=0.5)
    bm.add_argument("--working-structure", choices=_STRUCTURES[:4], default="ar1")
    bm.add_argument("--r1", type=int, default=200)
    bm.add_argument("--r2-grid", default="100,200,400,600,800,1000")
    bm.add_argument("--rho", type=float, default=0.2)
    bm.add_argument("--reps", type=int, default=100)
    bm.add_argument("--seed", type=int, default=0)
    bm.add_argument("--profile", choices=("desk", "paper"), default="desk")
    bm.add_argument("--threads", type=int, default=1)
    bm.add_argument("--out-csv", default="benchmark.csv")
    bm.add_argument("--out-json", default=None)
    bm.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BenchmarkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BENCHMARK
    except (
        ConvergenceError,
        RankError,
        DegenerateError,
        InfeasibleError,
        DomainError,
        GeesubError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Each subcommand is independently invocable against a TOML config file:

    hdclt sufficiency  --config exp.toml [--seed N] [--out DIR] [--format csv]
    hdclt necessity    --config exp.toml
    hdclt example-cases --config exp.toml
    hdclt zone-diagnostics --config exp.toml
    hdclt bounds-report --config exp.toml
    hdclt solve-lambda --config exp.toml [--n 1000 --n 10000]
    hdclt solve-bn     --config exp.toml [--n 1000]
    hdclt simulate     --config exp.toml [--n 1000]
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .errors import HdcltError
from .experiments import (
    emit_report,
    load_config,
    run_bounds_report,
    run_example_cases,
    run_necessity,
    run_sufficiency,
    run_zone_diagnostics,
    spec_hash,
)
from .montecarlo import rho_max, simulate_marginal
from .scaling import solve_bn, solve_lambda_for_spec
from .tails import make_distribution


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="TOML experiment config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", type=Path, default=None, help="override the output directory")
    p.add_argument("--format", choices=("csv", "json"), default=None,
                   help="override the report format")
    p.add_argument("--workers", type=int, default=None, help="kernel thread cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdclt",
                                     description="high-dimensional CLT laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sufficiency", "necessity", "example-cases", "zone-diagnostics",
                 "bounds-report"):
        p = sub.add_parser(name, help=f"run the {name.replace('-', ' ')} experiment")
        _add_common(p)
    for name in ("solve-lambda", "solve-bn", "simulate"):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} for the config spec")
        _add_common(p)
        p.add_argument("--n", type=int, action="append", default=None,
                       help="sample size(s); defaults to the config n_grid")
    return parser


def _load(args) -> "ExperimentConfig":
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.format is not None:
        overrides["format"] = args.format
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


_EXPERIMENT_RUNNERS = {
    "sufficiency": run_sufficiency,
    "necessity": run_necessity,
    "example-cases": run_example_cases,
    "zone-diagnostics": run_zone_diagnostics,
    "bounds-report": run_bounds_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load(args)
        if args.command in _EXPERIMENT_RUNNERS:
            expected = args.command.replace("-", "_")
            if config.experiment != expected:
                raise HdcltError(
                    f"config declares experiment={config.experiment!r}; "
                    f"this subcommand runs {expected!r}"
                )
            result = _EXPERIMENT_RUNNERS[args.command](config)
            paths = emit_report(result, config.format, config.output_dir)
            for kind, path in paths.items():
                print(f"{kind}: {path}")
            print(f"verdict: {result.verdict}")
            return 0 if result.verdict == "PASS" else 1
        ns = args.n or list(config.n_grid)
        if args.command == "solve-lambda":
            for n in ns:
                sol = solve_lambda_for_spec(config.spec, n)
                closed = "" if sol.closed_form is None else f"  closed={sol.closed_form!r}"
                print(f"n={n}  Lambda={sol.value!r}  residual={sol.residual:.3e}{closed}")
            return 0
        if args.command == "solve-bn":
            dist = make_distribution(config.spec)
            for n in ns:
                sol = solve_bn(dist, n)
                print(f"n={n}  B_n={sol.value!r}  residual={sol.residual:.3e}")
            return 0
        # simulate
        dist = make_distribution(config.spec)
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for n in ns:
            f_hat = simulate_marginal(dist, n, config.reps, config.seed, config.workers)
            path = out_dir / f"{spec_hash(config.spec)}_{n}_{config.reps}_{config.seed}.ecdf"
            f_hat.save(path)
            ks = rho_max(f_hat, 0.0).rho_hat
            print(f"n={n}  reps={config.reps}  KS-to-normal={ks:.6f}  -> {path}")
        return 0
    except HdcltError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

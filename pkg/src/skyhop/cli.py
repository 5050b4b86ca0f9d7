"""Command-line entry point.

Subcommands mirror the pipeline stages; every failure maps to a stable
exit code (0 success, 2 infeasible, 3 timeout, 4 bad input).
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, SkyhopError
from .pipeline import run_allocate, run_bench, run_preprocess, run_route, run_simulate
from .scenario import ScenarioConfig


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return raw


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skyhop",
        description="Plan transit-riding delivery drones: allocate, route, replan.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def stage(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="scenario config JSON")
        p.add_argument("--out", required=True, help="output directory")
        return p

    stage("preprocess", "build or refresh the travel-time surrogate")
    stage("allocate", "assign packages to agents as delivery walks")
    stage("route", "jointly route every agent's first mission")
    stage("simulate", "execute all walks to completion with replanning")
    stage("bench", "run a config matrix and aggregate per-cell results")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bench":
        summary = run_bench(_load_json(args.config), args.out)
    else:
        config = ScenarioConfig.from_file(args.config)
        runner = {
            "preprocess": run_preprocess,
            "allocate": run_allocate,
            "route": run_route,
            "simulate": run_simulate,
        }[args.command]
        summary = runner(config, args.out)
    for key in sorted(summary):
        print(f"{key}={summary[key]}")
    return 0


def main(argv: list[str] | None = None) -> None:
    try:
        sys.exit(run(argv))
    except SkyhopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    main()

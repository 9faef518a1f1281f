"""Batch command-line front end.

One experiment per invocation, configured by a JSON manifest; flags
override file values.  Exit codes: 0 success, 2 configuration error,
3 ingestion error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys

from pptree.datasets import IngestionError
from pptree.experiments import (
    ConfigurationError,
    load_manifest,
    recompute_lpml,
    regrid_from_states,
    run_fit,
    run_fit_regression,
    run_prior_simulation,
)
from pptree.inference import ChainDivergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGESTION = 3
EXIT_NUMERICAL = 4

_EXPERIMENT_FOR_COMMAND = {
    "simulate-prior": "prior-sim",
    "fit": "fit",
    "fit-regression": "fit-regression",
}


def _apply_override(doc: dict, assignment: str) -> None:
    """Apply a dotted key=value override, e.g. ``chain.thin=2``."""
    if "=" not in assignment:
        raise ConfigurationError(f"override {assignment!r} is not key=value")
    dotted, raw = assignment.split("=", 1)
    keys = dotted.split(".")
    node = doc
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"cannot descend into {dotted!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node[keys[-1]] = value


def _load_doc(args: argparse.Namespace) -> dict:
    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {args.config} is not valid JSON: {exc}") from exc
    doc["experiment"] = _EXPERIMENT_FOR_COMMAND[args.command]
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.output is not None:
        doc["output_dir"] = args.output
    if args.data is not None:
        doc.setdefault("dataset", {})["path"] = args.data
    for assignment in args.set or []:
        _apply_override(doc, assignment)
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pptree",
        description="Projected Polya tree models for directional data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_command(name: str, help_text: str) -> None:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON manifest path")
        cmd.add_argument("--seed", type=int, default=None, help="override manifest seed")
        cmd.add_argument("--output", default=None, help="override output directory")
        cmd.add_argument("--data", default=None, help="override dataset path")
        cmd.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="dotted manifest override, e.g. chain.iterations=1000",
        )

    add_run_command("simulate-prior", "sample prior density paths and their moments")
    add_run_command("fit", "posterior analysis of directional data")
    add_run_command("fit-regression", "posterior analysis with linear covariates")

    cmd = sub.add_parser("lpml", help="recompute LPML from a stored likelihood matrix")
    cmd.add_argument("--from", dest="run_dir", required=True, help="previous run directory")

    cmd = sub.add_parser("grid", help="re-evaluate density grids from stored states")
    cmd.add_argument("--from", dest="run_dir", required=True, help="previous run directory")
    cmd.add_argument("--output", required=True, help="directory for the new grids")
    cmd.add_argument("--resolution", type=int, default=None, help="grid points per axis")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in _EXPERIMENT_FOR_COMMAND:
            manifest = load_manifest(_load_doc(args))
            runner = {
                "prior-sim": run_prior_simulation,
                "fit": run_fit,
                "fit-regression": run_fit_regression,
            }[manifest.experiment]
            summary = runner(manifest)
        elif args.command == "lpml":
            summary = recompute_lpml(args.run_dir)
        else:
            summary = regrid_from_states(args.run_dir, args.output, args.resolution)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestionError as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGESTION
    except (ChainDivergenceError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

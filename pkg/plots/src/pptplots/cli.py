"""Command-line entry point: one figure (or one check) per invocation."""

from __future__ import annotations

import argparse
import json
import sys

from pptplots.render import FIGURE_KINDS, FigureRequest, render
from pptplots.tables import SchemaError, read_table


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pptree-plots", description="Render pptree CSV outputs as PNG figures"
    )
    parser.add_argument("--request", help="JSON file holding the full figure request")
    parser.add_argument("--figure", choices=FIGURE_KINDS, help="figure kind")
    parser.add_argument("--input", action="append", default=[], help="input CSV (repeatable)")
    parser.add_argument("--curve", action="append", default=[], help="conditional-mean curve CSV")
    parser.add_argument("--output", help="output PNG path")
    parser.add_argument("--rotate", action="store_true", help="rotate theta_2 to [-pi, pi)")
    parser.add_argument("--xlim", nargs=2, type=float, default=None, metavar=("LO", "HI"))
    parser.add_argument("--ylim", nargs=2, type=float, default=None, metavar=("LO", "HI"))
    parser.add_argument("--title", default=None)
    parser.add_argument(
        "--check",
        metavar="CSV",
        help="check mode: re-emit the parsed table to stdout instead of rendering",
    )
    return parser


def request_from_args(args: argparse.Namespace) -> FigureRequest:
    if args.request:
        with open(args.request, encoding="utf-8") as fh:
            doc = json.load(fh)
        return FigureRequest(
            kind=doc["kind"],
            inputs=list(doc["inputs"]),
            output=doc["output"],
            curves=list(doc.get("curves", [])),
            rotate=bool(doc.get("rotate", False)),
            xlim=tuple(doc["xlim"]) if "xlim" in doc else None,
            ylim=tuple(doc["ylim"]) if "ylim" in doc else None,
            title=doc.get("title"),
        )
    if not (args.figure and args.input and args.output):
        raise ValueError("--figure, --input, and --output are required without --request")
    return FigureRequest(
        kind=args.figure,
        inputs=args.input,
        output=args.output,
        curves=args.curve,
        rotate=args.rotate,
        xlim=tuple(args.xlim) if args.xlim else None,
        ylim=tuple(args.ylim) if args.ylim else None,
        title=args.title,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.check:
            sys.stdout.write(read_table(args.check).emit())
            return 0
        path = render(request_from_args(args))
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Verbs:
    render <figure-spec-file>        render one figure
    render-batch <manifest-file>     render every spec listed in a manifest

Exit codes: 0 success, 2 spec/schema/input error.
"""

from __future__ import annotations

import argparse
import sys

from .errors import FigRenderError
from .render import load_spec, render, render_batch

EXIT_OK = 0
EXIT_ERROR = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figrender", description="Deterministic SVG figures from experiment CSVs."
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    one = sub.add_parser("render", help="render a single figure spec")
    one.add_argument("spec", help="path to a JSON figure spec")
    many = sub.add_parser("render-batch", help="render every spec in a manifest")
    many.add_argument("manifest", help="path to a JSON manifest listing spec files")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.verb == "render":
            out = render(load_spec(args.spec))
            print(f"wrote {out}")
        else:
            for out in render_batch(args.manifest):
                print(f"wrote {out}")
    except (FigRenderError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

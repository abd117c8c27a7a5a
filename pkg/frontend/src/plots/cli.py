"""Command line entry point: plots render --spec FILE --csv FILE --out FILE."""

from __future__ import annotations

import argparse
import sys

from .csvdata import CsvError
from .render import RenderError, render
from .spec import SpecError, load_spec


def build_parser():
    p = argparse.ArgumentParser(prog="plots", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render one figure from a spec and a results CSV")
    r.add_argument("--spec", required=True, help="plot spec file (INI, [figure] section)")
    r.add_argument("--csv", help="results CSV; overrides the spec's csv field")
    r.add_argument("--out", help="output image path; overrides the spec's out field")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args.spec)
        render(spec, csv_path=args.csv, out_path=args.out)
    except (SpecError, CsvError, RenderError) as e:
        print(f"plots: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""figplots plot --csv <paths> --panel <net|air> --group-by <col> --out <file>"""

from __future__ import annotations

import argparse
import sys

from .render import PANELS, PlotSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figplots", description="Render sweep-result CSVs as figures")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("plot", help="grouped line chart from result CSVs")
    p.add_argument("--csv", nargs="+", required=True, help="input CSV paths")
    p.add_argument("--panel", choices=sorted(PANELS), required=True)
    p.add_argument("--group-by", required=True, help="grouping column name")
    p.add_argument("--out", required=True, help="output image (SVG preferred)")
    p.add_argument("--stage", default="1",
                   help="stage-row filter when the column exists (default 1)")
    p.add_argument("--mode", default="decision",
                   help="mode-row filter when the column exists")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = PlotSpec(csv_paths=tuple(args.csv), panel=args.panel,
                    group_by=args.group_by, out_path=args.out,
                    filters={"stage": args.stage, "mode": args.mode})
    try:
        curves = render(spec)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    n_points = sum(len(x) for x, _ in curves.values())
    print(f"wrote {args.out}: {len(curves)} curve(s), {n_points} point(s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())

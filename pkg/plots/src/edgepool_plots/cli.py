"""Command-line figure renderer for sweep CSVs."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, PlotSpec, render, sidecar_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render a sweep-results figure with a sidecar data CSV.",
    )
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="input_csv", required=True, help="input CSV")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        out = render(PlotSpec(kind=args.kind, input_csv=args.input_csv,
                              output_path=args.out))
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out} and {sidecar_path(out)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

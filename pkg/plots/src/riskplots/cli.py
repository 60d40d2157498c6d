"""plot_figure command line entry point.

Exit codes: 0 on success, 2 when inputs are missing or malformed.
"""

from __future__ import annotations

import argparse
import sys

from .figure import FigureSpec, PlotDataError, render_figure

__all__ = ["main"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot_figure",
        description="Render the two-panel overlap/control figure from run artifacts.",
    )
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="directory holding final_state.csv and controls.csv")
    parser.add_argument("--out", dest="output_file", required=True,
                        help="image file to write (format from the extension)")
    args = parser.parse_args(argv)
    try:
        path = render_figure(FigureSpec(input_dir=args.input_dir, output_file=args.output_file))
    except PlotDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

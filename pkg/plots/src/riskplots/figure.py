"""Two-panel summary figure built from a run's CSV artifacts.

The reader consumes exactly two files from the input directory and nothing
else: final_state.csv (column "theta" plus one "overlap_<method>" column per
method) and controls.csv (column "t" plus matching "u_<method>" columns).
Rendering never writes to the input directory; the only output is the image
file named by the FigureSpec.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["FigureSpec", "PlotDataError", "build_figure", "render_figure"]

# Fixed method colors; extra methods draw from the overflow cycle in file
# order so repeated renders of the same data are pixel-stable.
PALETTE = {
    "avg": "#1f77b4",
    "worst": "#d62728",
    "avar": "#2ca02c",
    "ref": "#7f7f7f",
}
OVERFLOW_COLORS = ("#9467bd", "#8c564b", "#e377c2", "#bcbd22", "#17becf")


class PlotDataError(ValueError):
    """Input artifacts are missing or do not match the documented layout."""


@dataclass(frozen=True)
class FigureSpec:
    """What to read, where to draw it, and which method series to include.

    series=None plots every method found in the final-state header, in file
    order; an explicit tuple restricts and orders the series, and any name
    absent from a CSV is reported as a column error.
    """

    input_dir: str
    output_file: str
    layout: tuple = (1, 2)
    series: tuple | None = None

    def __post_init__(self):
        if tuple(self.layout) != (1, 2):
            raise PlotDataError(f"unsupported panel layout {self.layout!r}; only (1, 2)")


def _read_table(path: str, key_column: str, prefix: str):
    """Parse one artifact CSV into (key values, {method: values}).

    Column names are contractual: the first header cell must be key_column
    and every series header must start with prefix. Rows shorter than the
    header are reported with the name of the first column they lack.
    """
    fname = os.path.basename(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise PlotDataError(f"missing input file {fname!r}: {exc}") from exc
    if not rows:
        raise PlotDataError(f"file {fname!r} is empty; expected a {key_column!r} header")
    header = rows[0]
    if not header or header[0] != key_column:
        raise PlotDataError(
            f"file {fname!r} must start with column {key_column!r}, got {header[:1]!r}"
        )
    methods = []
    for name in header[1:]:
        if not name.startswith(prefix):
            raise PlotDataError(
                f"file {fname!r} has unexpected column {name!r}; expected {prefix}<method>"
            )
        methods.append(name[len(prefix):])
    if not methods:
        raise PlotDataError(f"file {fname!r} carries no {prefix}<method> columns")

    keys = []
    columns = {m: [] for m in methods}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) < len(header):
            missing = header[len(row)]
            raise PlotDataError(
                f"file {fname!r} line {lineno} is truncated at column {missing!r}"
            )
        if len(row) > len(header):
            raise PlotDataError(
                f"file {fname!r} line {lineno} has {len(row)} cells for "
                f"{len(header)} columns"
            )
        try:
            keys.append(float(row[0]))
            for m, cell in zip(methods, row[1:]):
                columns[m].append(float(cell))
        except ValueError as exc:
            raise PlotDataError(f"file {fname!r} line {lineno}: {exc}") from exc
    if not keys:
        raise PlotDataError(f"file {fname!r} has a header but no data rows")
    return keys, columns


def _draw(ax, x, column_map, series, file_label, prefix):
    overflow = 0
    for method in series:
        if method not in column_map:
            raise PlotDataError(
                f"file {file_label!r} has no column {prefix + method!r}"
            )
        if method in PALETTE:
            color = PALETTE[method]
        else:
            color = OVERFLOW_COLORS[overflow % len(OVERFLOW_COLORS)]
            overflow += 1
        y = column_map[method]
        style = {"marker": "o", "linestyle": "none"} if len(x) == 1 else {}
        ax.plot(x, y, label=method, color=color, **style)


def build_figure(spec: FigureSpec):
    """Assemble the matplotlib figure without writing it; returns the Figure."""
    thetas, overlaps = _read_table(
        os.path.join(spec.input_dir, "final_state.csv"), "theta", "overlap_"
    )
    times, controls = _read_table(
        os.path.join(spec.input_dir, "controls.csv"), "t", "u_"
    )
    series = tuple(spec.series) if spec.series is not None else tuple(overlaps)

    fig, (ax_left, ax_right) = plt.subplots(*spec.layout, figsize=(11.0, 4.0))
    _draw(ax_left, thetas, overlaps, series, "final_state.csv", "overlap_")
    ax_left.set_xlabel("θ")
    ax_left.set_ylabel("overlap")
    ax_left.legend()
    _draw(ax_right, times, controls, series, "controls.csv", "u_")
    ax_right.set_xlabel("t")
    ax_right.set_ylabel("u")
    ax_right.legend()
    fig.tight_layout()
    return fig


def render_figure(spec: FigureSpec) -> str:
    """Render the two panels and write the image; returns the output path."""
    fig = build_figure(spec)
    try:
        fig.savefig(spec.output_file)
    finally:
        plt.close(fig)
    return spec.output_file

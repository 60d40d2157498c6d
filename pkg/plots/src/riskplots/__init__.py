"""Figure rendering for ensemble control run artifacts."""

from .figure import FigureSpec, PlotDataError, build_figure, render_figure

__all__ = ["FigureSpec", "PlotDataError", "build_figure", "render_figure"]
__version__ = "0.1.0"

"""Static figure generation from sweep result CSVs."""

from .render import PANELS, PlotSpec, extract_curves, render

__version__ = "0.1.0"

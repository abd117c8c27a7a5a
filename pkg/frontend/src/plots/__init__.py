"""Render comparison figures from solver-experiment CSV results."""

from .spec import PlotSpec, SpecError, load_spec
from .csvdata import CsvError, read_rows
from .render import RenderError, render

__all__ = [
    "PlotSpec",
    "SpecError",
    "load_spec",
    "CsvError",
    "read_rows",
    "RenderError",
    "render",
]

"""Figure rendering for pptree CSV outputs."""

from pptplots.render import FIGURE_KINDS, FigureRequest, render
from pptplots.tables import SchemaError, Table, read_table

__all__ = ["FIGURE_KINDS", "FigureRequest", "SchemaError", "Table", "read_table", "render"]

__version__ = "0.1.0"

"""Deterministic SVG figure rendering for experiment CSV outputs."""

__version__ = "0.1.0"

from .errors import EmptyInputError, FigRenderError, SchemaError
from .render import FigureSpec, histogram_counts, load_spec, render, render_batch, spec_from_dict

"""Render sgmlab CSV artifacts into PNG figures.

Reads only the documented CSV schemas (density fields, Novikov tables,
distance and slope curves); it never imports or invokes sgmlab itself.
"""

from .discover import figure_specs_from_manifest, render_manifest
from .figures import DensityField, FigureSpec, SchemaError, load_spec, parse_spec
from .render import fit_loglog, render

__version__ = "0.1.0"

__all__ = [
    "DensityField",
    "FigureSpec",
    "SchemaError",
    "figure_specs_from_manifest",
    "fit_loglog",
    "load_spec",
    "parse_spec",
    "render",
    "render_manifest",
    "__version__",
]

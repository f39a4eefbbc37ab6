"""Static figure rendering for robustmfc experiment outputs."""

__version__ = "0.1.0"

from .render import FIGURE_IDS, FigureSpec, RenderError, RenderResult, discover_inputs, render

__all__ = ["FIGURE_IDS", "FigureSpec", "RenderError", "RenderResult",
           "discover_inputs", "render", "__version__"]

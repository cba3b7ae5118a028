"""Presentation layer: renders figures from the analysis toolkit's files.

This package reads only the published CSV/JSON interfaces and never
recomputes analysis quantities; deleting it changes nothing upstream.
"""

from .render import FigureSpec, SchemaDriftError, render

__version__ = "0.1.0"

"""Execution report, SVG plots and the live exposition endpoint."""

from .exposition import ExpositionServer, render_exposition, serve_exposition
from .plot import render_plot, svg_chart
from .report import (
    GpuSection, ReportModel, StatRow, build_report, render_console, render_markdown, session_series, write_report,
)

__all__ = [
    "ExpositionServer", "GpuSection", "ReportModel", "StatRow", "build_report", "render_console",
    "render_exposition", "render_markdown", "render_plot", "serve_exposition", "session_series", "svg_chart",
    "write_report",
]

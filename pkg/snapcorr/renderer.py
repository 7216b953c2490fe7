"""Render a finished report as a self-contained HTML page."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from jinja2 import Environment, FileSystemLoader

from snapcorr.export import write_atomic
from snapcorr.report import Report

STATUS_COLORS: dict[bool, str] = {
    True: "#2E8B57",
    False: "#C0392B",
}


def _fmt(value: object) -> str:
    """Numbers in short scientific notation for display; anything else as is."""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.6e}"
    return str(value)


def _plain(value: object) -> object:
    """Numpy arrays and scalars as lists and Python numbers."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _scalar_items(section: dict) -> list[tuple[str, object]]:
    return [(k, v) for k, v in section.items() if not isinstance(v, (list, dict))]


def _table_items(section: dict) -> list[tuple[str, list]]:
    return [
        (k, v) for k, v in section.items()
        if isinstance(v, list) and v and isinstance(v[0], dict)
    ]


def _vector_items(section: dict) -> list[tuple[str, list]]:
    return [
        (k, v) for k, v in section.items()
        if isinstance(v, list) and (not v or not isinstance(v[0], dict))
    ]


def render_html(report: Report) -> str:
    """Render *report* to an HTML string."""
    template_dir = Path(__file__).parent / "templates"
    env = Environment(
        loader=FileSystemLoader(str(template_dir)),
        autoescape=True,
    )
    env.filters["fmt"] = _fmt
    env.globals["STATUS_COLORS"] = STATUS_COLORS
    env.globals["scalar_items"] = _scalar_items
    env.globals["table_items"] = _table_items
    env.globals["vector_items"] = _vector_items

    template = env.get_template("report.html")
    return template.render(
        report=report,
        inputs=_plain(report.inputs),
        sections=_plain(report.sections),
    )


def render(report: Report, output_path: str) -> None:
    """Write the HTML rendering of *report* to *output_path*."""
    write_atomic(output_path, render_html(report))

"""Tests for snapcorr.renderer."""

from __future__ import annotations

import numpy as np

from snapcorr.renderer import STATUS_COLORS, _fmt, _plain, render, render_html
from snapcorr.report import Report


def _make_report() -> Report:
    report = Report("coupled", inputs={"sub1": "solid.csv", "scales": [1.0, 2.0]})
    report.sections["sub1"] = {
        "rank": 2,
        "singular_values": np.array([3.0, 0.5]),
        "table": [{"n": 1, "predicted": 0.25}, {"n": 2, "predicted": 0.0}],
    }
    report.audit("duality_sub1", 1e-15, 1e-10)
    return report


def test_fmt():
    assert _fmt(0.5) == "5.000000e-01"
    assert _fmt(True) == "true"
    assert _fmt(3) == "3"
    assert _fmt("x") == "x"


def test_plain_converts_numpy():
    out = _plain({"a": np.array([1.0, 2.0]), "b": np.float64(0.5), "c": (np.int64(3),)})
    assert out == {"a": [1.0, 2.0], "b": 0.5, "c": [3]}
    assert type(out["b"]) is float


def test_render_html_lists_audits_and_sections():
    html = render_html(_make_report())
    assert "duality_sub1" in html
    assert "passed" in html
    assert STATUS_COLORS[True] in html
    assert "3.000000e+00, 5.000000e-01" in html
    assert "<th>predicted</th>" in html
    assert "2.500000e-01" in html


def test_render_html_marks_failures():
    report = _make_report()
    report.audit("fibre_constancy_sub1", 0.1, 1e-12)
    html = render_html(report)
    assert "FAIL" in html
    assert STATUS_COLORS[False] in html


def test_render_html_escapes_text():
    report = Report("pod", inputs={"snapshots": "<script>alert(1)</script>.csv"})
    html = render_html(report)
    assert "<script>alert" not in html
    assert "&lt;script&gt;" in html


def test_render_html_timing():
    report = _make_report()
    assert "Elapsed" not in render_html(report)
    report.timing = 2.0
    assert "Elapsed: 2.00 s" in render_html(report)


def test_render_writes_file(tmp_path):
    path = tmp_path / "report.html"
    render(_make_report(), str(path))
    text = path.read_text(encoding="utf-8")
    assert text.startswith("<!DOCTYPE html>")
    assert "duality_sub1" in text

"""Tests for snapcorr.report."""

from __future__ import annotations

import json

import numpy as np
import pytest

from snapcorr.report import (
    Report,
    error_ratio_defect,
    orthonormality_defect,
    spectrum_distance,
)


def _make_report() -> Report:
    report = Report("pod", inputs={"n_samples": 3})
    report.sections["spectrum"] = {"rank": 2, "singular_values": np.array([2.0, 1.0])}
    return report


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


def test_audit_passes_within_tolerance():
    report = _make_report()
    report.audit("a", 1e-12, 1e-10)
    report.audit("b", 1e-10, 1e-10)
    assert report.passed
    assert report.failed() == []


@pytest.mark.parametrize("value", [1e-9, float("nan"), float("inf")])
def test_audit_fails_outside_tolerance(value):
    report = _make_report()
    report.audit("ok", 0.0, 1e-10)
    entry = report.audit("bad", value, 1e-10)
    assert not entry.passed
    assert not report.passed
    assert [a.name for a in report.failed()] == ["bad"]


def test_audit_explicit_verdict():
    report = _make_report()
    report.audit("forced", 5.0, 0.0, passed=True)
    assert report.passed


def test_report_without_audits_passes():
    assert Report("simulate").passed


def test_to_dict_layout():
    report = _make_report()
    report.audit("a", 0.0, 1.0)
    d = report.to_dict()
    assert list(d) == ["command", "inputs", "spectrum", "audits", "passed"]
    assert d["audits"] == [{"name": "a", "passed": True, "value": 0.0, "tolerance": 1.0}]
    assert d["passed"] is True


def test_timing_only_when_set():
    report = _make_report()
    assert "timing" not in report.to_dict()
    report.timing = 1.5
    assert report.to_dict()["timing"] == {"seconds": 1.5}


def test_write_report(tmp_path):
    report = _make_report()
    report.audit("a", 1e-13, 1e-10)
    path = report.write(str(tmp_path))
    assert path == str(tmp_path / "report.json")
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    assert data["command"] == "pod"
    assert data["spectrum"]["singular_values"] == [2.0, 1.0]
    assert data["audits"][0]["value"] == 1e-13


def test_write_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    _make_report().write(str(a))
    _make_report().write(str(b))
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


# ---------------------------------------------------------------------------
# Audit measures
# ---------------------------------------------------------------------------


def test_spectrum_distance_is_relative():
    assert spectrum_distance([4.0, 2.0], [4.0, 2.0]) == 0.0
    assert spectrum_distance([4.0, 2.0], [4.0, 1.0]) == pytest.approx(0.25)


def test_spectrum_distance_pads_with_zeros():
    assert spectrum_distance([3.0, 1.0, 0.0, 0.0], [1.0, 3.0]) == 0.0
    assert spectrum_distance([3.0, 1.0, 0.3], [3.0, 1.0]) == pytest.approx(0.1)


def test_spectrum_distance_of_zero_spectra():
    assert spectrum_distance([0.0, 0.0], []) == 0.0


def test_orthonormality_defect():
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((5, 3)))
    assert orthonormality_defect(q) <= 1e-14
    assert orthonormality_defect(2.0 * q) == pytest.approx(3.0)
    assert orthonormality_defect(np.zeros((4, 0))) == 0.0


def test_orthonormality_defect_weighted():
    w = np.array([4.0, 1.0])
    v = np.array([[0.5], [0.0]])
    assert orthonormality_defect(v, w) == 0.0


def test_error_ratio_defect():
    assert error_ratio_defect([2.0, 1.0], [2.0, 1.0], 10.0) == 0.0
    assert error_ratio_defect([2.0, 1.0], [2.2, 1.0], 10.0) == pytest.approx(0.1)


def test_error_ratio_defect_floor_rows():
    # predicted below the floor: only smallness is checked
    assert error_ratio_defect([1.0, 1e-14], [1.0, 5e-13], 1.0) == 0.0
    assert error_ratio_defect([1.0, 1e-14], [1.0, 1e-6], 1.0) == float("inf")


def test_error_ratio_defect_zero_total():
    assert error_ratio_defect([0.0], [0.0], 0.0) == 0.0

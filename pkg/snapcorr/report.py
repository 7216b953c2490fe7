"""Run reports: numeric sections plus the invariant audits that gate the exit code."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from snapcorr.export import save_json

REPORT_FILENAME = "report.json"


@dataclass
class Audit:
    """One internal cross-check: *value* compared against *tolerance*."""

    name: str
    passed: bool
    value: float
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "value": float(self.value),
            "tolerance": float(self.tolerance),
        }


@dataclass
class Report:
    """Everything a command writes to ``report.json``."""

    command: str
    inputs: dict[str, Any] = field(default_factory=dict)
    sections: dict[str, Any] = field(default_factory=dict)
    audits: list[Audit] = field(default_factory=list)
    timing: float | None = None

    @property
    def passed(self) -> bool:
        """True iff every audit passed."""
        return all(a.passed for a in self.audits)

    def audit(
        self, name: str, value: float, tolerance: float,
        passed: bool | None = None,
    ) -> Audit:
        """Record an audit; by default it passes when value <= tolerance."""
        value = float(value)
        if passed is None:
            passed = bool(np.isfinite(value) and value <= tolerance)
        entry = Audit(name, bool(passed), value, float(tolerance))
        self.audits.append(entry)
        return entry

    def failed(self) -> list[Audit]:
        """Audits that did not pass."""
        return [a for a in self.audits if not a.passed]

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "command": self.command,
            "inputs": self.inputs,
        }
        out.update(self.sections)
        out["audits"] = [a.to_dict() for a in self.audits]
        out["passed"] = self.passed
        if self.timing is not None:
            out["timing"] = {"seconds": self.timing}
        return out

    def write(self, out_dir: str) -> str:
        """Write ``report.json`` atomically and return its path."""
        path = os.path.join(out_dir, REPORT_FILENAME)
        save_json(path, self.to_dict())
        return path


# ---------------------------------------------------------------------------
# Audit measures
# ---------------------------------------------------------------------------


def spectrum_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Max difference of two descending spectra relative to the largest value.

    The shorter spectrum is padded with zeros, so only nonzero eigenvalues
    need to agree.
    """
    a = np.sort(np.asarray(a, dtype=float).reshape(-1))[::-1]
    b = np.sort(np.asarray(b, dtype=float).reshape(-1))[::-1]
    n = max(a.size, b.size)
    a = np.pad(a, (0, n - a.size))
    b = np.pad(b, (0, n - b.size))
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - b)) / scale)


def orthonormality_defect(modes: np.ndarray, weights: np.ndarray | None = None) -> float:
    """max |V^T W V - I| (W = I when *weights* is None)."""
    v = np.asarray(modes, dtype=float)
    if v.shape[1] == 0:
        return 0.0
    wv = v if weights is None else np.asarray(weights)[:, None] * v
    return float(np.max(np.abs(v.T @ wv - np.eye(v.shape[1]))))


def error_ratio_defect(
    predicted: np.ndarray, measured: np.ndarray, total: float,
    floor: float = 1e-12, zero_tol: float = 1e-10,
) -> float:
    """Worst deviation of measured/predicted from 1 over a truncation table.

    Rows whose predicted error is below ``floor * total`` are checked for
    smallness instead: both values must stay below ``zero_tol * total``,
    otherwise the row counts as infinitely bad.
    """
    worst = 0.0
    for p, m in zip(np.asarray(predicted), np.asarray(measured)):
        if total <= 0 or p < floor * total:
            if total > 0 and max(p, m) > zero_tol * total:
                return float("inf")
            continue
        worst = max(worst, abs(m / p - 1.0))
    return worst

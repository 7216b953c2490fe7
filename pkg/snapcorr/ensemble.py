"""Sampled parametric models: measures, snapshot ensembles, R, R* and C."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from snapcorr.errors import InputError
from snapcorr.export import read_matrix_csv, read_rows

PROBABILITY_TOL = 1e-12
SYMMETRY_TOL = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    """Return a read-only float64 copy of *arr*."""
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{what} contains non-finite entries")


# ---------------------------------------------------------------------------
# Parameter sets and measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterPoint:
    """A point mu of the parameter set M; coordinates are opaque reals."""

    coords: tuple[float, ...]
    label: str | None = None

    def __post_init__(self) -> None:
        coords = tuple(float(c) for c in self.coords)
        if not all(np.isfinite(coords)):
            raise InputError("parameter coordinates must be finite")
        object.__setattr__(self, "coords", coords)


@dataclass(frozen=True, eq=False)
class SampledMeasure:
    """Parameter points with positive quadrature / probability weights."""

    points: tuple[ParameterPoint, ...]
    weights: np.ndarray
    probability: bool = False

    def __post_init__(self) -> None:
        points = tuple(self.points)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(points) == 0:
            raise InputError("a sampled measure needs at least one point")
        if len(points) != weights.size:
            raise InputError(
                f"{len(points)} points but {weights.size} weights"
            )
        _require_finite(weights, "weights")
        bad = np.flatnonzero(weights <= 0)
        if bad.size:
            raise InputError(
                f"weight {bad[0]} is not positive ({weights[bad[0]]!r})"
            )
        dims = {len(p.coords) for p in points}
        if len(dims) > 1:
            raise InputError(
                "all parameter points must have the same number of"
                " coordinates"
            )
        if self.probability and abs(weights.sum() - 1.0) > PROBABILITY_TOL:
            raise InputError(
                f"probability weights sum to {weights.sum()!r}, not 1"
            )
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", _frozen(weights))

    @classmethod
    def uniform(cls, points: Sequence[ParameterPoint]) -> "SampledMeasure":
        """Monte-Carlo measure: every point weighted 1/N."""
        n = len(points)
        if n == 0:
            raise InputError("a sampled measure needs at least one point")
        return cls(tuple(points), np.full(n, 1.0 / n), probability=True)

    @classmethod
    def from_coords(
        cls, coords: np.ndarray, weights: np.ndarray | None = None,
    ) -> "SampledMeasure":
        """Build a measure from an N x p coordinate array."""
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        points = tuple(ParameterPoint(tuple(row)) for row in coords)
        if weights is None:
            return cls.uniform(points)
        return cls(points, weights)

    def normalized(self) -> "SampledMeasure":
        """Return the probability measure proportional to this one."""
        w = self.weights / self.weights.sum()
        return SampledMeasure(self.points, w, probability=True)

    @property
    def size(self) -> int:
        """Number of sample points N."""
        return len(self.points)

    @property
    def coords(self) -> np.ndarray:
        """N x p array of parameter coordinates."""
        return np.array([p.coords for p in self.points], dtype=float)


def q_inner(measure: SampledMeasure, phi: np.ndarray, psi: np.ndarray) -> float:
    """Inner product of L2(M, w) at the samples: sum_i w_i phi_i psi_i."""
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if phi.shape != (measure.size,) or psi.shape != (measure.size,):
        raise InputError(
            f"Q vectors must have length {measure.size}"
        )
    return float(np.sum(measure.weights * phi * psi))


# ---------------------------------------------------------------------------
# Snapshot ensembles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SnapshotEnsemble:
    """Snapshot matrix A (d x N), column i = r(mu_i), with its measure."""

    data: np.ndarray
    measure: SampledMeasure

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data.reshape(-1, 1)
        if data.ndim != 2:
            raise InputError("snapshot data must be a d x N matrix")
        if data.shape[0] < 1:
            raise InputError("state dimension d must be at least 1")
        _require_finite(data, "snapshot data")
        if data.shape[1] != self.measure.size:
            raise InputError(
                f"{data.shape[1]} snapshots but the measure has"
                f" {self.measure.size} points"
            )
        object.__setattr__(self, "data", _frozen(data))

    @classmethod
    def from_columns(
        cls, columns: Sequence[np.ndarray],
        measure: SampledMeasure | None = None,
    ) -> "SnapshotEnsemble":
        """Stack snapshot vectors as columns; default measure uniform."""
        data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
        if measure is None:
            measure = SampledMeasure.from_coords(
                np.arange(data.shape[1], dtype=float).reshape(-1, 1),
            )
        return cls(data, measure)

    def with_measure(self, measure: SampledMeasure) -> "SnapshotEnsemble":
        """Same snapshots under a different measure."""
        return SnapshotEnsemble(self.data, measure)

    @property
    def state_dim(self) -> int:
        """State dimension d."""
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        """Number of snapshots N."""
        return self.data.shape[1]

    @property
    def weights(self) -> np.ndarray:
        """Measure weights w_i."""
        return self.measure.weights


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Symmetric positive semidefinite d x d correlation C = R*R."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.entries, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise InputError("a correlation matrix must be square")
        _require_finite(c, "correlation matrix")
        scale = max(float(np.max(np.abs(c))) if c.size else 0.0, 1e-300)
        if np.max(np.abs(c - c.T)) > SYMMETRY_TOL * scale:
            raise InputError("correlation matrix is not symmetric")
        object.__setattr__(self, "entries", _frozen(c))

    @property
    def dim(self) -> int:
        """Dimension d of the state space."""
        return self.entries.shape[0]

    def bilinear(self, u: np.ndarray, v: np.ndarray) -> float:
        """<C u, v>."""
        return float(np.asarray(v) @ (self.entries @ np.asarray(u)))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def assemble_correlation(ens: SnapshotEnsemble) -> CorrelationMatrix:
    """C = sum_i w_i r(mu_i) r(mu_i)^T, summed left to right, symmetrized."""
    d = ens.state_dim
    c = np.zeros((d, d))
    for i in range(ens.n_samples):
        r = ens.data[:, i]
        c += ens.weights[i] * np.outer(r, r)
    return CorrelationMatrix(0.5 * (c + c.T))


def apply_R(ens: SnapshotEnsemble, u: np.ndarray) -> np.ndarray:
    """(R u)(mu_i) = <r(mu_i), u>."""
    u = np.asarray(u, dtype=float)
    if u.shape != (ens.state_dim,):
        raise InputError(
            f"state vector has shape {u.shape}, expected ({ens.state_dim},)"
        )
    return ens.data.T @ u


def apply_R_adjoint(ens: SnapshotEnsemble, phi: np.ndarray) -> np.ndarray:
    """R* phi = sum_i w_i phi_i r(mu_i), adjoint w.r.t. the Q inner product."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (ens.n_samples,):
        raise InputError(
            f"parametric vector has shape {phi.shape},"
            f" expected ({ens.n_samples},)"
        )
    return ens.data @ (ens.weights * phi)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _split_params(
    rows: list[tuple[int, list[float]]], weight_column: int | None,
    params_name: str,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Separate coordinate columns from the weight column."""
    width = len(rows[0][1])
    coords: list[list[float]] = []
    weights: list[float] = []
    wcol = None
    if weight_column is not None:
        wcol = weight_column if weight_column >= 0 else width + weight_column
        if not 0 <= wcol < width:
            raise InputError(
                f"{params_name}: weight column {weight_column} out of range"
                f" for {width} columns"
            )
    for row_no, (lineno, values) in enumerate(rows, start=1):
        if len(values) != width:
            raise InputError(
                f"{params_name}: expected {width} columns,"
                f" found {len(values)}",
                line=lineno,
            )
        if wcol is None:
            coords.append(values)
            continue
        w = values[wcol]
        if w <= 0:
            raise InputError(
                f"{params_name}: row {row_no} has non-positive weight {w!r}",
                line=lineno,
            )
        weights.append(w)
        coords.append(values[:wcol] + values[wcol + 1:])
    return (
        np.array(coords, dtype=float).reshape(
            len(rows), width - (wcol is not None),
        ),
        np.array(weights) if wcol is not None else None,
    )


def load_measure(
    params_path: str,
    weight_column: int | None = None,
    probability: bool = False,
    expected_rows: int | None = None,
) -> SampledMeasure:
    """Read an N-row parameter CSV into a sampled measure.

    *weight_column* selects the column holding the weights (negative
    values count from the end); without it every weight is 1/N.
    *probability* normalises given weights to sum to one.
    """
    rows = read_rows(params_path)
    params_name = os.path.basename(params_path)
    if not rows:
        raise InputError(f"{params_name}: file is empty")
    if expected_rows is not None and len(rows) != expected_rows:
        raise InputError(
            f"{params_name}: {len(rows)} parameter rows but {expected_rows}"
            " samples",
            line=rows[-1][0],
        )
    coords, weights = _split_params(rows, weight_column, params_name)
    points = tuple(
        ParameterPoint(tuple(row), label=str(i))
        for i, row in enumerate(coords)
    )
    if weights is None:
        return SampledMeasure.uniform(points)
    measure = SampledMeasure(points, weights)
    return measure.normalized() if probability else measure


def load_ensemble(
    snapshot_path: str,
    params_path: str,
    weight_column: int | None = None,
    probability: bool = False,
) -> SnapshotEnsemble:
    """Read a d x N snapshot CSV and its N-row parameter CSV."""
    data = read_matrix_csv(snapshot_path)
    measure = load_measure(
        params_path, weight_column, probability, expected_rows=data.shape[1],
    )
    return SnapshotEnsemble(data, measure)

"""Snapshot tensors over product parameter sets, binary splits and TT-SVD.

Axis 0 of a snapshot tensor is the state axis, axes 1..K-1 are the
parameter grid axes, each with its own weight vector. Every split and
every TT sweep works on the tensor scaled by sqrt(w) along each
parameter axis, so singular values and discarded energies are measured
in the weighted (Q) norm; factors and cores are stored unscaled.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from snapcorr.ensemble import ParameterPoint, SampledMeasure, SnapshotEnsemble
from snapcorr.errors import InputError, StructureError
from snapcorr.export import save_json, save_matrix_csv
from snapcorr.spectral import RANK_RTOL

PRODUCT_WEIGHT_RTOL = 1e-12


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


def _axis_view(w: np.ndarray, axis: int, order: int) -> np.ndarray:
    """Reshape a weight vector to broadcast along *axis*."""
    shape = [1] * order
    shape[axis] = w.size
    return w.reshape(shape)


@dataclass(frozen=True, eq=False)
class SnapshotTensor:
    """Order-K array (d, N1, ..., N_{K-1}) with per-axis weights."""

    data: np.ndarray
    axis_weights: tuple[np.ndarray, ...]
    source_measure: SampledMeasure | None = None

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim < 2:
            raise InputError("a snapshot tensor needs a state axis and a parameter axis")
        if min(data.shape) < 1:
            raise InputError(f"every axis needs size >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InputError("snapshot tensor contains non-finite entries")
        weights = tuple(np.asarray(w, dtype=float).reshape(-1) for w in self.axis_weights)
        if len(weights) != data.ndim - 1:
            raise InputError(
                f"{data.ndim - 1} parameter axes but {len(weights)} weight vectors"
            )
        for k, w in enumerate(weights, start=1):
            if w.size != data.shape[k]:
                raise InputError(
                    f"axis {k} has size {data.shape[k]} but {w.size} weights"
                )
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise InputError(f"axis {k} weights must be positive")
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "axis_weights", tuple(_readonly(w) for w in weights))

    @property
    def order(self) -> int:
        """Number of axes K."""
        return self.data.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        """(d, N1, ...)."""
        return self.data.shape

    def scaled(self) -> np.ndarray:
        """The tensor with each parameter axis multiplied by sqrt(w)."""
        out = np.array(self.data)
        for k, w in enumerate(self.axis_weights, start=1):
            out = out * _axis_view(np.sqrt(w), k, self.order)
        return out

    def weighted_norm(self, other: np.ndarray | None = None) -> float:
        """Weighted Frobenius norm of the tensor, or of its difference to *other*."""
        diff = self.data if other is None else self.data - other
        return float(np.linalg.norm(
            SnapshotTensor(diff, self.axis_weights).scaled()
        ))


def _unscale(block: np.ndarray, weights: Sequence[np.ndarray], axes: Sequence[int]) -> np.ndarray:
    """Divide *block* by sqrt(w) of each listed parameter axis, in position."""
    out = block
    for pos, w in zip(axes, weights):
        out = out / _axis_view(np.sqrt(w), pos, out.ndim)
    return out


def _product_factors(weights: np.ndarray, grid: tuple[int, ...]) -> tuple[np.ndarray, ...]:
    """Factor sample weights as an outer product of per-axis weights."""
    w = weights.reshape(grid)
    k = len(grid)
    total = float(w.sum())
    factors = []
    for j in range(k):
        others = tuple(a for a in range(k) if a != j)
        marginal = w.sum(axis=others) if others else w
        factors.append(marginal / total ** ((k - 1) / k))
    rebuilt = factors[0]
    for f in factors[1:]:
        rebuilt = np.multiply.outer(rebuilt, f)
    if np.max(np.abs(rebuilt - w)) > PRODUCT_WEIGHT_RTOL * float(w.max()):
        raise InputError("sample weights are not a product over the grid axes")
    return tuple(factors)


def tensorize(
    ens: SnapshotEnsemble, grid_shape: Sequence[int],
    axis_weights: Sequence[np.ndarray] | None = None,
) -> SnapshotTensor:
    """Reshape a d x N snapshot matrix into (d, N1, ..., Nk).

    Samples must be ordered row-major over the grid. Without explicit
    *axis_weights* the ensemble weights are factored into per-axis weights.
    """
    grid = tuple(int(n) for n in grid_shape)
    if not grid or min(grid) < 1:
        raise InputError(f"grid sizes must be positive, got {grid}")
    if int(np.prod(grid)) != ens.n_samples:
        raise InputError(
            f"grid {grid} has {int(np.prod(grid))} points,"
            f" ensemble has {ens.n_samples} samples"
        )
    if axis_weights is None:
        axis_weights = _product_factors(ens.weights, grid)
    data = ens.data.reshape((ens.state_dim,) + grid)
    return SnapshotTensor(data, tuple(axis_weights), ens.measure)


def detensorize(t: SnapshotTensor) -> SnapshotEnsemble:
    """Inverse of ``tensorize``."""
    d = t.shape[0]
    data = t.data.reshape(d, -1)
    if t.source_measure is not None:
        return SnapshotEnsemble(data, t.source_measure)
    grid = t.shape[1:]
    weights = t.axis_weights[0]
    for w in t.axis_weights[1:]:
        weights = np.multiply.outer(weights, w)
    points = tuple(
        ParameterPoint(tuple(float(i) for i in idx)) for idx in np.ndindex(*grid)
    )
    return SnapshotEnsemble(data, SampledMeasure(points, weights.reshape(-1)))


# ---------------------------------------------------------------------------
# Binary splits
# ---------------------------------------------------------------------------


def _choose_rank(s: np.ndarray, energy_tol: float, cap: int | None) -> int:
    """Rank rule plus energy tolerance plus optional cap."""
    if s.size == 0 or s[0] == 0.0:
        return 0
    rank = int(np.count_nonzero(s > RANK_RTOL * s[0]))
    if energy_tol > 0:
        lam = s ** 2
        tail = np.concatenate((np.cumsum(lam[::-1])[::-1], [0.0]))
        rank = min(rank, int(np.flatnonzero(tail <= energy_tol ** 2)[0]))
    if cap is not None:
        rank = min(rank, cap)
    return rank


@dataclass(frozen=True, eq=False)
class SplitResult:
    """Left factor (d, *left grid, r), right factor (r, *right grid)."""

    left: np.ndarray
    right: np.ndarray
    singular_values: np.ndarray
    discarded_energy: float
    left_axes: tuple[int, ...]
    right_axes: tuple[int, ...]

    @property
    def rank(self) -> int:
        """Retained rank r."""
        return self.singular_values.size

    def reconstruct(self) -> np.ndarray:
        """Contract the factors and restore the original axis order."""
        full = np.tensordot(self.left, self.right, axes=([-1], [0]))
        perm = (0,) + self.left_axes + self.right_axes
        return np.transpose(full, np.argsort(perm))


def split(
    t: SnapshotTensor, left_axes: Sequence[int], right_axes: Sequence[int],
    energy_tol: float = 0.0, max_rank: int | None = None,
) -> SplitResult:
    """Truncated SVD of the matricization (state + left axes) x (right axes).

    Parameter axes are numbered 1..K-1; the state axis 0 always goes left.
    """
    left = tuple(int(a) for a in left_axes if int(a) != 0)
    right = tuple(int(a) for a in right_axes)
    params = set(range(1, t.order))
    if (
        not right
        or set(left) & set(right)
        or set(left) | set(right) != params
        or len(set(left)) != len(left)
        or len(set(right)) != len(right)
    ):
        raise InputError(
            f"partition {list(left)} | {list(right)} must split the parameter"
            f" axes {sorted(params)} into two disjoint groups, right non-empty"
        )
    if energy_tol < 0:
        raise InputError(f"energy tolerance must be >= 0, got {energy_tol}")
    x = np.transpose(t.scaled(), (0,) + left + right)
    left_shape = x.shape[: 1 + len(left)]
    right_shape = x.shape[1 + len(left):]
    u, s, vt = np.linalg.svd(
        x.reshape(int(np.prod(left_shape)), -1), full_matrices=False,
    )
    r = _choose_rank(s, energy_tol, max_rank)
    lf = u[:, :r].reshape(left_shape + (r,))
    rf = (s[:r, None] * vt[:r]).reshape((r,) + right_shape)
    lw = [t.axis_weights[a - 1] for a in left]
    rw = [t.axis_weights[a - 1] for a in right]
    return SplitResult(
        left=_unscale(lf, lw, range(1, 1 + len(left))),
        right=_unscale(rf, rw, range(1, 1 + len(right))),
        singular_values=s[:r].copy(),
        discarded_energy=float(np.sum(s[r:] ** 2)),
        left_axes=left,
        right_axes=right,
    )


# ---------------------------------------------------------------------------
# Tensor train
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TTDecomposition:
    """Cores G_k of shape (r_{k-1}, n_k, r_k) with r_0 = r_K = 1."""

    cores: tuple[np.ndarray, ...]
    discarded: tuple[float, ...] = ()
    axis_weights: tuple[np.ndarray, ...] = ()

    def __post_init__(self) -> None:
        cores = tuple(_readonly(c) for c in self.cores)
        if not cores:
            raise StructureError("a tensor train needs at least one core")
        for k, c in enumerate(cores):
            if c.ndim != 3:
                raise StructureError(f"core {k} has order {c.ndim}, expected 3")
        object.__setattr__(self, "cores", cores)
        object.__setattr__(self, "discarded", tuple(float(e) for e in self.discarded))
        object.__setattr__(
            self, "axis_weights", tuple(_readonly(w) for w in self.axis_weights),
        )

    @property
    def bond_dims(self) -> tuple[int, ...]:
        """(r_0, r_1, ..., r_K)."""
        return (self.cores[0].shape[0],) + tuple(c.shape[2] for c in self.cores)

    @property
    def shape(self) -> tuple[int, ...]:
        """Shape of the represented tensor."""
        return tuple(c.shape[1] for c in self.cores)

    @property
    def error_bound(self) -> float:
        """sqrt of the summed discarded energies."""
        return float(np.sqrt(sum(self.discarded)))

    @property
    def n_params(self) -> int:
        """Number of stored core entries."""
        return int(sum(c.size for c in self.cores))


def _bond_caps(max_bond: int | Sequence[int] | None, n_splits: int) -> list[int | None]:
    if max_bond is None:
        return [None] * n_splits
    if isinstance(max_bond, (int, np.integer)):
        caps = [int(max_bond)] * n_splits
    else:
        caps = [int(c) for c in max_bond]
        if len(caps) != n_splits:
            raise InputError(f"expected {n_splits} bond caps, got {len(caps)}")
    if any(c < 1 for c in caps):
        raise InputError(f"bond caps must be >= 1, got {caps}")
    return caps


def tt_svd(
    t: SnapshotTensor, energy_tol: float = 0.0,
    max_bond: int | Sequence[int] | None = None,
) -> TTDecomposition:
    """Left-to-right TT-SVD sweep.

    The tolerance is spread evenly over the K-1 splits (epsilon/sqrt(K-1)
    each) so the total discarded energy stays below epsilon^2 when no cap
    binds. Bond dimensions are kept >= 1.
    """
    if energy_tol < 0:
        raise InputError(f"energy tolerance must be >= 0, got {energy_tol}")
    shape = t.shape
    n_splits = t.order - 1
    caps = _bond_caps(max_bond, n_splits)
    delta = energy_tol / np.sqrt(n_splits)
    rem = t.scaled().reshape(1, -1)
    r_prev = 1
    cores: list[np.ndarray] = []
    discarded: list[float] = []
    for k in range(n_splits):
        mat = rem.reshape(r_prev * shape[k], -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        r = max(_choose_rank(s, delta, caps[k]), 1)
        discarded.append(float(np.sum(s[r:] ** 2)))
        cores.append(u[:, :r].reshape(r_prev, shape[k], r))
        rem = s[:r, None] * vt[:r]
        r_prev = r
    cores.append(rem.reshape(r_prev, shape[-1], 1))
    for k, w in enumerate(t.axis_weights, start=1):
        cores[k] = cores[k] / np.sqrt(w)[None, :, None]
    return TTDecomposition(tuple(cores), tuple(discarded), t.axis_weights)


def tt_reconstruct(tt: TTDecomposition) -> SnapshotTensor:
    """Full contraction of the cores."""
    dims = tt.bond_dims
    if dims[0] != 1 or dims[-1] != 1:
        raise StructureError(f"boundary bond dimensions must be 1, got {dims}")
    for k in range(len(tt.cores) - 1):
        if tt.cores[k].shape[2] != tt.cores[k + 1].shape[0]:
            raise StructureError(
                f"bond mismatch between cores {k} and {k + 1}:"
                f" {tt.cores[k].shape[2]} vs {tt.cores[k + 1].shape[0]}"
            )
    full = tt.cores[0][0]
    for core in tt.cores[1:]:
        full = np.tensordot(full, core, axes=([-1], [0]))
    data = full[..., 0]
    weights = tt.axis_weights or tuple(np.ones(n) for n in tt.shape[1:])
    return SnapshotTensor(data, weights)


def export_tt(tt: TTDecomposition, out_dir: str, prefix: str = "tt") -> str:
    """Write one CSV per core, (r_{k-1}, n_k * r_k) row-major, plus a JSON manifest."""
    names = []
    for k, core in enumerate(tt.cores):
        name = f"{prefix}_core_{k}.csv"
        save_matrix_csv(
            os.path.join(out_dir, name), core.reshape(core.shape[0], -1),
        )
        names.append(name)
    manifest_path = os.path.join(out_dir, f"{prefix}_manifest.json")
    save_json(manifest_path, {
        "shape": list(tt.shape),
        "bond_dims": list(tt.bond_dims),
        "discarded_energies": list(tt.discarded),
        "error_bound": tt.error_bound,
        "cores": names,
    })
    return manifest_path

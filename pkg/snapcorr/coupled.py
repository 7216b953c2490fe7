"""Two-field coupled systems on U = U1 x U2 with a shared parameter sample.

The coupled inner product is a1 <u1, v1> + a2 <u2, v2> with per-subsystem
scale factors (default 1). All operators work on the scaled snapshots
sqrt(a_j) r_j, so C_c = diag(a1 C1, a2 C2) and the kernel blocks are
a_j * gram(sub_j).
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from snapcorr.ensemble import (
    CorrelationMatrix,
    SampledMeasure,
    SnapshotEnsemble,
    apply_R,
    apply_R_adjoint,
    assemble_correlation,
)
from snapcorr.errors import InputError
from snapcorr.kernel import gram
from snapcorr.spectral import KLExpansion, kl_expand, truncate


@dataclass(frozen=True)
class Partition:
    """Split of the parameter coordinates into M1 and M2 index lists.

    ``grid_shape`` (N1, N2) is filled in by ``CoupledEnsemble`` from the
    sample layout, which must be a row-major tensor grid over (mu1, mu2).
    """

    m1_indices: tuple[int, ...]
    m2_indices: tuple[int, ...]
    grid_shape: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        m1 = tuple(int(i) for i in self.m1_indices)
        m2 = tuple(int(i) for i in self.m2_indices)
        if not m1 or not m2:
            raise InputError("both partition index lists must be non-empty")
        if len(set(m1)) != len(m1) or len(set(m2)) != len(m2):
            raise InputError("partition index lists contain duplicates")
        if set(m1) & set(m2):
            raise InputError(
                f"partition index lists overlap: {sorted(set(m1) & set(m2))}"
            )
        object.__setattr__(self, "m1_indices", m1)
        object.__setattr__(self, "m2_indices", m2)

    def detect_grid(self, measure: SampledMeasure) -> tuple[int, int]:
        """Return (N1, N2) of the tensor-grid layout or raise InputError."""
        coords = measure.coords
        p = coords.shape[1]
        for i in self.m1_indices + self.m2_indices:
            if not 0 <= i < p:
                raise InputError(
                    f"partition index {i} out of range for {p} coordinates"
                )
        mu1 = coords[:, list(self.m1_indices)]
        mu2 = coords[:, list(self.m2_indices)]
        n = coords.shape[0]
        n2 = 1
        while n2 < n and np.array_equal(mu1[n2], mu1[0]):
            n2 += 1
        if n % n2:
            raise InputError(
                f"{n} samples do not form a grid with {n2} M2 points"
            )
        n1 = n // n2
        for i in range(n):
            a, b = divmod(i, n2)
            if not (
                np.array_equal(mu1[i], mu1[a * n2])
                and np.array_equal(mu2[i], mu2[b])
            ):
                raise InputError(
                    f"sample {i} breaks the row-major ({n1} x {n2}) grid"
                    " layout over (M1, M2)"
                )
        if len({tuple(row) for row in mu1[::n2]}) != n1:
            raise InputError("M1 grid points repeat")
        if len({tuple(row) for row in mu2[:n2]}) != n2:
            raise InputError("M2 grid points repeat")
        return n1, n2


@dataclass(frozen=True, eq=False)
class CoupledEnsemble:
    """Snapshots of two subsystems over the same N samples and weights."""

    sub1: SnapshotEnsemble
    sub2: SnapshotEnsemble
    partition: Partition | None = None
    scales: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self) -> None:
        if self.sub1.n_samples != self.sub2.n_samples:
            raise InputError(
                f"subsystems have {self.sub1.n_samples} and"
                f" {self.sub2.n_samples} samples"
            )
        if not np.array_equal(self.sub1.weights, self.sub2.weights):
            raise InputError("subsystems use different weights")
        scales = tuple(float(a) for a in self.scales)
        if len(scales) != 2 or not all(
            math.isfinite(a) and a > 0 for a in scales
        ):
            raise InputError(f"scales must be two positive numbers, got {scales}")
        object.__setattr__(self, "scales", scales)
        if self.partition is not None:
            shape = self.partition.detect_grid(self.shared_measure)
            object.__setattr__(
                self, "partition",
                dataclasses.replace(self.partition, grid_shape=shape),
            )

    @property
    def shared_measure(self) -> SampledMeasure:
        """The common sampled measure."""
        return self.sub1.measure

    @property
    def dims(self) -> tuple[int, int]:
        """(d1, d2)."""
        return self.sub1.state_dim, self.sub2.state_dim

    def scaled(self) -> tuple[SnapshotEnsemble, SnapshotEnsemble]:
        """Subsystem ensembles in the coupled inner product's coordinates."""
        a1, a2 = self.scales
        if a1 == 1.0 and a2 == 1.0:
            return self.sub1, self.sub2
        return (
            SnapshotEnsemble(math.sqrt(a1) * self.sub1.data, self.shared_measure),
            SnapshotEnsemble(math.sqrt(a2) * self.sub2.data, self.shared_measure),
        )


@dataclass(frozen=True, eq=False)
class CoupledKernel:
    """Diagonal blocks of the 2 x 2 matrix-valued kernel; off-diagonal is 0."""

    diag1: np.ndarray
    diag2: np.ndarray

    def __post_init__(self) -> None:
        for name in ("diag1", "diag2"):
            block = np.array(getattr(self, name), dtype=float, copy=True)
            block.flags.writeable = False
            object.__setattr__(self, name, block)

    def block(self, i: int, j: int) -> np.ndarray:
        """The 2 x 2 kernel value kappa(mu_i, mu_j)."""
        return np.diag([self.diag1[i, j], self.diag2[i, j]])


@dataclass(frozen=True, eq=False)
class CoupledPOD:
    """Per-subsystem truncated expansions on the shared sample set."""

    kl1: KLExpansion
    kl2: KLExpansion
    n1: int
    n2: int

    @property
    def error1(self) -> float:
        """Predicted squared error of subsystem 1."""
        return self.kl1.discarded_energy

    @property
    def error2(self) -> float:
        """Predicted squared error of subsystem 2."""
        return self.kl2.discarded_energy

    @property
    def joint_error(self) -> float:
        """Joint squared error: sum of the per-block tails."""
        return self.error1 + self.error2


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def coupled_R(
    ce: CoupledEnsemble, u1: np.ndarray, u2: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """(<u1, r1(mu_i)>, <u2, r2(mu_i)>) per sample, in the coupled product."""
    s1, s2 = ce.scaled()
    return apply_R(s1, u1), apply_R(s2, u2)


def coupled_R_adjoint(
    ce: CoupledEnsemble, phi1: np.ndarray, phi2: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of ``coupled_R`` with respect to the Q inner product."""
    s1, s2 = ce.scaled()
    return apply_R_adjoint(s1, phi1), apply_R_adjoint(s2, phi2)


def coupling_correlation(ce: CoupledEnsemble) -> CorrelationMatrix:
    """Block-diagonal C_c = diag(C1, C2) on R^{d1 + d2}."""
    s1, s2 = ce.scaled()
    c1 = assemble_correlation(s1).entries
    c2 = assemble_correlation(s2).entries
    d1, d2 = ce.dims
    c = np.zeros((d1 + d2, d1 + d2))
    c[:d1, :d1] = c1
    c[d1:, d1:] = c2
    return CorrelationMatrix(c)


def coupled_kernel(ce: CoupledEnsemble) -> CoupledKernel:
    """diag_j = gram(sub_j)."""
    s1, s2 = ce.scaled()
    return CoupledKernel(gram(s1).entries, gram(s2).entries)


def fibre_variation(ce: CoupledEnsemble) -> tuple[float, float]:
    """Max variation of diag1 along M2 fibres and of diag2 along M1 fibres."""
    if ce.partition is None or ce.partition.grid_shape is None:
        raise InputError("fibre variation needs a partitioned ensemble")
    n1, n2 = ce.partition.grid_shape
    k = coupled_kernel(ce)
    # index (a, b, c, e): sample a*n2+b against sample c*n2+e
    k1 = k.diag1.reshape(n1, n2, n1, n2)
    k2 = k.diag2.reshape(n1, n2, n1, n2)
    var1 = np.max(np.abs(k1 - k1[:, :1, :, :1]))
    var2 = np.max(np.abs(k2 - k2[:1, :, :1, :]))
    return float(var1), float(var2)


def partition_kernels(ce: CoupledEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Reduced kernels K1 on M1 x M1 (N1 x N1) and K2 on M2 x M2 (N2 x N2).

    Read off the grid at the first fibre; meaningful when
    ``fibre_variation`` is negligible.
    """
    if ce.partition is None or ce.partition.grid_shape is None:
        raise InputError("partition kernels need a partitioned ensemble")
    n1, n2 = ce.partition.grid_shape
    k = coupled_kernel(ce)
    k1 = k.diag1.reshape(n1, n2, n1, n2)[:, 0, :, 0]
    k2 = k.diag2.reshape(n1, n2, n1, n2)[0, :, 0, :]
    return k1.copy(), k2.copy()


def coupled_pod(
    ce: CoupledEnsemble, n1: int, n2: int, workers: int = 1,
) -> CoupledPOD:
    """Independent KL expansion of each subsystem, truncated to n1 and n2."""
    s1, s2 = ce.scaled()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            f1 = pool.submit(kl_expand, s1)
            f2 = pool.submit(kl_expand, s2)
            full1, full2 = f1.result(), f2.result()
    else:
        full1, full2 = kl_expand(s1), kl_expand(s2)
    return CoupledPOD(
        kl1=truncate(full1, n=n1),
        kl2=truncate(full2, n=n2),
        n1=n1,
        n2=n2,
    )

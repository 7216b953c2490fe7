"""Reproducing kernel (Gram matrix) and the RKHS on the sample set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from snapcorr.ensemble import SnapshotEnsemble
from snapcorr.errors import InputError
from snapcorr.export import save_matrix_csv


@dataclass(frozen=True, eq=False)
class GramKernel:
    """G_ij = kappa(mu_i, mu_j) = <r(mu_i), r(mu_j)>_U."""

    entries: np.ndarray
    source_dims: tuple[int, int]

    def __post_init__(self) -> None:
        g = np.array(self.entries, dtype=float, copy=True)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise InputError("a Gram kernel must be square")
        if g.shape[0] != self.source_dims[1]:
            raise InputError("Gram size does not match the source ensemble")
        g.flags.writeable = False
        object.__setattr__(self, "entries", g)

    @property
    def size(self) -> int:
        """Number of sample points N."""
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class RKHSFunction:
    """phi = sum_i a_i kappa(mu_i, .), stored by its coefficients a."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.coeffs, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(a)):
            raise InputError("RKHS coefficients must be finite")
        a.flags.writeable = False
        object.__setattr__(self, "coeffs", a)

    @classmethod
    def kernel_section(cls, i: int, n: int) -> "RKHSFunction":
        """kappa(mu_i, .) as an RKHS element."""
        a = np.zeros(n)
        a[i] = 1.0
        return cls(a)


def _check_size(phi: RKHSFunction, g: GramKernel) -> None:
    if phi.coeffs.size != g.size:
        raise InputError(
            f"RKHS function has {phi.coeffs.size} coefficients,"
            f" kernel has {g.size} points"
        )


def gram(ens: SnapshotEnsemble) -> GramKernel:
    """Unweighted Gram matrix A^T A of the snapshots."""
    a = ens.data
    return GramKernel(a.T @ a, (ens.state_dim, ens.n_samples))


def cross_gram(ens_a: SnapshotEnsemble, ens_b: SnapshotEnsemble) -> np.ndarray:
    """kappa(mu_i, nu_j) between two ensembles over the same state space.

    Out-of-sample evaluation: *ens_b* holds user-supplied snapshots at
    new parameter points.
    """
    if ens_a.state_dim != ens_b.state_dim:
        raise InputError(
            f"state dimensions differ: {ens_a.state_dim} vs {ens_b.state_dim}"
        )
    return ens_a.data.T @ ens_b.data


def rkhs_inner(a: RKHSFunction, b: RKHSFunction, g: GramKernel) -> float:
    """<phi_a, phi_b>_R = a^T G b."""
    _check_size(a, g)
    _check_size(b, g)
    return float(a.coeffs @ (g.entries @ b.coeffs))


def rkhs_norm(a: RKHSFunction, g: GramKernel) -> float:
    """RKHS norm sqrt(a^T G a), clipped at zero for rounding."""
    return float(np.sqrt(max(rkhs_inner(a, a, g), 0.0)))


def evaluate(g: GramKernel, phi: RKHSFunction) -> np.ndarray:
    """Pointwise values phi(mu_j) = (G a)_j at every sample."""
    _check_size(phi, g)
    return g.entries @ phi.coeffs


def reproduce(g: GramKernel, j: int, phi: RKHSFunction) -> float:
    """<kappa(mu_j, .), phi>_R, which is phi(mu_j) by the reproducing property.

    Both sides are the same expression e_j^T G a, so the identity holds
    exactly rather than to a tolerance.
    """
    _check_size(phi, g)
    if not 0 <= j < g.size:
        raise InputError(f"sample index {j} out of range [0, {g.size})")
    return float(g.entries[j] @ phi.coeffs)


def embed(ens: SnapshotEnsemble, phi: RKHSFunction) -> np.ndarray:
    """Image sum_i a_i r(mu_i) in U of an RKHS function."""
    if phi.coeffs.size != ens.n_samples:
        raise InputError(
            f"RKHS function has {phi.coeffs.size} coefficients,"
            f" ensemble has {ens.n_samples} snapshots"
        )
    return ens.data @ phi.coeffs


def export_gram(g: GramKernel, path: str) -> None:
    """Write G as an N x N CSV."""
    save_matrix_csv(path, g.entries)

"""Spectral decomposition of C, KL/POD expansion, truncation and factorizations.

The Karhunen-Loeve expansion is computed from the SVD of A W^{1/2}, the
snapshot matrix with columns scaled by the square roots of the measure
weights; left singular vectors are the spatial modes, right singular
vectors scaled back by W^{-1/2} are the parametric modes, orthonormal in
the weighted inner product of Q.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from snapcorr.ensemble import CorrelationMatrix, SampledMeasure, SnapshotEnsemble
from snapcorr.errors import (
    InconsistentFactorizationError,
    InputError,
    NotPSDError,
)
from snapcorr.export import dumps_json, save_matrix_csv, write_atomic
from snapcorr.kernel import GramKernel

PSD_TOL = 1e-12
RANK_RTOL = 1e-12
# Q-side eigenvalues are squared singular values; eigenvalues below
# SNAPSHOT_RTOL**2 * lambda_1 are at rounding level of the Gram matrix.
SNAPSHOT_RTOL = 1e-7
EQUIVALENCE_TOL = 1e-8


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


def _fix_signs(
    vectors: np.ndarray, partner: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Flip columns so each one's first largest-magnitude entry is >= 0.

    *partner* columns (the other side of an SVD) are flipped alongside.
    """
    if vectors.size == 0:
        return vectors, partner
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors = vectors * signs
    if partner is not None:
        partner = partner * signs
    return vectors, partner


def _descending_eigh(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-pairs of a symmetric matrix, descending, ties in stable order."""
    evals, evecs = spla.eigh(matrix)
    order = np.argsort(-evals, kind="stable")
    return evals[order], evecs[:, order]


def _clip_psd(evals: np.ndarray, what: str) -> np.ndarray:
    """Clip eigenvalues within -PSD_TOL * lambda_max to zero, else raise."""
    if evals.size == 0:
        return evals
    scale = float(np.max(np.abs(evals)))
    if evals.min() < -PSD_TOL * scale:
        raise NotPSDError(
            f"{what} is not positive semidefinite"
            f" (eigenvalue {evals.min():.3e}, largest {scale:.3e})"
        )
    return np.maximum(evals, 0.0)


# ---------------------------------------------------------------------------
# Result types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """C = sum_m lambda_m v_m v_m^T with lambda descending and clipped at 0."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "eigenvalues", _readonly(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", _readonly(self.eigenvectors))

    def reconstruct(self) -> np.ndarray:
        """Rebuild sum_m lambda_m v_m v_m^T."""
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


@dataclass(frozen=True, eq=False)
class KLExpansion:
    """r(mu_i) = sum_m sigma_m s_m(mu_i) v_m over the retained modes.

    ``spatial_modes`` is d x M with orthonormal columns in U,
    ``parametric_modes`` is N x M with columns orthonormal under
    ``weights``. ``discarded_energy`` is sum of lambda_m over dropped modes.
    """

    singular_values: np.ndarray
    spatial_modes: np.ndarray
    parametric_modes: np.ndarray
    weights: np.ndarray
    discarded_energy: float = 0.0

    def __post_init__(self) -> None:
        for name in (
            "singular_values", "spatial_modes", "parametric_modes", "weights",
        ):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        m = self.singular_values.size
        if self.spatial_modes.shape[1] != m or self.parametric_modes.shape[1] != m:
            raise InputError("mode counts do not match singular values")

    @property
    def rank(self) -> int:
        """Number of retained modes M."""
        return self.singular_values.size

    @property
    def eigenvalues(self) -> np.ndarray:
        """lambda_m = sigma_m^2."""
        return self.singular_values ** 2

    @property
    def state_dim(self) -> int:
        """State dimension d."""
        return self.spatial_modes.shape[0]

    @property
    def n_samples(self) -> int:
        """Number of sample points N."""
        return self.parametric_modes.shape[0]


@dataclass(frozen=True, eq=False)
class Factorization:
    """A factor B (h x d) with B^T B = C."""

    factor: np.ndarray

    def __post_init__(self) -> None:
        b = np.atleast_2d(np.asarray(self.factor, dtype=float))
        object.__setattr__(self, "factor", _readonly(b))

    @property
    def codomain_dim(self) -> int:
        """Dimension h of the factor's codomain."""
        return self.factor.shape[0]

    def gramian(self) -> np.ndarray:
        """B^T B."""
        return self.factor.T @ self.factor


@dataclass(frozen=True, eq=False)
class QSideSpectrum:
    """Eigen-pairs of W^{1/2} G W^{1/2}: the correlation C_Q = R R*."""

    eigenvalues: np.ndarray
    parametric_modes: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        for name in ("eigenvalues", "parametric_modes", "weights"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def rank(self) -> int:
        """Number of eigenvalues above the snapshot threshold."""
        return self.parametric_modes.shape[1]

    def mercer(self) -> np.ndarray:
        """Kernel rebuilt as sum_m lambda_m s_m(mu_i) s_m(mu_j)."""
        s = self.parametric_modes
        return (s * self.eigenvalues[: self.rank]) @ s.T

    def spatial_modes(self, ens: SnapshotEnsemble) -> np.ndarray:
        """v_m = R* s_m / sigma_m, the method of snapshots proper."""
        if ens.n_samples != self.parametric_modes.shape[0]:
            raise InputError("ensemble does not match the Q-side spectrum")
        sigma = np.sqrt(self.eigenvalues[: self.rank])
        return (ens.data @ (self.weights[:, None] * self.parametric_modes)) / sigma


# ---------------------------------------------------------------------------
# Decompositions
# ---------------------------------------------------------------------------


def eigendecompose(c: CorrelationMatrix) -> SpectralDecomposition:
    """Spectral decomposition of C, eigenvalues descending."""
    evals, evecs = _descending_eigh(c.entries)
    evals = _clip_psd(evals, "correlation matrix")
    evecs, _ = _fix_signs(evecs)
    return SpectralDecomposition(evals, evecs)


def _weighted_svd(
    ens: SnapshotEnsemble,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sqrt_w = np.sqrt(ens.weights)
    u, s, vt = np.linalg.svd(ens.data * sqrt_w, full_matrices=False)
    return u, s, vt.T / sqrt_w[:, None]


def kl_expand(ens: SnapshotEnsemble) -> KLExpansion:
    """Karhunen-Loeve expansion via the SVD of A W^{1/2}.

    Singular values at or below ``RANK_RTOL * sigma_1`` are dropped; their
    energy is kept as ``discarded_energy``. A zero ensemble gives rank 0.
    """
    u, s, par = _weighted_svd(ens)
    if s.size == 0 or s[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(s > RANK_RTOL * s[0]))
    spatial, par = _fix_signs(u[:, :rank], par[:, :rank])
    return KLExpansion(
        singular_values=s[:rank],
        spatial_modes=spatial,
        parametric_modes=par,
        weights=ens.weights,
        discarded_energy=float(np.sum(s[rank:] ** 2)),
    )


def method_of_snapshots(g: GramKernel, measure: SampledMeasure) -> QSideSpectrum:
    """Eigen-decompose W^{1/2} G W^{1/2} (N x N) instead of C (d x d).

    Nonzero eigenvalues coincide with those of C; the eigenvectors,
    scaled by W^{-1/2}, are the parametric modes s_m.
    """
    if g.size != measure.size:
        raise InputError(
            f"kernel has {g.size} points, measure has {measure.size}"
        )
    sqrt_w = np.sqrt(measure.weights)
    k = sqrt_w[:, None] * g.entries * sqrt_w[None, :]
    evals, evecs = _descending_eigh(0.5 * (k + k.T))
    evals = _clip_psd(evals, "weighted Gram matrix")
    if evals.size == 0 or evals[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(evals > SNAPSHOT_RTOL ** 2 * evals[0]))
    q, _ = _fix_signs(evecs[:, :rank])
    return QSideSpectrum(
        eigenvalues=evals,
        parametric_modes=q / sqrt_w[:, None],
        weights=measure.weights,
    )


# ---------------------------------------------------------------------------
# Truncation and reconstruction
# ---------------------------------------------------------------------------


def _tail_energies(kl: KLExpansion) -> np.ndarray:
    """tail[n] = sum_{m > n} lambda_m + discarded, for n = 0..rank."""
    lam = kl.eigenvalues
    tail = np.concatenate((np.cumsum(lam[::-1])[::-1], [0.0]))
    return tail + kl.discarded_energy


def truncate(
    kl: KLExpansion, n: int | None = None, energy_tol: float | None = None,
) -> KLExpansion:
    """Best n-term approximation.

    Give either *n* explicitly or *energy_tol* (epsilon): the smallest n
    with sum_{m>n} lambda_m <= epsilon^2 is kept.
    """
    if (n is None) == (energy_tol is None):
        raise InputError("give exactly one of n or energy_tol")
    tail = _tail_energies(kl)
    if energy_tol is not None:
        if not energy_tol >= 0:
            raise InputError(f"energy tolerance must be >= 0, got {energy_tol}")
        below = np.flatnonzero(tail <= energy_tol ** 2)
        n = int(below[0]) if below.size else kl.rank
    assert n is not None
    if n < 0 or n > kl.rank:
        raise InputError(f"cannot keep {n} modes of a rank-{kl.rank} expansion")
    return KLExpansion(
        singular_values=kl.singular_values[:n],
        spatial_modes=kl.spatial_modes[:, :n],
        parametric_modes=kl.parametric_modes[:, :n],
        weights=kl.weights,
        discarded_energy=float(tail[n]),
    )


def reconstruct(kl: KLExpansion, i: int) -> np.ndarray:
    """sum_m sigma_m s_m(mu_i) v_m."""
    if not 0 <= i < kl.n_samples:
        raise InputError(f"sample index {i} out of range [0, {kl.n_samples})")
    return kl.spatial_modes @ (kl.singular_values * kl.parametric_modes[i])


def reconstruct_all(kl: KLExpansion) -> np.ndarray:
    """All reconstructed snapshots as a d x N matrix."""
    return (kl.spatial_modes * kl.singular_values) @ kl.parametric_modes.T


def truncation_error(ens: SnapshotEnsemble, kl: KLExpansion) -> float:
    """Measured weighted squared error sum_i w_i ||r_i - r_hat_i||^2."""
    if kl.n_samples != ens.n_samples or kl.state_dim != ens.state_dim:
        raise InputError("expansion does not match the ensemble")
    diff = ens.data - reconstruct_all(kl)
    return float(np.sum(ens.weights * np.sum(diff ** 2, axis=0)))


def surrogate(kl: KLExpansion, coefficients: np.ndarray) -> np.ndarray:
    """sum_m sigma_m c_m v_m for parametric-mode values c at a new point."""
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (kl.rank,):
        raise InputError(f"expected {kl.rank} coefficients, got {c.shape}")
    return kl.spatial_modes @ (kl.singular_values * c)


def energy_table(kl: KLExpansion) -> list[dict]:
    """Predicted discarded energy and captured fraction for n = 0..rank."""
    tail = _tail_energies(kl)
    total = float(tail[0])
    rows = []
    for n in range(kl.rank + 1):
        rows.append({
            "n": n,
            "discarded_energy": float(tail[n]),
            "captured_fraction": (
                1.0 - float(tail[n]) / total if total > 0 else 1.0
            ),
        })
    return rows


# ---------------------------------------------------------------------------
# Factorizations
# ---------------------------------------------------------------------------


def cholesky_factor(c: CorrelationMatrix) -> Factorization:
    """B = L^T with B^T B = C; pivoted Cholesky when C is singular."""
    evals = _clip_psd(spla.eigvalsh(c.entries), "correlation matrix")
    d = c.dim
    lam_max = float(evals.max()) if evals.size else 0.0
    if lam_max == 0.0:
        return Factorization(np.zeros((0, d)))
    if np.count_nonzero(evals > RANK_RTOL * lam_max) == d:
        try:
            return Factorization(spla.cholesky(c.entries, lower=False))
        except np.linalg.LinAlgError:
            pass
    upper, piv, rank, _info = spla.lapack.dpstrf(
        np.array(c.entries, order="F"), lower=0,
    )
    # P^T C P = U^T U, so B = U P^T; only the leading rank rows are valid.
    u = np.triu(upper)[:rank, :]
    b = np.zeros((rank, d))
    b[:, piv - 1] = u
    return Factorization(b)


def sqrt_factor(c: CorrelationMatrix) -> Factorization:
    """B = C^{1/2} = sum_m lambda_m^{1/2} v_m v_m^T (symmetric)."""
    dec = eigendecompose(c)
    v = dec.eigenvectors
    b = (v * np.sqrt(dec.eigenvalues)) @ v.T
    return Factorization(0.5 * (b + b.T))


def factor_spectrum(b: Factorization) -> np.ndarray:
    """Eigenvalues of B B^T, descending and clipped at 0."""
    bb = b.factor @ b.factor.T
    evals = np.sort(spla.eigvalsh(0.5 * (bb + bb.T)))[::-1]
    return np.maximum(evals, 0.0)


def unitary_equivalence(b1: Factorization, b2: Factorization) -> np.ndarray:
    """Orthogonal X minimising ||B2 - X B1||_F (orthogonal Procrustes).

    X is U V^T from the SVD of B2 B1^T. When both factors have the same
    codomain X is orthogonal; otherwise it is a partial isometry of shape
    h2 x h1. When C is singular X is only determined on the range of B1.
    """
    f1, f2 = b1.factor, b2.factor
    if f1.shape[1] != f2.shape[1]:
        raise InconsistentFactorizationError(
            f"factors act on different spaces: {f1.shape[1]} vs {f2.shape[1]}"
        )
    c1, c2 = b1.gramian(), b2.gramian()
    scale = max(np.linalg.norm(c1), np.linalg.norm(c2), 1e-300)
    if np.linalg.norm(c1 - c2) > EQUIVALENCE_TOL * scale:
        raise InconsistentFactorizationError(
            "factorizations do not share the same correlation"
        )
    square = f1.shape[0] == f2.shape[0]
    u, _s, vt = np.linalg.svd(f2 @ f1.T, full_matrices=square)
    return u @ vt


def procrustes_residual(
    b1: Factorization, b2: Factorization, x: np.ndarray,
) -> float:
    """Relative residual ||B2 - X B1||_F / ||B2||_F."""
    norm = np.linalg.norm(b2.factor)
    diff = np.linalg.norm(b2.factor - x @ b1.factor)
    return float(diff / norm) if norm > 0 else float(diff)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def export_kl(kl: KLExpansion, out_dir: str, prefix: str = "kl") -> dict:
    """Write modes CSV (d x n), parametric modes CSV (N x n), sigma JSON.

    Returns the written paths keyed by kind.
    """
    paths = {
        "modes": os.path.join(out_dir, f"{prefix}_modes.csv"),
        "parametric_modes": os.path.join(
            out_dir, f"{prefix}_parametric_modes.csv",
        ),
        "singular_values": os.path.join(
            out_dir, f"{prefix}_singular_values.json",
        ),
    }
    if kl.rank:
        save_matrix_csv(paths["modes"], kl.spatial_modes)
        save_matrix_csv(paths["parametric_modes"], kl.parametric_modes)
    else:
        write_atomic(paths["modes"], "")
        write_atomic(paths["parametric_modes"], "")
    write_atomic(paths["singular_values"], dumps_json(kl.singular_values))
    return paths


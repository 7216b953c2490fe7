"""Structure-preserving representations: vector fields and matrix-manifold fields.

Vector-valued models r(mu) = sum_k r_k(mu) (x) e_k live in U (x) E and
have an E (x) E valued kernel. SPD and rotation valued fields are mapped
to their Lie algebras (symmetric resp. skew matrices) by the matrix
logarithm, reduced linearly there, and mapped back by the exponential.

Flattening of the Lie algebra uses a fixed basis: for sym(n) the diagonal
first, then the strict upper triangle row-major; for so(n) the strict
upper triangle row-major. Off-diagonal coordinates are scaled by sqrt(2)
so the Euclidean inner product of flattened vectors equals the Frobenius
inner product of the matrices.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as spla

from snapcorr.ensemble import (
    CorrelationMatrix,
    SampledMeasure,
    SnapshotEnsemble,
    assemble_correlation,
)
from snapcorr.errors import DomainError, InputError, LogBranchError
from snapcorr.export import load_json, read_matrix_csv

SQRT2 = math.sqrt(2.0)
SYMMETRY_TOL = 1e-10
SKEW_TOL = 1e-12
ORTHOGONALITY_TOL = 1e-8
BRANCH_MARGIN = 1e-6
BLOCK_PSD_TOL = 1e-10


class Manifold(str, enum.Enum):
    """Where the samples of a matrix field live."""

    SPD = "SPD"
    ROTATION = "ROTATION"
    SYMMETRIC_LOG = "SYMMETRIC-LOG-COORDS"
    SKEW_LOG = "SKEW-LOG-COORDS"

    @property
    def symmetric(self) -> bool:
        """True when the Lie algebra is sym(n), False for so(n)."""
        return self in (Manifold.SPD, Manifold.SYMMETRIC_LOG)

    @property
    def is_group(self) -> bool:
        """True when samples are group elements (exponentiated on decode)."""
        return self in (Manifold.SPD, Manifold.ROTATION)


def _as_manifold(tag: "Manifold | str") -> Manifold:
    try:
        return Manifold(tag)
    except ValueError:
        raise DomainError(f"unknown manifold tag {tag!r}") from None


def _scale(m: np.ndarray) -> float:
    return max(float(np.max(np.abs(m))) if m.size else 0.0, 1.0)


def _square(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"{what} must be a square matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{what} contains non-finite entries")
    return m


def _is_symmetric(m: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    return bool(np.max(np.abs(m - m.T), initial=0.0) <= tol * _scale(m))


def _is_skew(m: np.ndarray, tol: float = SKEW_TOL) -> bool:
    return bool(np.max(np.abs(m + m.T), initial=0.0) <= tol * _scale(m))


# ---------------------------------------------------------------------------
# Matrix kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MatrixKernelBlock:
    """N x N array of b x b blocks kappa(mu_i, mu_j), stored as (N, N, b, b)."""

    blocks: np.ndarray

    def __post_init__(self) -> None:
        k = np.array(self.blocks, dtype=float, copy=True)
        if k.ndim != 4 or k.shape[0] != k.shape[1] or k.shape[2] != k.shape[3]:
            raise InputError(f"kernel blocks must be (N, N, b, b), got {k.shape}")
        transposed = np.transpose(k, (1, 0, 3, 2))
        if np.max(np.abs(k - transposed), initial=0.0) > 1e-12 * _scale(k):
            raise InputError("kernel blocks are not block-symmetric")
        k.flags.writeable = False
        object.__setattr__(self, "blocks", k)

    @property
    def n_samples(self) -> int:
        """Number of sample points N."""
        return self.blocks.shape[0]

    @property
    def block_size(self) -> int:
        """Size b of each block (e for vector kernels, n for tensor kernels)."""
        return self.blocks.shape[2]

    def assemble(self) -> np.ndarray:
        """The (N*b) x (N*b) matrix with block (i, j) = kappa(mu_i, mu_j)."""
        n, b = self.n_samples, self.block_size
        big = np.transpose(self.blocks, (0, 2, 1, 3)).reshape(n * b, n * b)
        return 0.5 * (big + big.T)

    def weighted(self, measure: SampledMeasure) -> np.ndarray:
        """W^{1/2} K W^{1/2} with each weight repeated over its block."""
        if measure.size != self.n_samples:
            raise InputError("measure does not match the kernel")
        sqrt_w = np.repeat(np.sqrt(measure.weights), self.block_size)
        return sqrt_w[:, None] * self.assemble() * sqrt_w[None, :]

    def min_eigenvalue_ratio(self) -> float:
        """lambda_min / lambda_max of the assembled matrix (0 if it is zero)."""
        evals = spla.eigvalsh(self.assemble())
        top = float(np.max(np.abs(evals))) if evals.size else 0.0
        return float(evals.min() / top) if top > 0 else 0.0

    def is_psd(self, tol: float = BLOCK_PSD_TOL) -> bool:
        """Assembled matrix PSD within -tol * lambda_max."""
        return self.min_eigenvalue_ratio() >= -tol


# ---------------------------------------------------------------------------
# Vector-valued models in U (x) E
# ---------------------------------------------------------------------------


def _shared_measure(ensembles: Sequence[SnapshotEnsemble]) -> SampledMeasure:
    """Check that all ensembles share d, N and weights; return the measure."""
    if not ensembles:
        raise InputError("at least one component ensemble is required")
    first = ensembles[0]
    for k, ens in enumerate(ensembles[1:], start=1):
        if ens.state_dim != first.state_dim or ens.n_samples != first.n_samples:
            raise InputError(
                f"component {k} has shape {ens.data.shape},"
                f" component 0 has {first.data.shape}"
            )
        if not np.array_equal(ens.weights, first.weights):
            raise InputError(f"component {k} uses a different measure")
    return first.measure


@dataclass(frozen=True, eq=False)
class VectorFieldEnsemble:
    """Components r_k(mu) in U over a shared measure, with frame vectors in E."""

    components: tuple[SnapshotEnsemble, ...]
    frame: np.ndarray

    def __post_init__(self) -> None:
        components = tuple(self.components)
        _shared_measure(components)
        frame = np.atleast_2d(np.asarray(self.frame, dtype=float))
        if frame.shape[0] != len(components):
            raise InputError(
                f"{len(components)} components but {frame.shape[0]}"
                " frame vectors"
            )
        if frame.shape[1] < 1 or not np.all(np.isfinite(frame)):
            raise InputError("frame vectors must be finite with e >= 1")
        frame = frame.copy()
        frame.flags.writeable = False
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "frame", frame)

    @property
    def measure(self) -> SampledMeasure:
        """The shared sampled measure."""
        return self.components[0].measure

    @property
    def field_dims(self) -> tuple[int, int]:
        """(d, e)."""
        return self.components[0].state_dim, self.frame.shape[1]

    def fields(self) -> np.ndarray:
        """X_i = sum_k r_k(mu_i) e_k^T as an (N, d, e) array."""
        r = np.stack([c.data for c in self.components])  # (k, d, N)
        return np.einsum("kdi,ke->ide", r, self.frame)

    def flattened(self) -> SnapshotEnsemble:
        """The ensemble of vec(X_i) in R^{d*e}, index a*e + b."""
        x = self.fields()
        n = x.shape[0]
        return SnapshotEnsemble(x.reshape(n, -1).T, self.measure)


def vector_kernel(vfe: VectorFieldEnsemble) -> MatrixKernelBlock:
    """kappa_E(mu_i, mu_j) = sum_{k,l} <r_k(mu_i), r_l(mu_j)>_U e_k e_l^T."""
    x = vfe.fields()
    return MatrixKernelBlock(np.einsum("ide,jdf->ijef", x, x))


def vector_correlation(vfe: VectorFieldEnsemble) -> CorrelationMatrix:
    """Vector correlation C_E on the flattened space U (x) E = R^{d*e}."""
    return assemble_correlation(vfe.flattened())


def vector_partial_correlation(vfe: VectorFieldEnsemble) -> CorrelationMatrix:
    """sum_i w_i X_i X_i^T on U: the U-side partner of ``vector_kernel``.

    The weighted block kernel W^{1/2} K W^{1/2} and this matrix have the
    same nonzero spectrum.
    """
    x = vfe.fields()
    d = x.shape[1]
    c = np.zeros((d, d))
    for i, w in enumerate(vfe.measure.weights):
        c += w * (x[i] @ x[i].T)
    return CorrelationMatrix(0.5 * (c + c.T))


# ---------------------------------------------------------------------------
# Lie group / algebra maps
# ---------------------------------------------------------------------------


def sym_exp(h: np.ndarray) -> np.ndarray:
    """exp of a symmetric matrix by spectral calculus; the result is SPD."""
    h = _square(h, "symmetric matrix")
    if not _is_symmetric(h):
        raise InputError("sym_exp requires a symmetric matrix")
    lam, q = spla.eigh(0.5 * (h + h.T))
    a = (q * np.exp(lam)) @ q.T
    return 0.5 * (a + a.T)


def sym_log(a: np.ndarray) -> np.ndarray:
    """Principal log of an SPD matrix by spectral calculus."""
    a = _square(a, "SPD matrix")
    if not _is_symmetric(a):
        raise InputError("sym_log requires a symmetric matrix")
    lam, q = spla.eigh(0.5 * (a + a.T))
    if lam.min() <= 0:
        raise DomainError(
            f"sym_log requires a positive definite matrix"
            f" (smallest eigenvalue {lam.min():.3e})"
        )
    h = (q * np.log(lam)) @ q.T
    return 0.5 * (h + h.T)


def skew_exp(s: np.ndarray) -> np.ndarray:
    """exp of a skew matrix: a rotation (scaling and squaring, Pade)."""
    s = _square(s, "skew matrix")
    if not _is_skew(s):
        raise InputError("skew_exp requires a skew-symmetric matrix")
    return spla.expm(0.5 * (s - s.T))


def rotation_log(q: np.ndarray) -> np.ndarray:
    """Principal log of a rotation; rotation angles must stay away from pi."""
    q = _square(q, "rotation matrix")
    n = q.shape[0]
    if np.linalg.norm(q.T @ q - np.eye(n)) > ORTHOGONALITY_TOL:
        raise DomainError("rotation_log requires an orthogonal matrix")
    if np.linalg.det(q) <= 0:
        raise DomainError("rotation_log requires det > 0")
    angles = np.abs(np.angle(np.linalg.eigvals(q)))
    if angles.size and angles.max() > math.pi - BRANCH_MARGIN:
        raise LogBranchError(
            f"rotation angle {angles.max():.9f} is within {BRANCH_MARGIN:g}"
            " of pi; the principal logarithm is ill-conditioned"
        )
    log_q = np.real(spla.logm(q))
    return 0.5 * (log_q - log_q.T)


def _group_log(a: np.ndarray, manifold: Manifold) -> np.ndarray:
    if manifold is Manifold.SPD:
        return sym_log(a)
    if manifold is Manifold.ROTATION:
        return rotation_log(a)
    return a


def _group_exp(h: np.ndarray, manifold: Manifold) -> np.ndarray:
    if manifold is Manifold.SPD:
        return sym_exp(h)
    if manifold is Manifold.ROTATION:
        return skew_exp(h)
    return h


# ---------------------------------------------------------------------------
# Lie algebra flattening
# ---------------------------------------------------------------------------


def algebra_dim(n: int, manifold: "Manifold | str") -> int:
    """Dimension of sym(n) or so(n)."""
    tag = _as_manifold(manifold)
    return n * (n + 1) // 2 if tag.symmetric else n * (n - 1) // 2


def _matrix_size(dim: int, manifold: Manifold) -> int:
    """Invert ``algebra_dim``; raise if *dim* is not a valid size."""
    root = math.isqrt(8 * dim + 1)
    if root * root != 8 * dim + 1:
        raise DomainError(
            f"{dim} coordinates do not form a {manifold.value} algebra"
        )
    return (root - 1) // 2 if manifold.symmetric else (root + 1) // 2


def flatten_algebra(h: np.ndarray, manifold: "Manifold | str") -> np.ndarray:
    """Coordinates of a sym(n)/so(n) element in the fixed scaled basis."""
    tag = _as_manifold(manifold)
    n = h.shape[0]
    rows, cols = np.triu_indices(n, k=1)
    upper = SQRT2 * h[rows, cols]
    if tag.symmetric:
        return np.concatenate((np.diag(h), upper))
    return upper


def unflatten_algebra(
    x: np.ndarray, n: int, manifold: "Manifold | str",
) -> np.ndarray:
    """Inverse of ``flatten_algebra``."""
    tag = _as_manifold(manifold)
    x = np.asarray(x, dtype=float)
    if x.size != algebra_dim(n, tag):
        raise DomainError(
            f"{x.size} coordinates do not match a {n}x{n} {tag.value} algebra"
        )
    rows, cols = np.triu_indices(n, k=1)
    h = np.zeros((n, n))
    if tag.symmetric:
        h[np.diag_indices(n)] = x[:n]
        upper = x[n:] / SQRT2
        h[rows, cols] = upper
        h[cols, rows] = upper
    else:
        upper = x / SQRT2
        h[rows, cols] = upper
        h[cols, rows] = -upper
    return h


# ---------------------------------------------------------------------------
# Matrix fields
# ---------------------------------------------------------------------------


def _check_sample(a: np.ndarray, tag: Manifold, i: int) -> None:
    """Raise DomainError unless sample *i* belongs to *tag*."""
    if tag is Manifold.SPD:
        if not _is_symmetric(a):
            raise DomainError(f"sample {i} is not symmetric")
        if spla.eigvalsh(0.5 * (a + a.T)).min() <= 0:
            raise DomainError(f"sample {i} is not positive definite")
    elif tag is Manifold.ROTATION:
        n = a.shape[0]
        if n < 2:
            raise DomainError("rotation fields need n >= 2")
        if np.linalg.norm(a.T @ a - np.eye(n)) > ORTHOGONALITY_TOL:
            raise DomainError(f"sample {i} is not orthogonal")
        if np.linalg.det(a) <= 0:
            raise DomainError(f"sample {i} has non-positive determinant")
    elif tag is Manifold.SYMMETRIC_LOG:
        if not _is_symmetric(a):
            raise DomainError(f"sample {i} is not symmetric")
    elif not _is_skew(a, SYMMETRY_TOL):
        raise DomainError(f"sample {i} is not skew-symmetric")


@dataclass(frozen=True, eq=False)
class MatrixFieldEnsemble:
    """Per-parameter matrices A(mu_i) with a manifold tag and log coordinates.

    ``log_coords`` are computed from the samples when not given. For the
    ``*-LOG-COORDS`` tags the samples are already Lie algebra elements.
    """

    samples: np.ndarray
    manifold: Manifold
    log_coords: np.ndarray | None = None
    measure: SampledMeasure | None = None

    def __post_init__(self) -> None:
        tag = _as_manifold(self.manifold)
        samples = np.array(self.samples, dtype=float, copy=True)
        if samples.ndim != 3 or samples.shape[1] != samples.shape[2]:
            raise InputError(
                f"matrix field samples must be (N, n, n), got {samples.shape}"
            )
        if not np.all(np.isfinite(samples)):
            raise InputError("matrix field contains non-finite entries")
        for i, a in enumerate(samples):
            _check_sample(a, tag, i)
        if self.log_coords is None:
            logs = np.stack([_group_log(a, tag) for a in samples])
        else:
            logs = np.array(self.log_coords, dtype=float, copy=True)
            if logs.shape != samples.shape:
                raise InputError("log coordinates do not match the samples")
        for i, h in enumerate(logs):
            ok = _is_symmetric(h) if tag.symmetric else _is_skew(h, SYMMETRY_TOL)
            if not ok:
                raise DomainError(f"log coordinates {i} are not in the algebra")
        measure = self.measure
        if measure is None:
            measure = SampledMeasure.from_coords(
                np.arange(samples.shape[0], dtype=float).reshape(-1, 1),
            )
        elif measure.size != samples.shape[0]:
            raise InputError("measure does not match the number of samples")
        samples.flags.writeable = False
        logs.flags.writeable = False
        object.__setattr__(self, "manifold", tag)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "log_coords", logs)
        object.__setattr__(self, "measure", measure)

    @property
    def n(self) -> int:
        """Matrix size n."""
        return self.samples.shape[1]

    @property
    def n_samples(self) -> int:
        """Number of samples N."""
        return self.samples.shape[0]

    def exponentiated(self) -> "MatrixFieldEnsemble":
        """Group-valued field exp(H(mu_i)) for a log-coordinate field."""
        if self.manifold.is_group:
            return self
        group = Manifold.SPD if self.manifold.symmetric else Manifold.ROTATION
        mats = np.stack([_group_exp(h, group) for h in self.log_coords])
        return MatrixFieldEnsemble(mats, group, self.log_coords, self.measure)


def encode_field(mfe: MatrixFieldEnsemble) -> SnapshotEnsemble:
    """Flatten the log coordinates H(mu_i) into a snapshot ensemble."""
    if algebra_dim(mfe.n, mfe.manifold) == 0:
        raise DomainError(f"the {mfe.manifold.value} algebra of size {mfe.n} is trivial")
    columns = [flatten_algebra(h, mfe.manifold) for h in mfe.log_coords]
    return SnapshotEnsemble(np.column_stack(columns), mfe.measure)


def decode_field(
    ens: SnapshotEnsemble, manifold: "Manifold | str",
) -> MatrixFieldEnsemble:
    """Unflatten each snapshot to the algebra and exponentiate for group tags."""
    tag = _as_manifold(manifold)
    n = _matrix_size(ens.state_dim, tag)
    logs = np.stack([
        unflatten_algebra(ens.data[:, i], n, tag) for i in range(ens.n_samples)
    ])
    mats = np.stack([_group_exp(h, tag) for h in logs])
    return MatrixFieldEnsemble(mats, tag, logs, ens.measure)


def field_roundtrip_errors(
    original: MatrixFieldEnsemble, decoded: MatrixFieldEnsemble,
) -> np.ndarray:
    """Frobenius error per sample between two fields of the same shape."""
    if original.samples.shape != decoded.samples.shape:
        raise InputError("fields have different shapes")
    diff = original.samples - decoded.samples
    return np.sqrt(np.sum(diff ** 2, axis=(1, 2)))


def load_matrix_field(
    csv_path: str, manifest_path: str, measure: SampledMeasure | None = None,
) -> MatrixFieldEnsemble:
    """Read N rows of row-major n x n matrices plus a manifest {n, manifold}."""
    manifest = load_json(manifest_path)
    name = os.path.basename(manifest_path)
    if not isinstance(manifest, dict):
        raise InputError(f"{name}: manifest must be a JSON object")
    n = manifest.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise InputError(f"{name}: 'n' must be a positive integer")
    tag = _as_manifold(manifest.get("manifold", ""))
    rows = read_matrix_csv(csv_path)
    if rows.shape[1] != n * n:
        raise InputError(
            f"{os.path.basename(csv_path)}: expected {n * n} columns"
            f" for n={n}, found {rows.shape[1]}"
        )
    return MatrixFieldEnsemble(rows.reshape(-1, n, n), tag, measure=measure)


# ---------------------------------------------------------------------------
# Tensor-valued models: U (x) F with maps R_k in the algebra
# ---------------------------------------------------------------------------


def _tensor_fields(
    components: Sequence[SnapshotEnsemble], maps: Sequence[np.ndarray],
    manifold: "Manifold | str",
) -> tuple[np.ndarray, SampledMeasure]:
    """Y_i = sum_k r_k(mu_i) (x) R_k as an (N, d*n, n) array."""
    measure = _shared_measure(components)
    if len(maps) != len(components):
        raise InputError(
            f"{len(components)} components but {len(maps)} maps"
        )
    tag = _as_manifold(manifold)
    mats = [_square(m, f"map {k}") for k, m in enumerate(maps)]
    n = mats[0].shape[0]
    for k, m in enumerate(mats):
        if m.shape != (n, n):
            raise InputError(f"map {k} has shape {m.shape}, expected {(n, n)}")
        ok = _is_symmetric(m) if tag.symmetric else _is_skew(m, SYMMETRY_TOL)
        if not ok:
            raise InputError(f"map {k} is not in the {tag.value} algebra")
    r = np.stack([c.data for c in components])  # (k, d, N)
    rk = np.stack(mats)  # (k, n, n)
    y = np.einsum("kdi,kpq->idpq", r, rk)
    return y.reshape(y.shape[0], -1, n), measure


def tensor_kernel(
    components: Sequence[SnapshotEnsemble], maps: Sequence[np.ndarray],
    manifold: "Manifold | str" = Manifold.SYMMETRIC_LOG,
) -> MatrixKernelBlock:
    """kappa_F(mu_i, mu_j) = sum_{k,l} <r_k(mu_i), r_l(mu_j)>_U R_k^T R_l."""
    y, _measure = _tensor_fields(components, maps, manifold)
    return MatrixKernelBlock(np.einsum("iap,jaq->ijpq", y, y))


def tensor_correlation(
    components: Sequence[SnapshotEnsemble], maps: Sequence[np.ndarray],
    manifold: "Manifold | str" = Manifold.SYMMETRIC_LOG,
) -> CorrelationMatrix:
    """Correlation C_F on U (x) F = R^{d*n}: sum_i w_i Y_i Y_i^T."""
    y, measure = _tensor_fields(components, maps, manifold)
    dim = y.shape[1]
    c = np.zeros((dim, dim))
    for i, w in enumerate(measure.weights):
        c += w * (y[i] @ y[i].T)
    return CorrelationMatrix(0.5 * (c + c.T))

"""Tests for snapcorr.tensor."""

from __future__ import annotations

import json
import os

import numpy as np
import pytest
from scipy.stats import ortho_group

from snapcorr.ensemble import SampledMeasure, SnapshotEnsemble
from snapcorr.errors import InputError, StructureError
from snapcorr.spectral import kl_expand
from snapcorr.tensor import (
    SnapshotTensor,
    TTDecomposition,
    detensorize,
    export_tt,
    split,
    tensorize,
    tt_reconstruct,
    tt_svd,
)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _make_tensor(seed: int, shape: tuple[int, ...], weighted: bool = False) -> SnapshotTensor:
    rng = np.random.default_rng(seed)
    data = rng.standard_normal(shape)
    if weighted:
        weights = tuple(rng.uniform(0.5, 2.0, n) for n in shape[1:])
    else:
        weights = tuple(np.ones(n) for n in shape[1:])
    return SnapshotTensor(data, weights)


def _make_ensemble(seed: int, d: int, grid: tuple[int, ...], weights=None) -> SnapshotEnsemble:
    rng = np.random.default_rng(seed)
    n = int(np.prod(grid))
    coords = np.array(list(np.ndindex(*grid)), dtype=float)
    return SnapshotEnsemble(
        rng.standard_normal((d, n)), SampledMeasure.from_coords(coords, weights),
    )


def _matricization_rank(data: np.ndarray, k: int) -> int:
    mat = data.reshape(int(np.prod(data.shape[:k])), -1)
    return int(np.linalg.matrix_rank(mat))


# ---------------------------------------------------------------------------
# Tensorize
# ---------------------------------------------------------------------------


def test_tensorize_roundtrip_is_exact():
    ens = _make_ensemble(0, 3, (2, 4))
    t = tensorize(ens, (2, 4))
    assert t.shape == (3, 2, 4)
    back = detensorize(t)
    assert np.array_equal(back.data, ens.data)
    assert back.measure is ens.measure


def test_tensorize_row_major_layout():
    ens = _make_ensemble(1, 2, (3, 2))
    t = tensorize(ens, (3, 2))
    # sample index 2*1 + 1 = 3 sits at grid point (1, 1)
    np.testing.assert_array_equal(t.data[:, 1, 1], ens.data[:, 3])


def test_tensorize_factors_product_weights():
    a, b = np.array([1.0, 2.0]), np.array([0.5, 1.0, 1.5])
    w = np.multiply.outer(a, b).reshape(-1)
    ens = _make_ensemble(2, 2, (2, 3), weights=w)
    t = tensorize(ens, (2, 3))
    rebuilt = np.multiply.outer(*t.axis_weights).reshape(-1)
    np.testing.assert_allclose(rebuilt, w, rtol=1e-13)


def test_tensorize_rejects_non_product_weights():
    w = np.array([1.0, 2.0, 3.0, 1.0])
    ens = _make_ensemble(2, 2, (2, 2), weights=w)
    with pytest.raises(InputError, match="product"):
        tensorize(ens, (2, 2))


def test_tensorize_rejects_wrong_grid():
    ens = _make_ensemble(0, 3, (2, 3))
    with pytest.raises(InputError, match="6 samples"):
        tensorize(ens, (2, 2))


def test_detensorize_without_source_measure():
    t = _make_tensor(3, (2, 2, 3), weighted=True)
    ens = detensorize(t)
    assert ens.data.shape == (2, 6)
    expected = np.multiply.outer(*t.axis_weights).reshape(-1)
    np.testing.assert_allclose(ens.weights, expected)
    assert ens.measure.points[4].coords == (1.0, 1.0)


def test_snapshot_tensor_rejects_weight_mismatch():
    with pytest.raises(InputError, match="axis 2"):
        SnapshotTensor(np.zeros((2, 3, 4)), (np.ones(3), np.ones(5)))


def test_snapshot_tensor_rejects_non_positive_weights():
    with pytest.raises(InputError, match="positive"):
        SnapshotTensor(np.zeros((2, 3)), (np.array([1.0, 0.0, 1.0]),))


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("weighted", [False, True])
def test_split_without_truncation_is_exact(weighted):
    t = _make_tensor(0, (3, 4, 5), weighted=weighted)
    res = split(t, [1], [2])
    err = np.linalg.norm(res.reconstruct() - t.data)
    assert err <= 1e-11 * np.linalg.norm(t.data)
    assert res.discarded_energy == pytest.approx(0.0, abs=1e-20)


def test_split_singular_values_match_matricization():
    t = _make_tensor(1, (3, 4, 5))
    res = split(t, [1], [2])
    s = np.linalg.svd(t.data.reshape(12, 5), compute_uv=False)
    np.testing.assert_allclose(res.singular_values, s, rtol=1e-12)


@pytest.mark.parametrize("weighted", [False, True])
def test_split_error_identity(weighted):
    t = _make_tensor(2, (3, 4, 5), weighted=weighted)
    res = split(t, [], [1, 2], max_rank=2)
    assert res.rank == 2
    measured = t.weighted_norm(res.reconstruct()) ** 2
    assert measured == pytest.approx(res.discarded_energy, rel=1e-10)


def test_split_rank_one_tensor():
    x, y, z = np.array([1.0, 2.0]), np.array([1.0, -1.0, 0.5]), np.array([3.0, 1.0])
    t = SnapshotTensor(np.einsum("a,b,c->abc", x, y, z), (np.ones(3), np.ones(2)))
    res = split(t, [2], [1])
    assert res.rank == 1
    np.testing.assert_allclose(res.reconstruct(), t.data, atol=1e-13)


def test_split_energy_tolerance():
    t = _make_tensor(4, (4, 3, 3))
    full = split(t, [1], [2])
    eps = float(np.sqrt(full.singular_values[-1] ** 2)) * (1 + 1e-9)
    res = split(t, [1], [2], energy_tol=eps)
    assert res.rank == full.rank - 1
    assert res.discarded_energy <= eps ** 2


@pytest.mark.parametrize("left,right", [([1], [1, 2]), ([1, 2], []), ([1], [3]), ([1, 1], [2])])
def test_split_rejects_bad_partition(left, right):
    t = _make_tensor(0, (2, 3, 3))
    with pytest.raises(InputError, match="partition"):
        split(t, left, right)


# ---------------------------------------------------------------------------
# Tensor train
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(50))
def test_tt_svd_exact_without_truncation(seed):
    t = _make_tensor(seed, (4, 4, 4))
    tt = tt_svd(t)
    rebuilt = tt_reconstruct(tt).data
    assert np.linalg.norm(rebuilt - t.data) <= 1e-10 * np.linalg.norm(t.data)
    for k, r in enumerate(tt.bond_dims[1:-1], start=1):
        assert r <= _matricization_rank(t.data, k)
    assert tt.bond_dims[0] == tt.bond_dims[-1] == 1


@pytest.mark.parametrize("seed", range(50))
def test_tt_svd_error_within_bound(seed):
    t = _make_tensor(seed, (3, 4, 3, 4), weighted=True)
    norm = t.weighted_norm()
    tt = tt_svd(t, energy_tol=0.3 * norm)
    err = t.weighted_norm(tt_reconstruct(tt).data)
    assert err <= tt.error_bound * (1 + 1e-10) + 1e-12 * norm
    assert tt.error_bound <= 0.3 * norm * (1 + 1e-12)
    # the discarded tails are orthogonal, so the error sits at the bound
    assert err >= tt.error_bound / np.sqrt(t.order - 1) * (1 - 1e-8) - 1e-12 * norm


def _make_orthogonal_tensor(seed: int, n: int = 5) -> SnapshotTensor:
    """sum_j c_j a_j (x) b_j (x) e_j with orthonormal factors and decaying c_j."""
    rng = np.random.default_rng(seed)
    a, b, e = (ortho_group.rvs(n, random_state=rng) for _ in range(3))
    c = 2.0 ** -np.arange(n) * rng.uniform(1.0, 1.5, n)
    data = np.einsum("j,aj,bj,ej->abe", c, a, b, e)
    return SnapshotTensor(data, (np.ones(n), np.ones(n)))


@pytest.mark.parametrize("seed", range(50))
def test_tt_svd_error_does_not_grow_as_tolerance_shrinks(seed):
    t = _make_orthogonal_tensor(seed)
    norm = t.weighted_norm()
    prev = None
    for eps in np.linspace(norm, 0.0, 41):
        tt = tt_svd(t, energy_tol=float(eps))
        err = t.weighted_norm(tt_reconstruct(tt).data)
        assert err <= tt.error_bound * (1 + 1e-10) + 1e-12 * norm
        if prev is not None:
            assert err <= prev + 1e-12 * norm
        prev = err
    assert prev <= 1e-10 * norm


def test_tt_svd_bond_cap_on_matrix_matches_best_rank_one():
    u = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    v = np.array([[3.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]])
    data = u @ v
    t = SnapshotTensor(data, (np.ones(4),))
    tt = tt_svd(t, max_bond=1)
    s = np.linalg.svd(data, compute_uv=False)
    err = np.linalg.norm(tt_reconstruct(tt).data - data)
    assert tt.bond_dims == (1, 1, 1)
    assert err ** 2 == pytest.approx(s[1] ** 2, rel=1e-10)
    assert tt.error_bound == pytest.approx(s[1], rel=1e-10)


def test_tt_svd_order_two_matches_kl():
    ens = _make_ensemble(5, 6, (4,), weights=np.ones(4))
    t = tensorize(ens, (4,), axis_weights=(np.ones(4),))
    tt = tt_svd(t)
    sigma_tt = np.linalg.norm(tt.cores[1][:, :, 0], axis=1)
    np.testing.assert_allclose(sigma_tt, kl_expand(ens).singular_values, rtol=1e-10)


def test_tt_svd_keeps_bond_at_least_one_for_zero_tensor():
    t = SnapshotTensor(np.zeros((2, 3, 2)), (np.ones(3), np.ones(2)))
    tt = tt_svd(t)
    assert min(tt.bond_dims) == 1
    assert np.all(tt_reconstruct(tt).data == 0.0)


def test_tt_svd_rejects_bad_caps():
    t = _make_tensor(0, (2, 3, 3))
    with pytest.raises(InputError, match="bond caps"):
        tt_svd(t, max_bond=[2])
    with pytest.raises(InputError, match=">= 1"):
        tt_svd(t, max_bond=0)


def test_tt_reconstruct_matches_naive_contraction():
    rng = np.random.default_rng(9)
    cores = (
        rng.standard_normal((1, 2, 3)),
        rng.standard_normal((3, 3, 2)),
        rng.standard_normal((2, 4, 1)),
    )
    tt = TTDecomposition(cores)
    data = tt_reconstruct(tt).data
    oracle = np.zeros((2, 3, 4))
    for i in range(2):
        for j in range(3):
            for k in range(4):
                oracle[i, j, k] = (cores[0][:, i, :] @ cores[1][:, j, :] @ cores[2][:, k, :])[0, 0]
    np.testing.assert_allclose(data, oracle, atol=1e-12)
    assert tt.n_params == 6 + 18 + 8


def test_tt_reconstruct_detects_bond_mismatch():
    tt = TTDecomposition((np.ones((1, 2, 2)), np.ones((3, 2, 1))))
    with pytest.raises(StructureError, match="bond mismatch"):
        tt_reconstruct(tt)


def test_tt_rejects_non_three_way_core():
    with pytest.raises(StructureError):
        TTDecomposition((np.ones((2, 2)),))


def test_export_tt(tmp_path):
    tt = tt_svd(_make_tensor(1, (2, 3, 2)))
    manifest_path = export_tt(tt, str(tmp_path))
    assert os.path.basename(manifest_path) == "tt_manifest.json"
    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["shape"] == [2, 3, 2]
    assert manifest["bond_dims"] == list(tt.bond_dims)
    for name in manifest["cores"]:
        assert os.path.exists(tmp_path / name)

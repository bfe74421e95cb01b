"""MPS construction, gauge moves, compression, checkpoints."""

from functools import reduce

import numpy as np
import pytest

from dickeising.model import PAULI, ModelParams, SiteSpec, annihilation
from dickeising.mps import (
    MPSState,
    apply_local,
    basis_product_mps,
    canonicalize,
    compress,
    from_dense,
    load_checkpoint,
    mps_norm,
    mps_sum,
    normalized,
    overlap,
    product_mps,
    random_mps,
    save_checkpoint,
    to_dense,
)
from dickeising.tensor import DenseTensor, DimensionError, TruncationSpec

SPECS = (SiteSpec("oscillator", 3), SiteSpec("spin", 2), SiteSpec("spin", 2))


def dense_site_op(op, dims, site):
    mats = [np.eye(d) for d in dims]
    mats[site] = op
    return reduce(np.kron, mats)


def random_state(seed, specs=SPECS, max_rank=4):
    return random_mps(specs, max_rank, np.random.default_rng(seed))


def test_product_mps_dense_vector():
    vecs = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0]) / np.sqrt(2)]
    psi = product_mps(SPECS, vecs)
    dense = to_dense(psi)
    ref = reduce(np.kron, vecs)
    np.testing.assert_allclose(dense, ref, atol=1e-15)


def test_basis_product_mps_one_hot():
    psi = basis_product_mps(SPECS, [2, 0, 1])
    dense = to_dense(psi)
    idx = np.ravel_multi_index((2, 0, 1), (3, 2, 2))
    assert dense[idx] == 1.0
    assert np.count_nonzero(dense) == 1


def test_product_mps_rejects_bad_vector():
    with pytest.raises(DimensionError):
        product_mps(SPECS, [np.ones(2), np.ones(2), np.ones(2)])


def test_canonicalize_preserves_vector_and_sets_isometries():
    psi = random_state(0)
    dense = to_dense(psi)
    for center in range(psi.n_sites):
        c = canonicalize(psi, center)
        assert c.center == center
        np.testing.assert_allclose(to_dense(c), dense, atol=1e-12)
        for i in range(center):
            a = c.site_array(i)
            mat = a.reshape(-1, a.shape[2])
            np.testing.assert_allclose(mat.conj().T @ mat, np.eye(a.shape[2]), atol=1e-12)
        for i in range(center + 1, c.n_sites):
            a = c.site_array(i)
            mat = a.reshape(a.shape[0], -1)
            np.testing.assert_allclose(mat @ mat.conj().T, np.eye(a.shape[0]), atol=1e-12)


def test_canonicalize_rejects_bad_center():
    psi = random_state(1)
    with pytest.raises(DimensionError):
        canonicalize(psi, 3)


def test_overlap_matches_dense():
    psi = random_state(2)
    phi = random_state(3)
    ref = np.vdot(to_dense(psi), to_dense(phi))
    np.testing.assert_allclose(overlap(psi, phi), ref, atol=1e-12)


def test_norm_with_and_without_center():
    psi = random_state(4)
    dense_nrm = np.linalg.norm(to_dense(psi))
    assert abs(mps_norm(psi) - dense_nrm) < 1e-12
    c = canonicalize(psi, 1)
    assert abs(mps_norm(c) - dense_nrm) < 1e-12


def test_normalized_unit_norm_same_ray():
    rng = np.random.default_rng(5)
    sites = []
    bonds = [1, 3, 2, 1]
    for i, spec in enumerate(SPECS):
        shape = (bonds[i], spec.phys_dim, bonds[i + 1])
        sites.append(DenseTensor(
            rng.standard_normal(shape) + 1j * rng.standard_normal(shape),
            ("left", "phys", "right")))
    psi = MPSState(tuple(sites), SPECS, None)
    out = normalized(psi)
    assert abs(mps_norm(out) - 1.0) < 1e-12
    v0, v1 = to_dense(psi), to_dense(out)
    np.testing.assert_allclose(v0 / np.linalg.norm(v0), v1, atol=1e-12)


def test_normalize_zero_state_raises():
    psi = basis_product_mps(SPECS, [0, 0, 0])
    dead = apply_local(psi, 0, annihilation(3))  # a|0> = 0
    with pytest.raises(ZeroDivisionError):
        normalized(dead)


def test_apply_local_matches_dense_operator():
    psi = random_state(6)
    dims = [s.phys_dim for s in SPECS]
    for site, op in ((0, annihilation(3)), (1, PAULI["y"]), (2, PAULI["x"])):
        out = apply_local(psi, site, op)
        ref = dense_site_op(op, dims, site) @ to_dense(psi)
        np.testing.assert_allclose(to_dense(out), ref, atol=1e-12)


def test_apply_local_shape_check():
    psi = random_state(7)
    with pytest.raises(DimensionError):
        apply_local(psi, 1, np.eye(3))


def test_compress_product_state_lossless():
    psi = basis_product_mps(SPECS, [1, 0, 1])
    out, discarded = compress(psi, TruncationSpec(max_rank=1))
    assert discarded < 1e-28
    np.testing.assert_allclose(to_dense(out), to_dense(psi), atol=1e-14)
    assert out.center == 0


def test_compress_ghz_to_rank_one_discards_half():
    """Rank-1 truncation of a GHZ pair drops exactly half the weight."""
    specs = tuple(SiteSpec("spin", 2) for _ in range(4))
    up = basis_product_mps(specs, [0, 0, 0, 0])
    down = basis_product_mps(specs, [1, 1, 1, 1])
    ghz = mps_sum([(1 / np.sqrt(2), up), (1 / np.sqrt(2), down)])
    out, discarded = compress(ghz, TruncationSpec(max_rank=1))
    np.testing.assert_allclose(discarded, 0.5, atol=1e-12)
    # not renormalized: the surviving branch keeps its amplitude
    np.testing.assert_allclose(mps_norm(out), np.sqrt(0.5), atol=1e-12)
    assert max(out.bond_dims()) == 1


def test_compress_rel_tol_keeps_vector():
    psi = random_state(8, max_rank=4)
    out, discarded = compress(psi, TruncationSpec(rel_tol=1e-14))
    np.testing.assert_allclose(to_dense(out), to_dense(psi), atol=1e-11)
    assert discarded < 1e-20


def test_mps_sum_matches_dense_sum():
    psi = random_state(9)
    phi = random_state(10)
    c1, c2 = 0.7 - 0.2j, -1.1 + 0.4j
    out = mps_sum([(c1, psi), (c2, phi)])
    ref = c1 * to_dense(psi) + c2 * to_dense(phi)
    np.testing.assert_allclose(to_dense(out), ref, atol=1e-12)
    assert out.bond_dims() == [a + b for a, b in zip(psi.bond_dims(), phi.bond_dims())]


def test_mps_sum_single_site_chain():
    specs = (SiteSpec("oscillator", 4),)
    a = product_mps(specs, [np.array([1.0, 0, 0, 0])])
    b = product_mps(specs, [np.array([0, 1.0, 0, 0])])
    out = mps_sum([(2.0, a), (3.0j, b)])
    np.testing.assert_allclose(to_dense(out), [2.0, 3.0j, 0, 0], atol=1e-15)


def test_mps_sum_validates():
    with pytest.raises(ValueError):
        mps_sum([])
    specs2 = (SiteSpec("spin", 2), SiteSpec("spin", 2), SiteSpec("spin", 2))
    with pytest.raises(DimensionError):
        mps_sum([(1.0, random_state(11)), (1.0, random_state(12, specs=specs2))])


def test_from_dense_round_trip():
    rng = np.random.default_rng(13)
    dim = 3 * 2 * 2
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    psi = from_dense(vec, SPECS, TruncationSpec())
    np.testing.assert_allclose(to_dense(psi), vec, atol=1e-12)
    with pytest.raises(DimensionError):
        from_dense(vec[:-1], SPECS, TruncationSpec())


def test_random_mps_normalized_and_capped():
    psi = random_state(14, max_rank=3)
    assert abs(mps_norm(psi) - 1.0) < 1e-12
    assert all(b <= 3 for b in psi.bond_dims())
    # capacity caps: the first bond of a spin chain cannot exceed 2
    specs = tuple(SiteSpec("spin", 2) for _ in range(4))
    small = random_mps(specs, 16, np.random.default_rng(15))
    assert small.bond_dims()[0] == 2


def test_checkpoint_round_trip(tmp_path):
    psi = canonicalize(random_state(16), 1)
    params = ModelParams(omega=1.0, h=0.3, J=0.2, g=0.4, L=2, n_max=2)
    path = tmp_path / "state.npz"
    save_checkpoint(path, psi, params)
    loaded, loaded_params = load_checkpoint(path)
    assert loaded.center == 1
    assert loaded.site_specs == psi.site_specs
    assert loaded_params == params
    for a, b in zip(psi.sites, loaded.sites):
        np.testing.assert_array_equal(a.data, b.data)


def test_checkpoint_without_params(tmp_path):
    psi = random_state(17)
    path = tmp_path / "bare.npz"
    save_checkpoint(path, psi)
    loaded, params = load_checkpoint(path)
    assert params is None
    assert loaded.center == psi.center
    np.testing.assert_allclose(to_dense(loaded), to_dense(psi), atol=0)


def test_state_validation():
    good = random_state(18)
    with pytest.raises(DimensionError):
        MPSState(good.sites[:2], SPECS, None)
    bad_sites = list(good.sites)
    bad_sites[1] = DenseTensor(np.zeros((1, 3, 1)), ("left", "phys", "right"))
    with pytest.raises(DimensionError):
        MPSState(tuple(bad_sites), SPECS, None)

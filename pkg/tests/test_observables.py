"""Observable extraction: oscillator statistics, entropies, correlators."""

import math

import numpy as np
import pytest

from dickeising.ed import dense_state_observables, ed_spectrum, free_fermion_ising, reduced_density
from dickeising.model import ModelParams, SiteSpec, coherent_state
from dickeising.mps import apply_local, basis_product_mps, canonicalize, from_dense, product_mps, random_mps, to_dense
from dickeising.observables import (
    CorrelationProfile,
    bond_entropy,
    fit_decay_length,
    oscillator_density_matrix,
    oscillator_entropy,
    oscillator_position,
    parity_expectation,
    photon_number_expectation,
    photon_statistics,
    quadrature_mean,
    sigma_y_correlations,
    sigma_y_matrix,
    site_density_matrix,
    spin_profile,
    top_fock_weight,
    von_neumann_entropy,
)
from dickeising.tensor import DimensionError, TruncationSpec


def coherent_chain(alpha, n_max=25, L=2, spin_occ=0):
    p = ModelParams(omega=1.0, h=0.3, J=0.2, g=0.0, L=L, n_max=n_max)
    specs = p.site_specs(0)
    vecs = [coherent_state(alpha, p.osc_dim)]
    for _ in range(L):
        v = np.zeros(2)
        v[spin_occ] = 1.0
        vecs.append(v)
    return product_mps(specs, vecs)


def test_oscillator_position_lookup():
    p = ModelParams(omega=1.0, h=0.3, J=0.2, g=0.4, L=3, n_max=2)
    for osc in (0, 1, 3):
        psi = basis_product_mps(p.site_specs(osc), [0, 0, 0, 0])
        assert oscillator_position(psi) == osc
    spins_only = tuple(SiteSpec("spin", 2) for _ in range(3))
    with pytest.raises(DimensionError):
        oscillator_position(basis_product_mps(spins_only, [0, 0, 0]))


def test_photon_statistics_coherent():
    alpha = 1.5
    psi = coherent_chain(alpha)
    mean, var = photon_statistics(psi)
    np.testing.assert_allclose(mean, alpha**2, atol=1e-9)
    np.testing.assert_allclose(var, alpha**2, atol=1e-8)
    np.testing.assert_allclose(photon_number_expectation(psi), mean, atol=1e-12)


def test_quadrature_scaling_and_phase():
    alpha = 0.8 + 0.6j
    psi = coherent_chain(alpha)
    np.testing.assert_allclose(quadrature_mean(psi), np.sqrt(2) * alpha.real,
                               atol=1e-9)


def test_top_fock_weight_coherent():
    alpha = 0.9
    psi = coherent_chain(alpha, n_max=10)
    ref = np.exp(-alpha**2) * alpha**20 / math.factorial(10)
    np.testing.assert_allclose(top_fock_weight(psi), ref, rtol=1e-3)


def test_von_neumann_entropy_conventions():
    assert von_neumann_entropy(np.array([0.5, 0.5])) == pytest.approx(1.0)
    assert von_neumann_entropy(np.diag([0.25] * 4)) == pytest.approx(2.0)
    assert von_neumann_entropy(np.array([1.0, 0.0])) == 0.0
    # floor: tiny negative eigenvalues from roundoff must not produce NaN
    rho = np.diag([1.0, -1e-16, 1e-16])
    val = von_neumann_entropy(rho)
    assert np.isfinite(val) and abs(val) < 1e-12
    # unnormalized weights are renormalized
    assert von_neumann_entropy(np.array([2.0, 2.0])) == pytest.approx(1.0)


def test_site_density_matrix_properties_and_dense_match():
    p = ModelParams(omega=1.0, h=0.3, J=0.2, g=0.4, L=3, n_max=3)
    specs = p.site_specs(0)
    psi = random_mps(specs, 4, np.random.default_rng(0))
    dims = [s.phys_dim for s in specs]
    vec = to_dense(psi)
    for site in range(4):
        rho = site_density_matrix(psi, site)
        np.testing.assert_allclose(np.trace(rho), 1.0, atol=1e-12)
        np.testing.assert_allclose(rho, rho.conj().T, atol=1e-12)
        assert np.min(np.linalg.eigvalsh(rho)) > -1e-12
        np.testing.assert_allclose(rho, reduced_density(vec, dims, site), atol=1e-10)


def test_density_matrix_gauge_invariance():
    p = ModelParams(omega=1.0, h=0.3, J=0.2, g=0.4, L=3, n_max=2)
    psi = random_mps(p.site_specs(0), 4, np.random.default_rng(1))
    ref = oscillator_density_matrix(psi)
    for center in range(psi.n_sites):
        moved = canonicalize(psi, center)
        np.testing.assert_allclose(oscillator_density_matrix(moved), ref, atol=1e-12)


def test_oscillator_entropy_equals_bond_entropy_at_cut():
    """With the oscillator at the chain head, its entropy is the first-bond
    entanglement entropy (same Schmidt spectrum)."""
    p = ModelParams(omega=1.0, h=0.3, J=0.2, g=0.4, L=3, n_max=3)
    psi = random_mps(p.site_specs(0), 4, np.random.default_rng(2))
    np.testing.assert_allclose(oscillator_entropy(psi), bond_entropy(psi, 0),
                               atol=1e-10)


def test_entropy_of_product_state_is_zero():
    psi = coherent_chain(1.1)
    assert oscillator_entropy(psi) < 1e-12


def test_spin_profile_basis_states():
    p = ModelParams(omega=1.0, h=0.3, J=0.2, g=0.4, L=3, n_max=2)
    psi = basis_product_mps(p.site_specs(0), [0, 0, 1, 0])
    np.testing.assert_allclose(spin_profile(psi, "z"), [1.0, -1.0, 1.0], atol=1e-13)
    np.testing.assert_allclose(spin_profile(psi, "x"), [0.0, 0.0, 0.0], atol=1e-13)
    # oscillator in the middle: spin order must stay 1-based along the chain
    psi_mid = basis_product_mps(p.site_specs(2), [1, 0, 0, 0])
    np.testing.assert_allclose(spin_profile(psi_mid, "z"), [-1.0, 1.0, 1.0],
                               atol=1e-13)


def test_spin_profile_matches_dense():
    p = ModelParams(omega=1.0, h=0.3, J=0.2, g=0.4, L=3, n_max=2)
    spec = ed_spectrum(p, k=1)
    psi = from_dense(spec.states[:, 0], p.site_specs(0), TruncationSpec())
    obs = dense_state_observables(spec.states[:, 0], p)
    np.testing.assert_allclose(spin_profile(psi, "z"), obs["sz_profile"], atol=1e-10)


def test_parity_expectation_signs_and_scale_invariance():
    p = ModelParams(omega=1.0, h=0.3, J=0.2, g=0.4, L=2, n_max=2)
    specs = p.site_specs(0)
    assert parity_expectation(basis_product_mps(specs, [0, 0, 0])) == pytest.approx(1.0)
    assert parity_expectation(basis_product_mps(specs, [1, 0, 0])) == pytest.approx(-1.0)
    assert parity_expectation(basis_product_mps(specs, [2, 1, 0])) == pytest.approx(-1.0)
    psi = random_mps(specs, 3, np.random.default_rng(3))
    scaled = psi.replace_site(0, 3.0 * psi.site_array(0))
    np.testing.assert_allclose(parity_expectation(scaled), parity_expectation(psi),
                               atol=1e-12)


def test_parity_eigenstate_has_zero_quadrature():
    """A sharp joint-parity state cannot support a field displacement."""
    p = ModelParams(omega=1.0, h=0.4, J=0.2, g=0.5, L=2, n_max=6)
    spec = ed_spectrum(p, k=1)
    psi = from_dense(spec.states[:, 0], p.site_specs(0), TruncationSpec())
    assert abs(spec.parities[0]) > 1.0 - 1e-10
    assert abs(quadrature_mean(psi)) < 1e-10


def test_sigma_y_matrix_matches_dense():
    p = ModelParams(omega=1.0, h=0.3, J=0.25, g=0.4, L=4, n_max=2)
    specs = p.site_specs(0)
    psi = random_mps(specs, 4, np.random.default_rng(4))
    vec = to_dense(psi)
    from dickeising.ed import site_operator
    from dickeising.model import PAULI
    got = sigma_y_matrix(psi)
    assert got.shape == (4, 4)
    np.testing.assert_allclose(np.diag(got), 1.0, atol=0)
    for i in range(4):
        for j in range(i + 1, 4):
            op = (site_operator(specs, i + 1, PAULI["y"])
                  @ site_operator(specs, j + 1, PAULI["y"]))
            ref = float((vec.conj() @ op @ vec).real / (vec.conj() @ vec).real)
            np.testing.assert_allclose(got[i, j], ref, atol=1e-10)
            assert got[j, i] == got[i, j]


def test_fit_decay_length_recovers_exponential():
    r = np.arange(2, 9, dtype=float)
    xi, slope, stderr, no_decay = fit_decay_length(r, np.exp(-r / 3.0))
    assert not no_decay
    np.testing.assert_allclose(xi, 3.0, rtol=1e-10)
    np.testing.assert_allclose(slope, -1.0 / 3.0, rtol=1e-10)
    assert stderr < 1e-10


def test_fit_decay_length_handles_signs_and_noise():
    r = np.arange(2, 12, dtype=float)
    staggered = ((-1.0) ** r) * np.exp(-r / 2.0)
    xi, _, _, no_decay = fit_decay_length(r, staggered)
    assert not no_decay
    np.testing.assert_allclose(xi, 2.0, rtol=1e-10)
    rng = np.random.default_rng(5)
    noisy = np.exp(-r / 2.0) * np.exp(0.01 * rng.standard_normal(len(r)))
    xi_n, _, stderr_n, _ = fit_decay_length(r, noisy)
    assert abs(xi_n - 2.0) < 0.1
    assert stderr_n > 0.0


def test_fit_decay_length_flags_no_decay():
    r = np.arange(2, 8, dtype=float)
    xi, slope, _, no_decay = fit_decay_length(r, np.full(len(r), 0.7))
    assert no_decay and np.isinf(xi)
    # growing correlations flag as well
    xi2, _, _, flag2 = fit_decay_length(r, np.exp(+r / 10.0))
    assert flag2 and np.isinf(xi2)
    with pytest.raises(ValueError):
        fit_decay_length(np.array([2.0]), np.array([0.5]))


def test_sigma_y_correlations_window_and_short_chain():
    p_short = ModelParams(omega=1.0, h=0.3, J=0.2, g=0.3, L=3, n_max=1)
    psi_short = random_mps(p_short.site_specs(0), 2, np.random.default_rng(6))
    with pytest.raises(ValueError):
        sigma_y_correlations(psi_short)
    p = ModelParams(omega=1.0, h=0.6, J=0.2, g=0.0, L=8, n_max=1)
    spec = ed_spectrum(p, k=1)
    psi = from_dense(spec.states[:, 0], p.site_specs(0), TruncationSpec())
    prof = sigma_y_correlations(psi)
    assert isinstance(prof, CorrelationProfile)
    assert prof.window == (2, 4)
    assert np.all(prof.distances >= 2) and np.all(prof.distances <= 4)
    d = prof.as_dict()
    assert d["window"] == [2, 4] and len(d["values"]) == len(prof.distances)


def test_correlations_match_free_fermion_oracle():
    """g = 0 ground state: MPS correlators vs the closed-form determinants."""
    L, h, J = 8, 0.6, 0.4
    p = ModelParams(omega=1.0, h=h, J=J, g=0.0, L=L, n_max=1)
    spec = ed_spectrum(p, k=1)
    psi = from_dense(spec.states[:, 0], p.site_specs(0), TruncationSpec())
    ff = free_fermion_ising(L, h, J)
    np.testing.assert_allclose(sigma_y_matrix(psi), ff.syy_matrix(), atol=1e-8)
    prof = sigma_y_correlations(psi)
    assert not prof.no_decay
    assert prof.xi > 0.0

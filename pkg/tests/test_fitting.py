"""Variational fitting of MPS linear combinations."""

import numpy as np
import pytest

from dickeising.fitting import (
    FitTerm,
    fit_apply,
    target_norm_sq,
    variational_fit,
    zipup_guess,
)
from dickeising.model import ModelParams
from dickeising.mpo import build_dicke_ising_mpo, mpo_dense, single_site_mpo
from dickeising.mps import mps_norm, random_mps, to_dense
from dickeising.tensor import DimensionError, TruncationSpec

PARAMS = ModelParams(omega=1.0, h=0.3, J=0.2, g=0.4, L=3, n_max=3)
SPECS = tuple(PARAMS.site_specs(0))
FULL = TruncationSpec()


def test_identity_fit_copies_state():
    psi = random_mps(SPECS, 4, np.random.default_rng(0))
    fit = variational_fit([FitTerm(1.0, None, psi)], FULL)
    assert fit.converged and not fit.zero_target
    assert fit.residual < 1e-10
    np.testing.assert_allclose(to_dense(fit.state), to_dense(psi), atol=1e-10)


def test_target_norm_matches_dense():
    rng = np.random.default_rng(1)
    psi = random_mps(SPECS, 4, rng)
    phi = random_mps(SPECS, 4, rng)
    h = build_dicke_ising_mpo(PARAMS)
    terms = [FitTerm(0.8, h, psi), FitTerm(-0.3j, None, phi)]
    ref = 0.8 * mpo_dense(h) @ to_dense(psi) - 0.3j * to_dense(phi)
    np.testing.assert_allclose(target_norm_sq(terms), np.linalg.norm(ref) ** 2,
                               rtol=1e-10)


def test_fit_apply_matches_dense_action():
    psi = random_mps(SPECS, 4, np.random.default_rng(2))
    h = build_dicke_ising_mpo(PARAMS)
    fit = fit_apply(h, psi, FULL, max_sweeps=8, rtol=1e-13)
    ref = mpo_dense(h) @ to_dense(psi)
    got = to_dense(fit.state)
    fid = abs(np.vdot(got, ref)) / (np.linalg.norm(got) * np.linalg.norm(ref))
    assert fid >= 1.0 - 1e-10
    np.testing.assert_allclose(fit.target_norm, np.linalg.norm(ref), rtol=1e-10)
    np.testing.assert_allclose(got, ref, atol=1e-8)


def test_fit_linear_combination():
    rng = np.random.default_rng(3)
    psi = random_mps(SPECS, 3, rng)
    phi = random_mps(SPECS, 3, rng)
    h = build_dicke_ising_mpo(PARAMS)
    terms = [FitTerm(1.0, h, psi), FitTerm(0.5 + 0.1j, None, phi)]
    fit = variational_fit(terms, FULL, max_sweeps=8, rtol=1e-13)
    ref = mpo_dense(h) @ to_dense(psi) + (0.5 + 0.1j) * to_dense(phi)
    np.testing.assert_allclose(to_dense(fit.state), ref, atol=1e-8)
    np.testing.assert_allclose(fit.residual, 0.0, atol=1e-8)


def test_cancellation_sets_zero_flag():
    """psi - psi fits to the zero vector and flags it."""
    psi = random_mps(SPECS, 3, np.random.default_rng(4))
    fit = variational_fit([FitTerm(1.0, None, psi), FitTerm(-1.0, None, psi)], FULL)
    assert fit.zero_target
    assert fit.residual == 0.0
    assert fit.target_norm < 1e-13
    assert mps_norm(fit.state) == 0.0


def test_truncated_fit_residual_reasonable():
    """Bond-limited fit: residual is a genuine distance, and tighter budgets hurt."""
    rng = np.random.default_rng(5)
    psi = random_mps(SPECS, 4, rng)
    h = build_dicke_ising_mpo(PARAMS)
    ref = mpo_dense(h) @ to_dense(psi)
    res = {}
    for rank in (2, 8):
        fit = fit_apply(h, psi, TruncationSpec(max_rank=rank), max_sweeps=10,
                        rtol=1e-14)
        true_err = np.linalg.norm(to_dense(fit.state) - ref)
        # the subtraction formula floors at sqrt(eps) * target_norm
        assert abs(fit.residual - true_err) < 1e-6 * max(1.0, fit.target_norm)
        res[rank] = fit.residual
    assert res[8] <= res[2] + 1e-6


def test_more_sweeps_never_worse():
    rng = np.random.default_rng(6)
    psi = random_mps(SPECS, 4, rng)
    guess = random_mps(SPECS, 2, np.random.default_rng(7))
    h = build_dicke_ising_mpo(PARAMS)
    trunc = TruncationSpec(max_rank=2)
    r1 = variational_fit([FitTerm(1.0, h, psi)], trunc, guess=guess,
                         max_sweeps=1, rtol=0.0).residual
    r4 = variational_fit([FitTerm(1.0, h, psi)], trunc, guess=guess,
                         max_sweeps=4, rtol=0.0).residual
    assert r4 <= r1 + 1e-12


def test_zipup_guess_close_to_target():
    psi = random_mps(SPECS, 3, np.random.default_rng(8))
    h = build_dicke_ising_mpo(PARAMS)
    guess = zipup_guess([FitTerm(1.0, h, psi)], FULL)
    ref = mpo_dense(h) @ to_dense(psi)
    np.testing.assert_allclose(to_dense(guess), ref, atol=1e-10)


def test_fit_validates_terms():
    with pytest.raises(ValueError):
        variational_fit([], FULL)
    psi = random_mps(SPECS, 2, np.random.default_rng(9))
    other = ModelParams(omega=1.0, h=0.3, J=0.2, g=0.4, L=2, n_max=3)
    chi = random_mps(other.site_specs(0), 2, np.random.default_rng(10))
    with pytest.raises(DimensionError):
        variational_fit([FitTerm(1.0, None, psi), FitTerm(1.0, None, chi)], FULL)


def test_fit_accepts_plain_tuples():
    psi = random_mps(SPECS, 2, np.random.default_rng(11))
    op = single_site_mpo(SPECS, 1, np.array([[0.0, 1.0], [1.0, 0.0]]))
    fit = variational_fit([(2.0, op, psi)], FULL)
    ref = 2.0 * (mpo_dense(op) @ to_dense(psi))
    np.testing.assert_allclose(to_dense(fit.state), ref, atol=1e-9)

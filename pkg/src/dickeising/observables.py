"""Measurements on MPS: oscillator statistics, entropies, spin profiles,
two-point correlations, and the correlation-length fit.

Entropies are reported in bits (log base 2). All expectation values divide
by the state norm, so callers may pass unnormalized states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PAULI, annihilation, number_op
from .mpo import build_parity_mpo, mpo_expectation
from .mps import MPSState, canonicalize, overlap
from .tensor import DenseTensor, DimensionError, TruncationSpec, svd_truncate

EIGENVALUE_FLOOR = 1e-14


def oscillator_position(psi: MPSState) -> int:
    hits = [i for i, s in enumerate(psi.site_specs) if s.kind == "oscillator"]
    if len(hits) != 1:
        raise DimensionError(f"expected exactly one oscillator site, found {len(hits)}")
    return hits[0]


def _plain_left_envs(psi: MPSState) -> list[np.ndarray]:
    envs = [np.ones((1, 1), dtype=np.complex128)]
    for i in range(psi.n_sites):
        a = psi.site_array(i)
        t = np.tensordot(envs[-1], np.conj(a), axes=((0,), (0,)))  # (k, p, b')
        envs.append(np.tensordot(t, a, axes=((0, 1), (0, 1))))     # (b', k')
    return envs


def _plain_right_envs(psi: MPSState) -> list[np.ndarray]:
    envs = [None] * psi.n_sites + [np.ones((1, 1), dtype=np.complex128)]
    for i in range(psi.n_sites - 1, -1, -1):
        a = psi.site_array(i)
        t = np.tensordot(np.conj(a), envs[i + 1], axes=((2,), (0,)))  # (b, p, k)
        envs[i] = np.tensordot(t, a, axes=((1, 2), (1, 2)))           # (b, k)
    return envs


def _close(lenv, site_bra_op, psi, i, renv) -> complex:
    a = psi.site_array(i)
    aop = np.einsum("xy,lyr->lxr", site_bra_op, a)
    t = np.tensordot(lenv, np.conj(a), axes=((0,), (0,)))   # (k, p, b')
    t = np.tensordot(t, aop, axes=((0, 1), (0, 1)))          # (b', k')
    return complex(np.tensordot(t, renv, axes=((0, 1), (0, 1))))


def _push_with_op(lenv, op, psi, i) -> np.ndarray:
    a = psi.site_array(i)
    aop = np.einsum("xy,lyr->lxr", op, a)
    t = np.tensordot(lenv, np.conj(a), axes=((0,), (0,)))
    return np.tensordot(t, aop, axes=((0, 1), (0, 1)))


def site_density_matrix(psi: MPSState, site: int) -> np.ndarray:
    """Reduced density matrix of one chain site, normalized to unit trace."""
    psi = canonicalize(psi, site)
    a = psi.site_array(site)
    rho = np.einsum("lpr,lqr->pq", a, np.conj(a))
    tr = np.trace(rho).real
    if tr <= 0.0:
        raise ZeroDivisionError("zero-norm state has no density matrix")
    return rho / tr


def oscillator_density_matrix(psi: MPSState) -> np.ndarray:
    return site_density_matrix(psi, oscillator_position(psi))


def photon_statistics(psi: MPSState) -> tuple[float, float]:
    """(mean, variance) of the oscillator occupation a'a."""
    rho = oscillator_density_matrix(psi)
    nvals = np.arange(rho.shape[0])
    pops = np.diag(rho).real
    mean = float(pops @ nvals)
    second = float(pops @ nvals**2)
    return mean, second - mean**2


def top_fock_weight(psi: MPSState) -> float:
    """Population of the highest retained Fock level (cutoff-health check)."""
    rho = oscillator_density_matrix(psi)
    return float(np.diag(rho).real[-1])


def quadrature_mean(psi: MPSState) -> float:
    """<q> with q = (a + a')/sqrt(2)."""
    rho = oscillator_density_matrix(psi)
    d = rho.shape[0]
    a = annihilation(d)
    q = (a + a.conj().T) / np.sqrt(2.0)
    return float(np.trace(rho @ q).real)


def von_neumann_entropy(rho_or_weights: np.ndarray) -> float:
    """Entropy in bits; eigenvalues below 1e-14 are treated as exact zeros."""
    arr = np.asarray(rho_or_weights)
    if arr.ndim == 2:
        p = np.linalg.eigvalsh(arr).real
    else:
        p = arr.real
    p = p[p > EIGENVALUE_FLOOR]
    if p.size == 0:
        return 0.0
    p = p / p.sum()
    return float(-(p * np.log2(p)).sum())


def oscillator_entropy(psi: MPSState) -> float:
    return von_neumann_entropy(oscillator_density_matrix(psi))


def bond_entropy(psi: MPSState, bond: int) -> float:
    """Entanglement entropy across the bond between sites `bond` and bond+1."""
    psi = canonicalize(psi, bond)
    no_trunc = TruncationSpec()
    _, s, _, _ = svd_truncate(psi.sites[bond], ("left", "phys"), no_trunc)
    w = s**2
    return von_neumann_entropy(w / w.sum())


def parity_expectation(psi: MPSState) -> float:
    """<P> with P = (-1)^(a'a) tensor sz^L; real for any state."""
    op = build_parity_mpo(psi.site_specs)
    nrm2 = overlap(psi, psi).real
    return float(mpo_expectation(psi, op).real / nrm2)


def spin_profile(psi: MPSState, pauli: str) -> np.ndarray:
    """<sigma_pauli> on every spin, ordered by 1-based spin index."""
    op = PAULI[pauli]
    m = oscillator_position(psi)
    lenvs = _plain_left_envs(psi)
    renvs = _plain_right_envs(psi)
    nrm2 = lenvs[-1][0, 0].real
    vals = []
    for pos in range(psi.n_sites):
        if pos == m:
            continue
        vals.append(_close(lenvs[pos], op, psi, pos, renvs[pos + 1]).real / nrm2)
    return np.array(vals)


def photon_number_expectation(psi: MPSState) -> float:
    rho = oscillator_density_matrix(psi)
    return float(np.trace(rho @ number_op(rho.shape[0])).real)


def sigma_y_matrix(psi: MPSState) -> np.ndarray:
    """Symmetric L x L matrix of <sy_i sy_j>; the diagonal is identically 1."""
    m = oscillator_position(psi)
    spin_pos = [p for p in range(psi.n_sites) if p != m]
    L = len(spin_pos)
    sy = PAULI["y"]
    lenvs = _plain_left_envs(psi)
    renvs = _plain_right_envs(psi)
    nrm2 = lenvs[-1][0, 0].real
    out = np.eye(L)
    for ii, pi in enumerate(spin_pos):
        env = _push_with_op(lenvs[pi], sy, psi, pi)
        for pos in range(pi + 1, psi.n_sites):
            if pos in spin_pos:
                jj = spin_pos.index(pos)
                out[ii, jj] = _close(env, sy, psi, pos, renvs[pos + 1]).real / nrm2
                out[jj, ii] = out[ii, jj]
            a = psi.site_array(pos)
            t = np.tensordot(env, np.conj(a), axes=((0,), (0,)))
            env = np.tensordot(t, a, axes=((0, 1), (0, 1)))
    return out


@dataclass(frozen=True)
class CorrelationProfile:
    """Distance-averaged connected sy correlations and the decay-length fit."""
    distances: np.ndarray      # integer separations entering the fit window
    values: np.ndarray         # bulk-averaged connected correlator per distance
    xi: float                  # fitted decay length; inf when flagged no-decay
    slope: float               # d log|C| / dr from the least-squares fit
    slope_stderr: float
    no_decay: bool
    window: tuple[int, int]

    def as_dict(self) -> dict:
        return {
            "distances": self.distances.tolist(),
            "values": self.values.tolist(),
            "xi": self.xi, "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "no_decay": self.no_decay, "window": list(self.window),
        }


NO_DECAY_SLOPE = -1e-6


def fit_decay_length(distances: np.ndarray,
                     values: np.ndarray) -> tuple[float, float, float, bool]:
    """Log-linear fit |C(r)| ~ exp(-r/xi) over a distance series.

    Returns (xi, slope, slope_stderr, no_decay); a fitted slope above
    -1e-6 raises the no-decay flag and reports an infinite length instead
    of a gigantic one.
    """
    distances = np.asarray(distances, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(distances) < 2:
        raise ValueError("need at least two separations for the decay fit")
    logs = np.log(np.maximum(np.abs(values), 1e-300))
    A = np.vstack([distances, np.ones_like(distances)]).T
    coef, res, _, _ = np.linalg.lstsq(A, logs, rcond=None)
    slope = float(coef[0])
    dof = len(distances) - 2
    if dof > 0 and res.size:
        sigma2 = float(res[0]) / dof
        cov = sigma2 * np.linalg.inv(A.T @ A)
        stderr = float(np.sqrt(cov[0, 0]))
    else:
        stderr = 0.0
    no_decay = slope >= NO_DECAY_SLOPE
    xi = float(np.inf) if no_decay else -1.0 / slope
    return xi, slope, stderr, no_decay


def sigma_y_correlations(psi: MPSState) -> CorrelationProfile:
    """Connected correlator C(i,j) = <sy_i sy_j> - <sy_i><sy_j>, averaged over
    bulk pairs at fixed separation, with a log-linear decay-length fit.

    The fit window is r in [2, L/2]; pairs using spins within L/8 of either
    chain end are excluded.
    """
    raw = sigma_y_matrix(psi)
    prof = spin_profile(psi, "y")
    L = raw.shape[0]
    connected = raw - np.outer(prof, prof)
    edge = L / 8.0
    rmin, rmax = 2, L // 2
    if rmax < rmin:
        raise ValueError(f"chain of {L} spins is too short for the fit window")
    dists, means = [], []
    for r in range(rmin, rmax + 1):
        vals = []
        for i in range(L - r):
            # spins are 1-based: positions i and i+r map to spins i+1, i+r+1
            if i >= edge and (L - 1 - (i + r)) >= edge:
                vals.append(connected[i, i + r])
        if vals:
            dists.append(r)
            means.append(np.mean(vals))
    if len(dists) < 2:
        raise ValueError("fewer than two usable separations in the fit window")
    dists = np.array(dists)
    means = np.array(means)
    xi, slope, stderr, no_decay = fit_decay_length(dists, means)
    return CorrelationProfile(dists, means, xi, slope, stderr,
                              no_decay, (rmin, rmax))

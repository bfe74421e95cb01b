"""Dense exact-diagonalization twin of the tensor-network engine.

Everything here works on full state vectors and matrices built by Kronecker
products in the same site order as the MPS chain, so results are directly
comparable. Also hosts the closed-form free-fermion solution of the g = 0
spin sector and a dense Lindblad integrator, the two independent anchors the
stochastic and variational routes are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg

from .dynamics import (TrajectoryRecord, homodyne_increment,
                       measurement_operator)
from .model import PAULI, ModelParams, annihilation, fock_parity, number_op
from .observables import von_neumann_entropy

DEGENERACY_TOL = 1e-10


def site_operator(site_specs, site: int, op: np.ndarray) -> np.ndarray:
    """Lift a single-site operator to the full chain by Kronecker products."""
    out = np.array([[1.0 + 0.0j]])
    for i, s in enumerate(site_specs):
        block = op if i == site else np.eye(s.phys_dim)
        out = np.kron(out, block)
    return out


def dense_hamiltonian(params: ModelParams, osc_site: int = 0) -> np.ndarray:
    specs = params.site_specs(osc_site)
    d = params.osc_dim
    a = annihilation(d)
    quad = a + a.conj().T
    spin_pos = [p for p in range(len(specs)) if p != osc_site]
    h_mat = params.omega * site_operator(specs, osc_site, number_op(d))
    for p in spin_pos:
        h_mat -= params.h * site_operator(specs, p, PAULI["z"])
    for p1, p2 in zip(spin_pos[:-1], spin_pos[1:]):
        h_mat -= params.J * (site_operator(specs, p1, PAULI["y"])
                             @ site_operator(specs, p2, PAULI["y"]))
    quad_full = site_operator(specs, osc_site, quad)
    coupling = sum(site_operator(specs, p, PAULI["x"]) for p in spin_pos)
    h_mat += (params.g / np.sqrt(params.L)) * quad_full @ coupling
    return h_mat


def dense_parity(params: ModelParams, osc_site: int = 0) -> np.ndarray:
    specs = params.site_specs(osc_site)
    out = site_operator(specs, osc_site, fock_parity(params.osc_dim))
    for p in range(len(specs)):
        if p != osc_site:
            out = out @ site_operator(specs, p, PAULI["z"])
    return out


def reduced_density(vec: np.ndarray, dims, site: int) -> np.ndarray:
    """Single-site reduced density matrix of a pure state, unit trace."""
    vec = np.asarray(vec)
    psi = vec.reshape(dims)
    psi = np.moveaxis(psi, site, 0).reshape(dims[site], -1)
    rho = psi @ psi.conj().T
    return rho / np.trace(rho).real


@dataclass(frozen=True)
class SpectrumResult:
    energies: np.ndarray
    states: np.ndarray      # columns are eigenvectors
    parities: np.ndarray    # <P> per state, +-1 after sector resolution


def ed_spectrum(params: ModelParams, k: int = 4, osc_site: int = 0) -> SpectrumResult:
    """Lowest k eigenpairs, with near-degenerate pairs rotated into states of
    definite joint parity so labels are stable under tie-breaking noise."""
    h_mat = dense_hamiltonian(params, osc_site)
    evals, evecs = np.linalg.eigh(h_mat)
    k = min(k, len(evals))
    evals, evecs = evals[:k], evecs[:, :k]
    p_mat = dense_parity(params, osc_site)
    scale = max(1.0, float(np.max(np.abs(evals))))
    # cluster nearly-equal energies, then diagonalize P inside each cluster
    start = 0
    states = evecs.copy()
    while start < k:
        stop = start + 1
        while stop < k and evals[stop] - evals[stop - 1] < DEGENERACY_TOL * scale:
            stop += 1
        if stop - start > 1:
            block = states[:, start:stop]
            p_block = block.conj().T @ p_mat @ block
            _, rot = np.linalg.eigh(0.5 * (p_block + p_block.conj().T))
            states[:, start:stop] = block @ rot
        start = stop
    parities = np.array([
        (states[:, i].conj() @ p_mat @ states[:, i]).real for i in range(k)])
    return SpectrumResult(evals, states, parities)


def dense_state_observables(vec: np.ndarray, params: ModelParams,
                            osc_site: int = 0) -> dict:
    """Observable bundle used for route-vs-route comparisons."""
    specs = params.site_specs(osc_site)
    dims = [s.phys_dim for s in specs]
    vec = np.asarray(vec, dtype=np.complex128)
    vec = vec / np.linalg.norm(vec)
    rho = reduced_density(vec, dims, osc_site)
    d = rho.shape[0]
    a = annihilation(d)
    q = (a + a.conj().T) / np.sqrt(2.0)
    nvals = np.arange(d)
    pops = np.diag(rho).real
    n_mean = float(pops @ nvals)
    sz_profile = []
    for p in range(len(specs)):
        if p == osc_site:
            continue
        r = reduced_density(vec, dims, p)
        sz_profile.append(float(np.trace(r @ PAULI["z"]).real))
    p_mat = dense_parity(params, osc_site)
    return {
        "n_mean": n_mean,
        "n_var": float(pops @ nvals**2) - n_mean**2,
        "q_mean": float(np.trace(rho @ q).real),
        "entropy": von_neumann_entropy(rho),
        "parity": float((vec.conj() @ p_mat @ vec).real),
        "sz_profile": np.array(sz_profile),
        "top_fock": float(pops[-1]),
    }


def ed_propagate(params: ModelParams, psi0: np.ndarray, times,
                 osc_site: int = 0) -> np.ndarray:
    """exp(-i t H) psi0 on a grid of times, by spectral decomposition."""
    h_mat = dense_hamiltonian(params, osc_site)
    evals, evecs = np.linalg.eigh(h_mat)
    comps = evecs.conj().T @ np.asarray(psi0, dtype=np.complex128)
    out = np.empty((len(times), len(psi0)), dtype=np.complex128)
    for i, t in enumerate(times):
        out[i] = evecs @ (np.exp(-1j * evals * t) * comps)
    return out


def ed_trajectory(params: ModelParams, psi0: np.ndarray, t_final: float,
                  dt: float, kappa: float, *,
                  seed: int | None = None,
                  rng: np.random.Generator | None = None,
                  wiener_increments: np.ndarray | None = None,
                  record_every: int = 1,
                  osc_site: int = 0) -> TrajectoryRecord:
    """Dense split-step homodyne trajectory, twin of the MPS integrator.

    Uses the identical noise draw and measurement kernel, in the identical
    order, so a seed-matched MPS run must reproduce it to solver precision.
    """
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, abs(t_final)):
        raise ValueError("t_final must be an integer number of steps")
    if wiener_increments is None:
        if rng is None:
            rng = np.random.default_rng(seed)
    else:
        wiener_increments = np.asarray(wiener_increments, dtype=float)
        if wiener_increments.shape != (n_steps,):
            raise ValueError(f"need exactly {n_steps} Wiener increments")

    specs = params.site_specs(osc_site)
    dims = [s.phys_dim for s in specs]
    d = params.osc_dim
    h_mat = dense_hamiltonian(params, osc_site)
    evals, evecs = np.linalg.eigh(h_mat)
    phase = np.exp(-1j * evals * dt)
    a = annihilation(d)
    quad_full = site_operator(specs, osc_site, a + a.conj().T)
    p_mat = dense_parity(params, osc_site)

    def observe(vec):
        rho = reduced_density(vec, dims, osc_site)
        pops = np.diag(rho).real
        nvals = np.arange(d)
        q = (a + a.conj().T) / np.sqrt(2.0)
        return (float(np.trace(rho @ q).real), float(pops @ nvals),
                von_neumann_entropy(rho),
                float((vec.conj() @ p_mat @ vec).real))

    psi = np.asarray(psi0, dtype=np.complex128)
    psi = psi / np.linalg.norm(psi)
    rows = [(0.0, 0.0) + observe(psi) + (0.0,)]
    dy_acc = 0.0
    for k in range(n_steps):
        psi = evecs @ (phase * (evecs.conj().T @ psi))
        quad = float((psi.conj() @ quad_full @ psi).real)
        dw = None if wiener_increments is None else float(wiener_increments[k])
        dy = homodyne_increment(quad, dt, kappa, rng, dw)
        dy_acc += dy
        omega_full = site_operator(specs, osc_site,
                                   measurement_operator(d, dt, kappa, dy))
        psi = omega_full @ psi
        nrm = np.linalg.norm(psi)
        drift = float(nrm - 1.0)
        psi = psi / nrm
        if (k + 1) % record_every == 0 or k == n_steps - 1:
            rows.append(((k + 1) * dt, dy_acc) + observe(psi) + (drift,))
            dy_acc = 0.0

    table = np.array(rows, dtype=float)
    return TrajectoryRecord(
        times=table[:, 0], dy=table[:, 1], q_mean=table[:, 2],
        n_mean=table[:, 3], entropy=table[:, 4], parity=table[:, 5],
        norm_drift=table[:, 6], dt=dt, kappa=kappa, seed=seed,
        error_estimate=0.0, max_bond=0, final_state=None)


def ed_lindblad(params: ModelParams, rho0: np.ndarray, t_final: float,
                n_records: int, kappa: float, *, osc_site: int = 0,
                rtol: float = 1e-8, atol: float = 1e-10) -> dict:
    """Unconditional master-equation evolution with collapse operator
    sqrt(kappa) a; returns ensemble-level observables on a record grid."""
    specs = params.site_specs(osc_site)
    dims = [s.phys_dim for s in specs]
    dim = int(np.prod(dims))
    d = params.osc_dim
    h_mat = dense_hamiltonian(params, osc_site)
    a = annihilation(d)
    a_full = site_operator(specs, osc_site, a)
    n_full = site_operator(specs, osc_site, number_op(d))
    p_mat = dense_parity(params, osc_site)
    q_osc = (a + a.conj().T) / np.sqrt(2.0)

    def rhs(_t, y):
        rho = y.reshape(dim, dim)
        comm = h_mat @ rho - rho @ h_mat
        jump = a_full @ rho @ a_full.conj().T
        anti = n_full @ rho + rho @ n_full
        drho = -1j * comm + kappa * (jump - 0.5 * anti)
        return drho.ravel()

    rho0 = np.asarray(rho0, dtype=np.complex128)
    if rho0.ndim == 1:
        rho0 = np.outer(rho0, rho0.conj())
    rho0 = rho0 / np.trace(rho0).real
    times = np.linspace(0.0, t_final, n_records + 1)
    sol = scipy.integrate.solve_ivp(
        rhs, (0.0, t_final), rho0.ravel(), t_eval=times,
        method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"master-equation integration failed: {sol.message}")

    out = {"times": times, "n_mean": [], "q_mean": [], "entropy": [],
           "parity": [], "trace_drift": []}
    for col in sol.y.T:
        rho = col.reshape(dim, dim)
        tr = np.trace(rho).real
        rho_osc = rho.reshape(dims + dims)
        # trace out non-oscillator sites pairwise, largest position first so
        # the axis bookkeeping of the untraced sites never shifts
        for p in sorted([ax for ax in range(len(dims)) if ax != osc_site],
                        reverse=True):
            rho_osc = np.trace(rho_osc, axis1=p, axis2=p + rho_osc.ndim // 2)
        rho_osc = rho_osc / np.trace(rho_osc).real
        out["n_mean"].append(float(np.trace(rho_osc @ number_op(d)).real))
        out["q_mean"].append(float(np.trace(rho_osc @ q_osc).real))
        out["entropy"].append(von_neumann_entropy(rho_osc))
        out["parity"].append(float(np.trace(rho @ p_mat).real / tr))
        out["trace_drift"].append(float(tr - 1.0))
    return {k: np.asarray(v) for k, v in out.items()}


@dataclass(frozen=True)
class FreeFermionResult:
    energy: float
    mode_energies: np.ndarray
    sz_profile: np.ndarray
    contraction: np.ndarray   # G_ij used by the correlator determinants

    def syy(self, i: int, j: int) -> float:
        """<sy_i sy_j> for 0-based spins i < j, via the determinant formula."""
        if i == j:
            return 1.0
        if i > j:
            i, j = j, i
        return float(np.linalg.det(self.contraction[i:j, i + 1:j + 1]))

    def syy_matrix(self) -> np.ndarray:
        L = len(self.sz_profile)
        out = np.eye(L)
        for i in range(L):
            for j in range(i + 1, L):
                out[i, j] = out[j, i] = self.syy(i, j)
        return out


def free_fermion_ising(L: int, h: float, J: float) -> FreeFermionResult:
    """Closed-form ground state of -J sum sy sy - h sum sz on an open chain.

    A z-axis rotation maps the sy-sy chain onto the standard transverse-field
    model, which the Jordan-Wigner transformation turns into free fermions;
    sz is untouched and sy-sy correlators map onto the string determinants.
    """
    amat = np.zeros((L, L))
    bmat = np.zeros((L, L))
    np.fill_diagonal(amat, 2.0 * h)
    for i in range(L - 1):
        amat[i, i + 1] = amat[i + 1, i] = -J
        bmat[i, i + 1] = -J
        bmat[i + 1, i] = J
    u, eps, vt = np.linalg.svd(amat + bmat)
    gmat = -u @ vt
    energy = -0.5 * float(eps.sum())
    sz = -np.diag(gmat).copy()
    return FreeFermionResult(energy, np.sort(eps), sz, gmat)

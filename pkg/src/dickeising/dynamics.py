"""Time evolution: Krylov propagation of MPS and homodyne-detection
stochastic trajectories.

The stochastic step follows the split-step rule: propagate under the
Hamiltonian for dt, then apply the measurement kernel
Omega = 1 - (kappa/2) a'a dt + sqrt(kappa) a dy on the oscillator site and
renormalize. The homodyne record increment is
dy = sqrt(kappa) <a + a'> dt + dW with dW ~ N(0, dt).

Randomness contract: exactly one standard normal is drawn per time step, in
step order, from the caller-supplied generator; when a precomputed Wiener
path is supplied nothing is drawn at all. The dense twin in `ed` uses these
same kernel functions, so seed-matched runs see literally the same noise and
the same nonlinear update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import ModelParams, annihilation, field_quadrature, number_op
from .mpo import MPOperator, build_dicke_ising_mpo, mpo_expectation
from .mps import MPSState, apply_local, canonicalize, mps_norm, normalized
from .fitting import FitTerm, variational_fit
from .observables import (oscillator_density_matrix, oscillator_position,
                          parity_expectation, von_neumann_entropy)
from .tensor import ConvergenceError, TruncationSpec


@dataclass(frozen=True)
class KrylovConfig:
    """Settings for one Krylov propagation step.

    basis_size is the maximum Krylov dimension; the build stops early once
    the tail coefficient of the propagated vector drops below tail_tol or
    the basis closes on an invariant subspace.
    """
    basis_size: int = 8
    trunc: TruncationSpec = field(default_factory=TruncationSpec)
    fit_sweeps: int = 6
    fit_rtol: float = 1e-13
    tail_tol: float = 1e-10
    breakdown_tol: float = 1e-13


@dataclass(frozen=True)
class KrylovStepInfo:
    dimension_used: int
    tail_coefficient: float
    fit_residual_sum: float
    error_estimate: float


def _grow_basis(h_mpo, basis, t_mat, j, config, scale):
    """Append the j-th Gram-Schmidt vector in place.

    Returns (fit_residual, beta, closed, scale); closed means the candidate
    vanished, so the basis spans an invariant subspace.
    """
    col = t_mat[:j, j - 1]
    terms = [FitTerm(1.0, h_mpo, basis[j - 1])]
    terms += [FitTerm(-col[i], None, basis[i]) for i in range(j)]
    fit = variational_fit(terms, config.trunc, max_sweeps=config.fit_sweeps,
                          rtol=config.fit_rtol)
    beta = mps_norm(fit.state)
    scale = max(scale, float(np.max(np.abs(col))), beta)
    if fit.zero_target or beta <= config.breakdown_tol * max(scale, 1.0):
        return fit.residual, beta, True, scale
    t_mat[j, j - 1] = beta
    basis.append(normalized(fit.state))
    n = j + 1
    t_mat[:n, n - 1] = [mpo_expectation(v, h_mpo, basis[-1]) for v in basis]
    return fit.residual, beta, False, scale


def krylov_basis(h_mpo: MPOperator, psi: MPSState,
                 config: KrylovConfig | None = None
                 ) -> tuple[list[MPSState], np.ndarray, float]:
    """Orthonormal Krylov basis from |psi> and the projected Hamiltonian.

    Builds up to config.basis_size vectors, stopping early only when the
    basis closes on an invariant subspace. Returns (basis, h_small,
    fit_residual_sum) with h_small Hermitian of shape (k, k).
    """
    config = config or KrylovConfig()
    nmax = max(config.basis_size, 1)
    psi = normalized(psi)
    basis = [psi]
    t_mat = np.zeros((nmax, nmax), dtype=np.complex128)
    t_mat[0, 0] = mpo_expectation(psi, h_mpo)
    residuals = 0.0
    scale = float(abs(t_mat[0, 0]))
    for j in range(1, nmax):
        res, _, closed, scale = _grow_basis(h_mpo, basis, t_mat, j, config, scale)
        residuals += res
        if closed:
            break
    n = len(basis)
    block = t_mat[:n, :n]
    return basis, 0.5 * (block + block.conj().T), residuals


def krylov_propagate(h_mpo: MPOperator, psi: MPSState, dt: float,
                     config: KrylovConfig | None = None
                     ) -> tuple[MPSState, KrylovStepInfo]:
    """exp(-i dt H)|psi> in a Gram-Schmidt Krylov basis of MPS vectors.

    Each basis vector is H applied to the previous one with the projections
    onto all earlier vectors subtracted, realized as one variational fit.
    The propagated vector is assembled by a second fit and normalized.
    """
    config = config or KrylovConfig()
    nmax = max(config.basis_size, 2)
    psi = normalized(psi)
    basis = [psi]
    t_mat = np.zeros((nmax, nmax), dtype=np.complex128)
    t_mat[0, 0] = mpo_expectation(psi, h_mpo)
    residuals = 0.0
    coeffs = None
    exact_subspace = False
    scale = float(abs(t_mat[0, 0]))

    def propagated(n: int) -> np.ndarray:
        block = t_mat[:n, :n]
        block = 0.5 * (block + block.conj().T)
        return scipy.linalg.expm(-1j * dt * block)[:, 0]

    for j in range(1, nmax):
        res, beta, closed, scale = _grow_basis(h_mpo, basis, t_mat, j,
                                               config, scale)
        residuals += res
        if closed:
            coeffs = propagated(j)  # invariant subspace: exact in this basis
            exact_subspace = True
            break
        coeffs = propagated(j + 1)
        if abs(coeffs[-1]) < config.tail_tol:
            break
    if coeffs is None:
        coeffs = propagated(1)
        exact_subspace = True

    out_terms = [FitTerm(c, None, v) for c, v in zip(coeffs, basis)]
    fit = variational_fit(out_terms, config.trunc, max_sweeps=config.fit_sweeps,
                          rtol=config.fit_rtol)
    residuals += fit.residual
    if fit.zero_target:
        raise ConvergenceError("propagated state fitted to zero")
    out = normalized(fit.state)
    tail = 0.0 if exact_subspace else float(abs(coeffs[-1]))
    info = KrylovStepInfo(len(basis), tail, residuals, tail + residuals)
    return out, info


def homodyne_increment(quad_expect: float, dt: float, kappa: float,
                       rng: np.random.Generator | None = None,
                       dw: float | None = None) -> float:
    """dy = sqrt(kappa) <a + a'> dt + dW; draws dW ~ N(0, dt) unless given."""
    if dw is None:
        if rng is None:
            raise ValueError("need a generator or a precomputed increment")
        dw = math.sqrt(dt) * float(rng.standard_normal())
    return math.sqrt(kappa) * quad_expect * dt + dw


def measurement_operator(dim: int, dt: float, kappa: float, dy: float) -> np.ndarray:
    """Homodyne back-action kernel on the oscillator for one step."""
    a = annihilation(dim)
    return (np.eye(dim) - 0.5 * kappa * dt * number_op(dim)
            + math.sqrt(kappa) * dy * a)


def quad_expectation(psi: MPSState) -> float:
    """<a + a'> on the oscillator (the unscaled homodyne quadrature)."""
    rho = oscillator_density_matrix(psi)
    a = annihilation(rho.shape[0])
    return float(np.trace(rho @ (a + a.conj().T)).real)


def measurement_update(psi: MPSState, dt: float, kappa: float,
                       dy: float) -> tuple[MPSState, float]:
    """Apply the homodyne kernel on the oscillator site and renormalize.

    Returns (state, drift) where drift = ||Omega psi|| - 1 is the
    pre-renormalization norm deviation, a per-step quality diagnostic that
    vanishes as dt -> 0.
    """
    osc = oscillator_position(psi)
    d = psi.site_specs[osc].phys_dim
    psi = apply_local(psi, osc, measurement_operator(d, dt, kappa, dy))
    psi = canonicalize(psi, osc)
    nrm = mps_norm(psi)
    if nrm < 1e-12:
        raise ConvergenceError("measurement kernel annihilated the state;"
                               " reduce dt")
    return normalized(psi), float(nrm - 1.0)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Observables of one stochastic trajectory on the record grid.

    dy holds the integrated homodyne increment accumulated since the
    previous record row; norm_drift is the pre-renormalization deviation
    ||psi|| - 1 from the last step before each record.
    """
    times: np.ndarray
    dy: np.ndarray
    q_mean: np.ndarray
    n_mean: np.ndarray
    entropy: np.ndarray
    parity: np.ndarray
    norm_drift: np.ndarray
    dt: float
    kappa: float
    seed: int | None
    error_estimate: float
    max_bond: int
    final_state: MPSState | None = None
    osc_densities: np.ndarray | None = None

    def as_table(self) -> np.ndarray:
        return np.column_stack([self.times, self.dy, self.q_mean, self.n_mean,
                                self.entropy, self.parity, self.norm_drift])


TRAJECTORY_COLUMNS = ("t", "dy", "q", "n", "S", "P", "norm_drift")


def _observe(psi: MPSState):
    """(rho_osc, (q, n, S, P)) with every oscillator quantity read off one
    reduced density matrix so the state is canonicalized only once."""
    rho = oscillator_density_matrix(psi)
    d = rho.shape[0]
    q = float(np.trace(rho @ field_quadrature(d)).real)
    n_mean = float(np.trace(rho @ number_op(d)).real)
    return rho, (q, n_mean, von_neumann_entropy(rho),
                 parity_expectation(psi))


def run_trajectory(params: ModelParams, psi0: MPSState, t_final: float,
                   dt: float, kappa: float, *,
                   seed: int | None = None,
                   rng: np.random.Generator | None = None,
                   wiener_increments: np.ndarray | None = None,
                   config: KrylovConfig | None = None,
                   record_every: int = 1,
                   keep_final_state: bool = False,
                   keep_densities: bool = False) -> TrajectoryRecord:
    """Integrate one homodyne trajectory and record observables.

    Exactly one of seed/rng/wiener_increments controls the noise. The
    initial state is recorded as row 0 with a zero increment. With
    keep_densities the oscillator reduced density matrix at every record
    time is returned as well (for ensemble-averaged-state diagnostics).
    """
    config = config or KrylovConfig()
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

    osc = oscillator_position(psi0)
    h_mpo = build_dicke_ising_mpo(params, osc_site=osc)
    psi = normalized(psi0)

    rho, obs = _observe(psi)
    rows = [(0.0, 0.0) + obs + (0.0,)]
    densities = [rho]
    dy_acc = 0.0
    err_acc = 0.0
    max_bond = max(psi.bond_dims(), default=1)
    for k in range(n_steps):
        psi, info = krylov_propagate(h_mpo, psi, dt, config)
        err_acc += info.error_estimate
        dw = None if wiener_increments is None else float(wiener_increments[k])
        dy = homodyne_increment(quad_expectation(psi), dt, kappa, rng, dw)
        dy_acc += dy
        psi, drift = measurement_update(psi, dt, kappa, dy)
        max_bond = max(max_bond, max(psi.bond_dims(), default=1))
        if (k + 1) % record_every == 0 or k == n_steps - 1:
            rho, obs = _observe(psi)
            rows.append(((k + 1) * dt, dy_acc) + obs + (drift,))
            densities.append(rho)
            dy_acc = 0.0

    table = np.array(rows, dtype=float)
    return TrajectoryRecord(
        times=table[:, 0], dy=table[:, 1], q_mean=table[:, 2],
        n_mean=table[:, 3], entropy=table[:, 4], parity=table[:, 5],
        norm_drift=table[:, 6], dt=dt, kappa=kappa, seed=seed,
        error_estimate=err_acc, max_bond=max_bond,
        final_state=psi if keep_final_state else None,
        osc_densities=np.stack(densities) if keep_densities else None)


def ensemble_statistics(records: list[TrajectoryRecord]) -> dict[str, np.ndarray]:
    """Trajectory-ensemble means and Monte Carlo standard errors per time."""
    if not records:
        raise ValueError("no trajectories")
    times = records[0].times
    for r in records:
        if r.times.shape != times.shape or not np.allclose(r.times, times):
            raise ValueError("trajectories use different record grids")
    out = {"times": times.copy(), "n_trajectories": np.array([len(records)])}
    m = len(records)
    for name in ("q_mean", "n_mean", "entropy", "parity"):
        stack = np.stack([getattr(r, name) for r in records])
        out[name] = stack.mean(axis=0)
        if m > 1:
            out[name + "_se"] = stack.std(axis=0, ddof=1) / math.sqrt(m)
        else:
            out[name + "_se"] = np.zeros_like(times)
    return out


def cat_purification_state(params: ModelParams, alpha: complex,
                           osc_site: int = 0) -> MPSState:
    """Entangled which-branch state (|alpha>|up..up> + |-alpha>|dn..dn>)/norm.

    Its oscillator reduced state is the even mixture of the two coherent
    branches, giving near one bit of entropy for well-separated branches.
    """
    from .model import coherent_state
    from .mps import mps_sum, product_mps

    specs = params.site_specs(osc_site)
    up = np.array([1.0, 0.0])
    dn = np.array([0.0, 1.0])
    plus = [coherent_state(alpha, params.osc_dim) if s.kind == "oscillator" else up
            for s in specs]
    minus = [coherent_state(-alpha, params.osc_dim) if s.kind == "oscillator" else dn
             for s in specs]
    cat = mps_sum([(1.0, product_mps(specs, plus)), (1.0, product_mps(specs, minus))])
    return normalized(cat)

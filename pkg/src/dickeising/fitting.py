"""Variational (alternating least squares) fitting of MPS linear combinations.

Finds the MPS of given bond dimensions closest in two-norm to a target
sum_k c_k O_k |psi_k>, never forming the target exactly except through the
initial zip-up seed. Each local solve is an exact minimization over one
tensor with the rest of the state held isometric, so the residual is
non-increasing site to site.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mpo import (MPOperator, apply_mpo, double_mpo_expectation, mpo_dagger,
                  mpo_expectation)
from .mps import MPSState, canonicalize, compress, mps_sum, overlap
from .tensor import DenseTensor, DimensionError, TruncationSpec, qr_split


@dataclass(frozen=True)
class FitTerm:
    coeff: complex
    op: MPOperator | None
    state: MPSState


@dataclass(frozen=True)
class FitResult:
    state: MPSState
    residual: float        # ||state - target||, 2-norm
    target_norm: float
    sweeps: int
    converged: bool
    zero_target: bool


def _pair_overlap(tj: FitTerm, tk: FitTerm) -> complex:
    """<O_j psi_j | O_k psi_k> for the Gram matrix of the target."""
    if tj.op is None and tk.op is None:
        return overlap(tj.state, tk.state)
    if tj.op is None:
        return mpo_expectation(tj.state, tk.op, tk.state)
    if tk.op is None:
        return mpo_expectation(tj.state, mpo_dagger(tj.op), tk.state)
    return double_mpo_expectation(tj.state, mpo_dagger(tj.op), tk.op, tk.state)


def target_norm_sq(terms) -> float:
    total = 0.0
    for j, tj in enumerate(terms):
        for k, tk in enumerate(terms):
            total += (np.conj(tj.coeff) * tk.coeff * _pair_overlap(tj, tk)).real
    return max(total, 0.0)


def _push_left(env, phi_site, term: FitTerm, i: int):
    a = np.conj(phi_site)
    psi = term.state.site_array(i)
    if term.op is None:
        t = np.tensordot(env, a, axes=((0,), (0,)))          # (q, p, b')
        return np.tensordot(t, psi, axes=((0, 1), (0, 1)))   # (b', q')
    w = term.op.site_array(i)
    t = np.tensordot(env, a, axes=((0,), (0,)))              # (w, q, p, b')
    t = np.tensordot(t, w, axes=((0, 2), (0, 1)))            # (q, b', pi, w')
    return np.tensordot(t, psi, axes=((0, 2), (0, 1)))       # (b', w', q')


def _push_right(env, phi_site, term: FitTerm, i: int):
    a = np.conj(phi_site)
    psi = term.state.site_array(i)
    if term.op is None:
        t = np.tensordot(a, env, axes=((2,), (0,)))          # (b, p, q)
        return np.tensordot(t, psi, axes=((1, 2), (1, 2)))   # (b, q_l)
    w = term.op.site_array(i)
    t = np.tensordot(a, env, axes=((2,), (0,)))              # (b, p, w, q)
    t = np.tensordot(t, w, axes=((1, 2), (1, 3)))            # (b, q, wl, pi)
    return np.tensordot(t, psi, axes=((1, 3), (2, 1)))       # (b, wl, q_l)


def _local_target(lenv, renv, term: FitTerm, i: int):
    psi = term.state.site_array(i)
    if term.op is None:
        t = np.tensordot(lenv, psi, axes=((1,), (0,)))       # (b, p, q_r)
        return np.tensordot(t, renv, axes=((2,), (1,)))      # (b, p, b')
    w = term.op.site_array(i)
    t = np.tensordot(lenv, psi, axes=((2,), (0,)))           # (b, w, p, q_r)
    t = np.tensordot(t, w, axes=((1, 2), (0, 2)))            # (b, q_r, po, wr)
    return np.tensordot(t, renv, axes=((1, 3), (2, 1)))      # (b, po, b')


def _edge(term: FitTerm):
    shape = (1, 1) if term.op is None else (1, 1, 1)
    return np.ones(shape, dtype=np.complex128)


def zipup_guess(terms, trunc: TruncationSpec) -> MPSState:
    """Seed state: apply each operator exactly, compress, sum, compress."""
    pieces = []
    for t in terms:
        st = t.state if t.op is None else compress(apply_mpo(t.op, t.state), trunc)[0]
        pieces.append((t.coeff, st))
    summed = mps_sum(pieces)
    return compress(summed, trunc)[0]


def variational_fit(terms, trunc: TruncationSpec,
                    guess: MPSState | None = None,
                    max_sweeps: int = 10, rtol: float = 1e-12,
                    zero_atol: float = 1e-14) -> FitResult:
    """Fit an MPS to sum_k c_k O_k |psi_k> at the bond budget of `trunc`."""
    terms = [t if isinstance(t, FitTerm) else FitTerm(*t) for t in terms]
    if not terms:
        raise ValueError("no terms to fit")
    specs = terms[0].state.site_specs
    for t in terms:
        if t.state.site_specs != specs or (t.op and t.op.site_specs != specs):
            raise DimensionError("site specs differ across terms")
    n = len(specs)

    tnorm_sq = target_norm_sq(terms)
    tnorm = float(np.sqrt(tnorm_sq))
    if tnorm <= zero_atol:
        zero = guess if guess is not None else zipup_guess(terms, trunc)
        zero = zero.replace_site(0, np.zeros_like(zero.site_array(0)), center=None)
        return FitResult(zero, 0.0, tnorm, 0, True, True)

    phi = guess if guess is not None else zipup_guess(terms, trunc)
    phi = canonicalize(phi, 0)
    sites = [phi.site_array(i) for i in range(n)]

    lenvs = [[_edge(t)] + [None] * n for t in terms]
    renvs = [[None] * n + [_edge(t)] for t in terms]
    for k, t in enumerate(terms):
        for i in range(n - 1, 0, -1):
            renvs[k][i] = _push_right(renvs[k][i + 1], sites[i], t, i)

    def solve(i: int) -> float:
        b = None
        for k, t in enumerate(terms):
            contrib = t.coeff * _local_target(lenvs[k][i], renvs[k][i + 1], t, i)
            b = contrib if b is None else b + contrib
        sites[i] = b
        return max(tnorm_sq - float(np.vdot(b, b).real), 0.0)

    residual_sq = tnorm_sq
    converged = False
    sweeps_done = 0
    for sweep in range(max_sweeps):
        prev = residual_sq
        for i in range(n):
            residual_sq = solve(i)
            if i < n - 1:
                q, _ = qr_split(DenseTensor(sites[i], ("left", "phys", "right")),
                                ("left", "phys"))
                sites[i] = q.data  # axes already (left, phys, bond)
                for k, t in enumerate(terms):
                    lenvs[k][i + 1] = _push_left(lenvs[k][i], sites[i], t, i)
        for i in range(n - 1, -1, -1):
            residual_sq = solve(i)
            if i > 0:
                tt = DenseTensor(sites[i], ("left", "phys", "right"))
                q, _ = qr_split(tt.transpose(("right", "phys", "left")),
                                ("right", "phys"))
                sites[i] = q.relabel({"bond": "left"}).transpose(
                    ("left", "phys", "right")).data
                for k, t in enumerate(terms):
                    renvs[k][i] = _push_right(renvs[k][i + 1], sites[i], t, i)
        sweeps_done = sweep + 1
        if np.sqrt(prev) - np.sqrt(residual_sq) <= rtol * tnorm:
            converged = True
            break

    out = MPSState(tuple(DenseTensor(s, ("left", "phys", "right")) for s in sites),
                   specs, center=0)
    return FitResult(out, float(np.sqrt(residual_sq)), tnorm,
                     sweeps_done, converged, False)


def fit_apply(op: MPOperator, psi: MPSState, trunc: TruncationSpec,
              **kwargs) -> FitResult:
    """Convenience fit of op|psi> alone."""
    return variational_fit([FitTerm(1.0, op, psi)], trunc, **kwargs)

"""Matrix product operators and their action on MPS.

Operator tensors carry axes (left, out, in, right). Hamiltonian-style
operators are assembled from a small finite-state machine: each bond holds a
named channel list and each site a sparse table of (left channel, right
channel) -> local matrix. Only channels that can still complete a term are
kept per bond, so bond dimensions are minimal by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (PAULI, ModelParams, SiteSpec, annihilation, fock_parity,
                    number_op)
from .mps import MPSState, compress
from .tensor import DenseTensor, DimensionError, TruncationSpec

MPO_AXES = ("left", "out", "in", "right")


@dataclass(frozen=True)
class MPOperator:
    sites: tuple[DenseTensor, ...]
    site_specs: tuple[SiteSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "site_specs", tuple(self.site_specs))
        if len(self.sites) != len(self.site_specs):
            raise DimensionError("site/spec count mismatch")
        for i, (t, spec) in enumerate(zip(self.sites, self.site_specs)):
            if t.labels != MPO_AXES:
                raise DimensionError(f"operator site {i} labels {t.labels}")
            if t.extent("out") != spec.phys_dim or t.extent("in") != spec.phys_dim:
                raise DimensionError(f"operator site {i} physical dims")
        if self.sites[0].extent("left") != 1 or self.sites[-1].extent("right") != 1:
            raise DimensionError("boundary bonds must have extent 1")
        for i in range(len(self.sites) - 1):
            if self.sites[i].extent("right") != self.sites[i + 1].extent("left"):
                raise DimensionError(f"bond mismatch between sites {i} and {i+1}")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def bond_dims(self) -> list[int]:
        return [t.extent("right") for t in self.sites[:-1]]

    def site_array(self, i: int) -> np.ndarray:
        return self.sites[i].data


def _assemble(site_specs, bond_channels, tables) -> MPOperator:
    """Build an MPOperator from per-bond channel lists and per-site tables.

    bond_channels has n_sites + 1 entries; entry i names the channels on the
    bond left of site i (the outer entries are the length-1 boundary lists).
    tables[i] maps (left_channel, right_channel) -> (d, d) matrix.
    """
    n = len(site_specs)
    if len(bond_channels) != n + 1:
        raise DimensionError("need one channel list per bond including boundaries")
    sites = []
    for i, spec in enumerate(site_specs):
        lch, rch = bond_channels[i], bond_channels[i + 1]
        d = spec.phys_dim
        w = np.zeros((len(lch), d, d, len(rch)), dtype=np.complex128)
        for (a, b), mat in tables[i].items():
            if a not in lch or b not in rch:
                raise KeyError(f"site {i}: channel pair ({a}, {b}) not on bonds")
            w[lch.index(a), :, :, rch.index(b)] += np.asarray(mat, dtype=np.complex128)
        sites.append(DenseTensor(w, MPO_AXES))
    return MPOperator(tuple(sites), tuple(site_specs))


def identity_mpo(site_specs) -> MPOperator:
    tables = [{("r", "r"): np.eye(s.phys_dim)} for s in site_specs]
    bonds = [["r"]] * (len(site_specs) + 1)
    return _assemble(site_specs, bonds, tables)


def single_site_mpo(site_specs, site: int, op) -> MPOperator:
    op = np.asarray(getattr(op, "data", op), dtype=np.complex128)
    tables = []
    for i, s in enumerate(site_specs):
        tables.append({("r", "r"): op if i == site else np.eye(s.phys_dim)})
    bonds = [["r"]] * (len(site_specs) + 1)
    return _assemble(site_specs, bonds, tables)


def build_dicke_ising_mpo(params: ModelParams, osc_site: int = 0) -> MPOperator:
    """Hamiltonian MPO for the Ising chain coupled to one oscillator mode.

    H = omega a'a - h sum_i sz_i - J sum_<ij> sy_i sy_j
        + (g/sqrt(L)) (a + a') sum_i sx_i

    The oscillator can sit at any chain position; the two spins flanking it
    remain Ising-coupled (the pending-pair channel passes through it).
    Channels:
      rdy  identity so far, terms may still start
      sy   an Ising pair is half-placed
      acc  spin quadrature partners collected left of the oscillator
      fld  oscillator quadrature placed, one sx partner still owed
      done a finished term is being carried
    """
    specs = list(params.site_specs(osc_site))
    n = len(specs)
    m = osc_site
    if not (0 <= m < n):
        raise DimensionError(f"oscillator position {m} outside chain of {n} sites")
    L = params.L
    d = params.osc_dim
    a = annihilation(d)
    quad = a + a.conj().T
    lam = params.g / np.sqrt(L)
    sx, sy, sz = PAULI["x"], PAULI["y"], PAULI["z"]
    eye2 = np.eye(2)

    def spin_index(pos: int) -> int:
        # 1-based spin label of a chain position (positions skip the oscillator)
        return pos + 1 if pos < m else pos

    def ising_pending(bond: int) -> bool:
        # some sy..sy pair straddles the bond between positions bond, bond + 1
        for pos in range(n):
            if pos == m or spin_index(pos) >= L:
                continue
            partner = pos + 1 if pos + 1 != m else pos + 2
            if partner < n and pos <= bond < partner:
                return True
        return False

    bonds: list[list[str]] = [["rdy"]]
    for b in range(n - 1):
        ch = ["rdy"]
        if ising_pending(b):
            ch.append("sy")
        if b < m:
            ch.append("acc")
        if b >= m and any(pos > b for pos in range(n) if pos != m):
            ch.append("fld")
        ch.append("done")
        bonds.append(ch)
    bonds.append(["done"])

    tables = []
    for pos in range(n):
        lch, rch = bonds[pos], bonds[pos + 1]
        t: dict[tuple[str, str], np.ndarray] = {}
        if pos == m:
            if "rdy" in rch:
                t[("rdy", "rdy")] = np.eye(d)
            if "done" in lch:
                t[("done", "done")] = np.eye(d)
            if "sy" in lch and "sy" in rch:
                t[("sy", "sy")] = np.eye(d)
            t[("rdy", "done")] = params.omega * number_op(d)
            if "fld" in rch:
                t[("rdy", "fld")] = lam * quad
            if "acc" in lch:
                t[("acc", "done")] = quad
        else:
            i = spin_index(pos)
            if "rdy" in rch:
                t[("rdy", "rdy")] = eye2
            if "done" in lch:
                t[("done", "done")] = eye2
            t[("rdy", "done")] = -params.h * sz
            if "sy" in rch and i < L:
                t[("rdy", "sy")] = -params.J * sy
            if "sy" in lch:
                # a spin never forwards a pending pair; it closes it
                t[("sy", "done")] = sy
            if "acc" in rch:
                t[("rdy", "acc")] = lam * sx
            if "acc" in lch and "acc" in rch:
                t[("acc", "acc")] = eye2
            if "fld" in lch:
                t[("fld", "done")] = sx
                if "fld" in rch:
                    t[("fld", "fld")] = eye2
        tables.append(t)
    return _assemble(specs, bonds, tables)


def build_sum_local_mpo(site_specs, osc_op, spin_op, osc_site: int = 0) -> MPOperator:
    """MPO for A_osc * sum_i X_i with A on the oscillator and X on every spin.

    With the identity for A this is the plain spin sum lifted to the chain.
    Bond dimensions never exceed 2.
    """
    specs = list(site_specs)
    n = len(specs)
    m = osc_site
    if not (0 <= m < n) or specs[m].kind != "oscillator":
        raise DimensionError(f"site {m} is not the oscillator")
    if n < 2:
        raise DimensionError("need at least one spin site")
    osc_op = np.asarray(getattr(osc_op, "data", osc_op), dtype=np.complex128)
    spin_op = np.asarray(getattr(spin_op, "data", spin_op), dtype=np.complex128)

    bonds: list[list[str]] = [["rdy"]]
    for b in range(n - 1):
        if b < m:
            ch = ["rdy", "acc"]
        else:
            ch = []
            if any(pos > b for pos in range(n) if pos != m):
                ch.append("fld")
            if m >= 1 or any(m < pos <= b for pos in range(n)):
                ch.append("done")
        bonds.append(ch)
    bonds.append(["done"])

    tables = []
    for pos in range(n):
        lch, rch = bonds[pos], bonds[pos + 1]
        t: dict[tuple[str, str], np.ndarray] = {}
        if pos == m:
            if "fld" in rch:
                t[("rdy", "fld")] = osc_op
            if "acc" in lch:
                t[("acc", "done")] = osc_op
        else:
            eye = np.eye(specs[pos].phys_dim)
            if "rdy" in lch and "rdy" in rch:
                t[("rdy", "rdy")] = eye
            if "rdy" in lch and "acc" in rch:
                t[("rdy", "acc")] = spin_op
            if "acc" in lch and "acc" in rch:
                t[("acc", "acc")] = eye
            if "fld" in lch:
                t[("fld", "done")] = spin_op
                if "fld" in rch:
                    t[("fld", "fld")] = eye
            if "done" in lch:
                t[("done", "done")] = eye
        tables.append(t)
    return _assemble(specs, bonds, tables)


def build_parity_mpo(site_specs) -> MPOperator:
    """Joint parity (-1)^(a'a) tensor sz^L; a bond-1 product operator."""
    specs = list(site_specs)
    tables = []
    for s in specs:
        op = fock_parity(s.phys_dim) if s.kind == "oscillator" else PAULI["z"]
        tables.append({("r", "r"): op})
    bonds = [["r"]] * (len(specs) + 1)
    return _assemble(specs, bonds, tables)


def mpo_dagger(op: MPOperator) -> MPOperator:
    """Hermitian adjoint: conjugate entries, swap the physical axes per site."""
    sites = tuple(
        DenseTensor(np.conj(t.data).transpose(0, 2, 1, 3), MPO_AXES)
        for t in op.sites)
    return MPOperator(sites, op.site_specs)


def mpo_expectation(bra: MPSState, op: MPOperator, ket: MPSState | None = None) -> complex:
    """<bra| op |ket> (ket defaults to bra) via a three-layer transfer sweep."""
    ket = bra if ket is None else ket
    if bra.site_specs != op.site_specs or ket.site_specs != op.site_specs:
        raise DimensionError("site specs differ")
    env = np.ones((1, 1, 1), dtype=np.complex128)  # (bra, op, ket)
    for i in range(op.n_sites):
        a = np.conj(bra.site_array(i))     # (bl, p, br)
        w = op.site_array(i)               # (wl, po, pi, wr)
        k = ket.site_array(i)              # (kl, p, kr)
        env = np.tensordot(env, a, axes=((0,), (0,)))        # (wl, kl, p, br)
        env = np.tensordot(env, w, axes=((0, 2), (0, 1)))    # (kl, br, pi, wr)
        env = np.tensordot(env, k, axes=((0, 2), (0, 1)))    # (br, wr, kr)
    return complex(env[0, 0, 0])


def double_mpo_expectation(bra: MPSState, op1: MPOperator, op2: MPOperator,
                           ket: MPSState | None = None) -> complex:
    """<bra| op1 op2 |ket> without forming the operator product."""
    ket = bra if ket is None else ket
    specs = op1.site_specs
    if bra.site_specs != specs or ket.site_specs != specs or op2.site_specs != specs:
        raise DimensionError("site specs differ")
    env = np.ones((1, 1, 1, 1), dtype=np.complex128)  # (bra, op1, op2, ket)
    for i in range(op1.n_sites):
        a = np.conj(bra.site_array(i))
        w1 = op1.site_array(i)
        w2 = op2.site_array(i)
        k = ket.site_array(i)
        t = np.tensordot(env, a, axes=((0,), (0,)))        # (w1, w2, kl, p, br)
        t = np.tensordot(t, w1, axes=((0, 3), (0, 1)))     # (w2, kl, br, i1, r1)
        t = np.tensordot(t, w2, axes=((0, 3), (0, 1)))     # (kl, br, r1, i2, r2)
        t = np.tensordot(t, k, axes=((0, 3), (0, 1)))      # (br, r1, r2, kr)
        env = t
    return complex(env[0, 0, 0, 0])


def apply_mpo(op: MPOperator, psi: MPSState) -> MPSState:
    """Exact op|psi> with bond dimensions multiplied by the operator bonds."""
    if psi.site_specs != op.site_specs:
        raise DimensionError("site specs differ")
    sites = []
    for i in range(op.n_sites):
        w = op.site_array(i)          # (wl, po, pi, wr)
        a = psi.site_array(i)         # (l, p, r)
        block = np.tensordot(w, a, axes=((2,), (1,)))   # (wl, po, wr, l, r)
        block = block.transpose(0, 3, 1, 2, 4)          # (wl, l, po, wr, r)
        wl, dl, d, wr, dr = block.shape
        sites.append(DenseTensor(block.reshape(wl * dl, d, wr * dr),
                                 ("left", "phys", "right")))
    return MPSState(tuple(sites), psi.site_specs, center=None)


def apply_mpo_compressed(op: MPOperator, psi: MPSState,
                         spec: TruncationSpec) -> tuple[MPSState, float]:
    """op|psi> followed by an SVD compression sweep (zip-up style seed)."""
    return compress(apply_mpo(op, psi), spec)


def mpo_dense(op: MPOperator) -> np.ndarray:
    """Full matrix of the operator, row-major over sites. Small systems only."""
    block = op.site_array(0)[0]  # (po, pi, wr)
    rows, cols = block.shape[0], block.shape[1]
    for i in range(1, op.n_sites):
        w = op.site_array(i)  # (wl, po, pi, wr)
        block = np.tensordot(block, w, axes=((2,), (0,)))  # (ro, ci, po, pi, wr)
        block = block.transpose(0, 2, 1, 3, 4)
        rows *= w.shape[1]
        cols *= w.shape[2]
        block = block.reshape(rows, cols, -1)
    return block[:, :, 0].copy()

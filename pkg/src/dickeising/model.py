"""Physical configuration and local operators for the cavity-coupled Ising chain.

The Hamiltonian simulated throughout this package is

    H = omega a'a - h sum_j sz_j - J sum_{j<L} sy_j sy_{j+1}
        + (g/sqrt(L)) sum_j sx_j (a + a')

on a chain of L spin-1/2 sites plus one oscillator mode truncated at
occupation n_max. Energies are quoted in units of omega unless stated
otherwise. Spin basis: sz eigenbasis with |up> first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=np.complex128)
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)
S_ID = np.eye(2, dtype=np.complex128)

PAULI = {"x": SX, "y": SY, "z": SZ, "i": S_ID}


def annihilation(dim: int) -> np.ndarray:
    """Bosonic lowering operator on a dim-dimensional Fock space."""
    a = np.zeros((dim, dim), dtype=np.complex128)
    for n in range(1, dim):
        a[n - 1, n] = math.sqrt(n)
    return a


def number_op(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim).astype(np.complex128))


def field_quadrature(dim: int) -> np.ndarray:
    """q = (a + a')/sqrt(2)."""
    a = annihilation(dim)
    return (a + a.conj().T) / math.sqrt(2.0)


def fock_parity(dim: int) -> np.ndarray:
    """(-1)^n on Fock states; flips the sign of the field operator."""
    return np.diag(((-1.0) ** np.arange(dim)).astype(np.complex128))


def coherent_state(alpha: complex, dim: int) -> np.ndarray:
    """Normalized coherent-state amplitudes under the Fock cutoff."""
    amps = np.zeros(dim, dtype=np.complex128)
    amps[0] = 1.0
    for n in range(1, dim):
        amps[n] = amps[n - 1] * alpha / math.sqrt(n)
    return amps / np.linalg.norm(amps)


@dataclass(frozen=True)
class SiteSpec:
    """One lattice site: 'oscillator' (phys_dim = n_max+1) or 'spin' (phys_dim = 2)."""

    kind: str
    phys_dim: int

    def __post_init__(self):
        if self.kind not in ("oscillator", "spin"):
            raise ValueError(f"unknown site kind {self.kind!r}")
        if self.phys_dim < 2:
            raise ValueError("phys_dim must be >= 2")


def default_n_max(g: float, L: int, omega: float = 1.0) -> int:
    """Fock cutoff with headroom over the L-scaled coherent occupation."""
    return int(math.ceil(4.0 * (g * g * L) / (omega * omega))) + 10


@dataclass(frozen=True)
class ModelParams:
    """Couplings of the chain-plus-oscillator Hamiltonian.

    omega: oscillator frequency (> 0, sets the unit); h: transverse field;
    J: Ising coupling; g: collective coupling, applied as g/sqrt(L);
    L: number of spins; n_max: Fock cutoff (validated downstream via the
    top-Fock population certificate).
    """

    omega: float
    h: float
    J: float
    g: float
    L: int
    n_max: int = 0

    def __post_init__(self):
        if not (self.omega > 0):
            raise ValueError("omega must be > 0")
        for name in ("h", "J", "g"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.n_max == 0:
            object.__setattr__(self, "n_max", default_n_max(self.g, self.L, self.omega))
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")

    @property
    def n_sites(self) -> int:
        return self.L + 1

    @property
    def osc_dim(self) -> int:
        return self.n_max + 1

    def with_n_max(self, n_max: int) -> "ModelParams":
        return replace(self, n_max=n_max)

    def site_specs(self, osc_site: int = 0) -> list[SiteSpec]:
        specs = [SiteSpec("spin", 2) for _ in range(self.L)]
        specs.insert(osc_site, SiteSpec("oscillator", self.osc_dim))
        return specs

    def as_dict(self) -> dict:
        return {"omega": self.omega, "h": self.h, "J": self.J, "g": self.g,
                "L": self.L, "n_max": self.n_max}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(omega=float(d["omega"]), h=float(d["h"]), J=float(d["J"]),
                   g=float(d["g"]), L=int(d["L"]), n_max=int(d.get("n_max", 0)))

"""Matrix product states over a mixed oscillator/spin chain.

Site tensors carry axes (left, phys, right); boundary bonds have extent 1
(open chain). The oscillator is an ordinary chain site, by default at
position 0, so chain algorithms never special-case it. States are values:
every operation returns a new MPSState and never mutates its input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, SiteSpec
from .tensor import (DenseTensor, DimensionError, TruncationSpec, contract,
                     qr_split, svd_truncate)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MPSState:
    """Chain of (left, phys, right) tensors with canonical-center bookkeeping.

    `center` is the index about which the state is in mixed-canonical form
    (tensors strictly left are left-isometric, strictly right are
    right-isometric), or None when no gauge is guaranteed.
    """

    sites: tuple[DenseTensor, ...]
    site_specs: tuple[SiteSpec, ...]
    center: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "site_specs", tuple(self.site_specs))
        if len(self.sites) != len(self.site_specs):
            raise DimensionError("site/spec count mismatch")
        for i, (t, spec) in enumerate(zip(self.sites, self.site_specs)):
            if t.labels != ("left", "phys", "right"):
                raise DimensionError(f"site {i} labels {t.labels}")
            if t.extent("phys") != spec.phys_dim:
                raise DimensionError(
                    f"site {i} phys dim {t.extent('phys')} != {spec.phys_dim}")
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

    def replace_site(self, i: int, data: np.ndarray, center: int | None = "keep") -> "MPSState":
        sites = list(self.sites)
        sites[i] = DenseTensor(data, ("left", "phys", "right"))
        c = self.center if center == "keep" else center
        return MPSState(tuple(sites), self.site_specs, c)


def product_mps(site_specs, vectors) -> MPSState:
    """Product state from one amplitude vector per site."""
    sites = []
    for spec, v in zip(site_specs, vectors):
        v = np.asarray(v, dtype=np.complex128)
        if v.shape != (spec.phys_dim,):
            raise DimensionError(f"vector shape {v.shape} vs phys dim {spec.phys_dim}")
        sites.append(DenseTensor(v.reshape(1, -1, 1), ("left", "phys", "right")))
    return MPSState(tuple(sites), tuple(site_specs), center=None)


def basis_product_mps(site_specs, occupations) -> MPSState:
    """Product state |i_0, i_1, ...> on the local bases."""
    vecs = []
    for spec, k in zip(site_specs, occupations):
        v = np.zeros(spec.phys_dim)
        v[k] = 1.0
        vecs.append(v)
    return product_mps(site_specs, vecs)


def random_mps(site_specs, max_rank: int, rng: np.random.Generator) -> MPSState:
    """Normalized random MPS with bond dimensions capped by max_rank and capacity."""
    n = len(site_specs)
    dims = [spec.phys_dim for spec in site_specs]
    bonds = [1]
    for i in range(n - 1):
        left_cap = bonds[-1] * dims[i]
        right_cap = int(np.prod(dims[i + 1:], dtype=object))
        bonds.append(int(min(left_cap, right_cap, max_rank)))
    bonds.append(1)
    sites = []
    for i in range(n):
        shape = (bonds[i], dims[i], bonds[i + 1])
        data = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        sites.append(DenseTensor(data, ("left", "phys", "right")))
    psi = MPSState(tuple(sites), tuple(site_specs), center=None)
    psi = canonicalize(psi, 0)
    return normalized(psi)


def canonicalize(psi: MPSState, center: int) -> MPSState:
    """Gauge the state into mixed-canonical form about `center`.

    The represented vector is unchanged; only the gauge moves.
    """
    n = psi.n_sites
    if not (0 <= center < n):
        raise DimensionError(f"center {center} outside chain of {n} sites")
    sites = [t for t in psi.sites]
    # left-to-right QR sweep up to the center
    for i in range(center):
        q, r = qr_split(sites[i], ("left", "phys"))
        sites[i] = q.relabel({"bond": "right"})
        nxt = contract(r.relabel({"bond": "k", "right": "kk"}),
                       sites[i + 1].relabel({"left": "kk"}),
                       [("kk", "kk")]).relabel({"k": "left"})
        sites[i + 1] = nxt.transpose(("left", "phys", "right"))
    # right-to-left QR sweep down to the center
    for i in range(n - 1, center, -1):
        t = sites[i].transpose(("right", "phys", "left"))
        q, r = qr_split(t, ("right", "phys"))
        sites[i] = q.relabel({"bond": "left"}).transpose(("left", "phys", "right"))
        prev = contract(sites[i - 1],
                        r.relabel({"bond": "k", "left": "kk"}),
                        [("right", "kk")]).relabel({"k": "right"})
        sites[i - 1] = prev.transpose(("left", "phys", "right"))
    return MPSState(tuple(sites), psi.site_specs, center)


def mps_norm(psi: MPSState) -> float:
    if psi.center is not None:
        return psi.sites[psi.center].norm()
    return float(np.sqrt(abs(overlap(psi, psi))))


def normalized(psi: MPSState) -> MPSState:
    c = psi.center if psi.center is not None else 0
    psi = canonicalize(psi, c)
    nrm = psi.sites[c].norm()
    if nrm == 0.0:
        raise ZeroDivisionError("cannot normalize a zero state")
    return psi.replace_site(c, psi.site_array(c) / nrm)


def overlap(psi: MPSState, phi: MPSState) -> complex:
    """<psi|phi> by left-to-right transfer contraction."""
    if psi.site_specs != phi.site_specs:
        raise DimensionError("site specs differ")
    env = np.ones((1, 1), dtype=np.complex128)  # (bra bond, ket bond)
    for a, b in zip(psi.sites, phi.sites):
        env = np.tensordot(env, np.conj(a.data), axes=((0,), (0,)))  # (kd, p, bu)
        env = np.tensordot(env, b.data, axes=((0, 1), (0, 1)))       # (bu, kd)
    return complex(env[0, 0])


def apply_local(psi: MPSState, site: int, op) -> MPSState:
    """Apply a single-site operator; only the addressed tensor changes."""
    op = np.asarray(getattr(op, "data", op), dtype=np.complex128)
    d = psi.site_specs[site].phys_dim
    if op.shape != (d, d):
        raise DimensionError(f"operator shape {op.shape} vs phys dim {d}")
    new = np.einsum("ab,lbr->lar", op, psi.site_array(site))
    keep = psi.center if psi.center == site else None
    return psi.replace_site(site, new, center=keep)


def compress(psi: MPSState, spec: TruncationSpec) -> tuple[MPSState, float]:
    """SVD-truncate every bond; returns the state and the summed discarded weight.

    The result is canonical about site 0 and is NOT renormalized: the
    squared-norm loss is exactly the accumulated discarded weight when the
    input was normalized.
    """
    psi = canonicalize(psi, psi.n_sites - 1)
    sites = [t for t in psi.sites]
    total = 0.0
    for i in range(psi.n_sites - 1, 0, -1):
        u, s, v, w = svd_truncate(sites[i], ("left",), spec, bond_label="b")
        total += w
        sites[i] = v.relabel({"b": "left"}).transpose(("left", "phys", "right"))
        us = u.data * s  # (left, b) * (b,)
        prev = np.tensordot(sites[i - 1].data, us, axes=((2,), (0,)))
        sites[i - 1] = DenseTensor(prev, ("left", "phys", "right"))
    return MPSState(tuple(sites), psi.site_specs, center=0), total


def mps_sum(terms: list[tuple[complex, MPSState]]) -> MPSState:
    """Exact linear combination sum_k c_k |psi_k> by bond block-concatenation."""
    if not terms:
        raise ValueError("empty sum")
    specs = terms[0][1].site_specs
    for _, t in terms:
        if t.site_specs != specs:
            raise DimensionError("site specs differ across summands")
    n = len(specs)
    if n == 1:
        data = sum(c * t.site_array(0) for c, t in terms)
        return MPSState((DenseTensor(data, ("left", "phys", "right")),), specs, None)
    sites = []
    for i in range(n):
        blocks = []
        for c, t in terms:
            arr = t.site_array(i)
            blocks.append(arr * c if i == 0 else arr)
        if i == 0:
            data = np.concatenate(blocks, axis=2)
        elif i == n - 1:
            data = np.concatenate(blocks, axis=0)
        else:
            dl = sum(b.shape[0] for b in blocks)
            dr = sum(b.shape[2] for b in blocks)
            d = blocks[0].shape[1]
            data = np.zeros((dl, d, dr), dtype=np.complex128)
            ol = orr = 0
            for b in blocks:
                data[ol:ol + b.shape[0], :, orr:orr + b.shape[2]] = b
                ol += b.shape[0]
                orr += b.shape[2]
        sites.append(DenseTensor(data, ("left", "phys", "right")))
    return MPSState(tuple(sites), specs, None)


def to_dense(psi: MPSState) -> np.ndarray:
    """Full state vector, row-major over (site 0, site 1, ...). Small systems only."""
    block = psi.site_array(0)[0]  # (d0, D1)
    for i in range(1, psi.n_sites):
        block = np.tensordot(block, psi.site_array(i), axes=((-1,), (0,)))
        block = block.reshape(-1, block.shape[-1])
    return block[:, 0].copy()


def from_dense(vec: np.ndarray, site_specs, spec: TruncationSpec) -> MPSState:
    """MPS from a dense state vector by successive SVD splits."""
    dims = [s.phys_dim for s in site_specs]
    if len(vec) != int(np.prod(dims, dtype=object)):
        raise DimensionError("vector length does not match site dims")
    rest = np.asarray(vec, dtype=np.complex128).reshape(1, -1)
    sites = []
    for i, d in enumerate(dims[:-1]):
        dl = rest.shape[0]
        mat = rest.reshape(dl * d, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        r = spec.kept_rank(s)
        sites.append(DenseTensor(u[:, :r].reshape(dl, d, r), ("left", "phys", "right")))
        rest = (s[:r, None] * vh[:r, :])
    sites.append(DenseTensor(rest.reshape(rest.shape[0], dims[-1], 1),
                             ("left", "phys", "right")))
    return MPSState(tuple(sites), tuple(site_specs), center=len(dims) - 1)


def save_checkpoint(path, psi: MPSState, params: ModelParams | None = None) -> None:
    """Self-describing binary checkpoint; round-trips tensors exactly."""
    payload = {
        "format_version": np.int64(CHECKPOINT_FORMAT_VERSION),
        "precision": np.bytes_(b"complex128 little-endian (<c16)"),
        "kinds": np.array([s.kind for s in psi.site_specs]),
        "phys_dims": np.array([s.phys_dim for s in psi.site_specs], dtype=np.int64),
        "center": np.int64(-1 if psi.center is None else psi.center),
        "params_json": np.frombuffer(
            json.dumps(params.as_dict()).encode() if params else b"",
            dtype=np.uint8),
    }
    for i, t in enumerate(psi.sites):
        payload[f"site_{i:04d}"] = np.ascontiguousarray(
            t.data.astype("<c16", copy=False))
    np.savez(path, **payload)


def load_checkpoint(path) -> tuple[MPSState, ModelParams | None]:
    with np.load(path) as z:
        version = int(z["format_version"])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        kinds = [str(k) for k in z["kinds"]]
        dims = [int(d) for d in z["phys_dims"]]
        specs = tuple(SiteSpec(k, d) for k, d in zip(kinds, dims))
        center = int(z["center"])
        sites = tuple(
            DenseTensor(z[f"site_{i:04d}"].astype(np.complex128),
                        ("left", "phys", "right"))
            for i in range(len(specs)))
        raw = z["params_json"].tobytes().decode()
        params = ModelParams.from_dict(json.loads(raw)) if raw else None
    return MPSState(sites, specs, None if center < 0 else center), params

"""Dense complex tensors with labeled axes, truncated SVD, and eigensolvers.

Every tensor-network object in this package (MPS site tensors, MPO tensors,
environment blocks) is carried by :class:`DenseTensor`: a row-major complex
array whose axes are addressed by opaque string labels instead of positions.
Contractions name the axis pairs explicitly, which removes the silent
transposition bugs that positional `tensordot` invites.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla


class DimensionError(ValueError):
    """Axis extents (or labels) of the operands do not line up."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap.

    Attributes
    ----------
    best_residual : float
        The smallest residual reached before giving up.
    """

    def __init__(self, message: str, best_residual: float = np.inf):
        super().__init__(message)
        self.best_residual = best_residual


@dataclass(frozen=True)
class DenseTensor:
    """Multi-index complex array with named axes.

    Parameters
    ----------
    data : np.ndarray
        Row-major complex values; coerced to complex128.
    labels : tuple of str
        One label per axis, unique within the tensor.
    """

    data: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        object.__setattr__(self, "data", arr)
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if arr.ndim != len(labels):
            raise DimensionError(
                f"{arr.ndim} axes but {len(labels)} labels {labels}")
        if len(set(labels)) != len(labels):
            raise DimensionError(f"duplicate axis labels {labels}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DimensionError(f"no axis {label!r} in {self.labels}") from None

    def extent(self, label: str) -> int:
        return self.data.shape[self.axis(label)]

    def relabel(self, mapping: dict[str, str]) -> "DenseTensor":
        return DenseTensor(self.data, tuple(mapping.get(l, l) for l in self.labels))

    def transpose(self, labels) -> "DenseTensor":
        labels = tuple(labels)
        perm = [self.axis(l) for l in labels]
        return DenseTensor(np.transpose(self.data, perm), labels)

    def conj(self) -> "DenseTensor":
        return DenseTensor(np.conj(self.data), self.labels)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def fuse(self, groups: list[tuple[str, ...]], fused_labels: list[str]) -> "DenseTensor":
        """Merge each group of axes into one axis (row-major within the group)."""
        order = [l for g in groups for l in g]
        t = self.transpose(order)
        new_shape = []
        pos = 0
        for g in groups:
            ext = 1
            for _ in g:
                ext *= t.data.shape[pos]
                pos += 1
            new_shape.append(ext)
        return DenseTensor(t.data.reshape(new_shape), tuple(fused_labels))

    def scaled(self, factor: complex) -> "DenseTensor":
        return DenseTensor(self.data * factor, self.labels)

    def add(self, other: "DenseTensor") -> "DenseTensor":
        other_t = other.transpose(self.labels)
        if other_t.shape != self.shape:
            raise DimensionError(f"shape mismatch {self.shape} vs {other_t.shape}")
        return DenseTensor(self.data + other_t.data, self.labels)


@dataclass(frozen=True)
class TruncationSpec:
    """Bond-truncation policy: each criterion caps the kept rank; strictest wins.

    max_rank caps the rank outright, rel_tol drops singular values below
    rel_tol times the largest, and keep_weight permits discarding trailing
    squared-singular-value mass up to the cap. At least one value is kept.
    """

    max_rank: int = 2**30
    rel_tol: float = 0.0
    keep_weight: float = 0.0

    def __post_init__(self):
        if self.max_rank < 1:
            raise ValueError("max_rank must be >= 1")
        if not (0.0 <= self.rel_tol < 1.0):
            raise ValueError("rel_tol must lie in [0, 1)")
        if self.keep_weight < 0.0:
            raise ValueError("keep_weight must be >= 0")

    def kept_rank(self, s: np.ndarray) -> int:
        """Number of singular values kept from a nonincreasing spectrum."""
        n = len(s)
        if n == 0:
            return 0
        r = min(n, self.max_rank)
        if self.rel_tol > 0.0 and s[0] > 0.0:
            r = min(r, max(1, int(np.count_nonzero(s >= self.rel_tol * s[0]))))
        if self.keep_weight > 0.0:
            tail = np.cumsum((s ** 2)[::-1])[::-1]  # tail[i] = sum of s[i:]**2
            allowed = np.nonzero(tail <= self.keep_weight)[0]
            if allowed.size:
                r = min(r, max(1, int(allowed[0])))
        return max(1, r)


def contract(a: DenseTensor, b: DenseTensor, pairs: list[tuple[str, str]]) -> DenseTensor:
    """Contract `a` with `b` over the named axis pairs.

    Result axes are the uncontracted axes of `a` followed by those of `b`.
    A full contraction returns a 0-dimensional tensor.
    """
    ax_a, ax_b = [], []
    for la, lb in pairs:
        ia, ib = a.axis(la), b.axis(lb)
        if a.data.shape[ia] != b.data.shape[ib]:
            raise DimensionError(
                f"extent mismatch on ({la!r},{lb!r}): "
                f"{a.data.shape[ia]} vs {b.data.shape[ib]}")
        ax_a.append(ia)
        ax_b.append(ib)
    out = np.tensordot(a.data, b.data, axes=(ax_a, ax_b))
    rem_a = [l for i, l in enumerate(a.labels) if i not in set(ax_a)]
    rem_b = [l for i, l in enumerate(b.labels) if i not in set(ax_b)]
    clash = set(rem_a) & set(rem_b)
    if clash:
        raise DimensionError(f"uncontracted labels collide: {sorted(clash)}")
    return DenseTensor(out, tuple(rem_a + rem_b))


def svd_truncate(
    t: DenseTensor,
    left_axes,
    spec: TruncationSpec,
    bond_label: str = "bond",
) -> tuple[DenseTensor, np.ndarray, DenseTensor, float]:
    """Truncated SVD of `t` split between `left_axes` and the rest.

    Returns (U, s, V, discarded_weight): U carries the left axes plus the
    new bond, V the bond plus the right axes, both isometric on the bond;
    s is the kept nonincreasing singular-value vector and discarded_weight
    the squared-Frobenius mass that was dropped.
    """
    left = [l for l in t.labels if l in set(left_axes)]
    right = [l for l in t.labels if l not in set(left_axes)]
    if not left or not right:
        raise DimensionError("left_axes must be a nonempty proper subset of the axes")
    mat_t = t.transpose(left + right)
    lshape = mat_t.data.shape[: len(left)]
    rshape = mat_t.data.shape[len(left):]
    mat = mat_t.data.reshape(int(np.prod(lshape)), int(np.prod(rshape)))
    try:
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails on ill-conditioned input; gesvd is sturdier
        u, s, vh = scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")
    r = spec.kept_rank(s)
    discarded = float(np.sum(s[r:] ** 2))
    u, s, vh = u[:, :r], s[:r], vh[:r, :]
    u_t = DenseTensor(u.reshape(*lshape, r), tuple(left) + (bond_label,))
    v_t = DenseTensor(vh.reshape(r, *rshape), (bond_label,) + tuple(right))
    return u_t, s.copy(), v_t, discarded


def qr_split(t: DenseTensor, left_axes, bond_label: str = "bond") -> tuple[DenseTensor, DenseTensor]:
    """Thin QR of `t` split between `left_axes` and the rest; Q is left-isometric."""
    left = [l for l in t.labels if l in set(left_axes)]
    right = [l for l in t.labels if l not in set(left_axes)]
    if not left or not right:
        raise DimensionError("left_axes must be a nonempty proper subset of the axes")
    mat_t = t.transpose(left + right)
    lshape = mat_t.data.shape[: len(left)]
    rshape = mat_t.data.shape[len(left):]
    mat = mat_t.data.reshape(int(np.prod(lshape)), int(np.prod(rshape)))
    q, r = np.linalg.qr(mat)
    k = q.shape[1]
    q_t = DenseTensor(q.reshape(*lshape, k), tuple(left) + (bond_label,))
    r_t = DenseTensor(r.reshape(k, *rshape), (bond_label,) + tuple(right))
    return q_t, r_t


_DENSE_FALLBACK_DIM = 128


def lowest_eigenpairs(
    apply,
    n: int,
    k: int,
    tol: float = 1e-12,
    v0: np.ndarray | None = None,
    maxiter: int | None = None,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """k lowest eigenpairs of the Hermitian map `apply` on C^n.

    Small problems (n <= 128) are materialized and solved densely; larger
    ones go through ARPACK's implicitly-restarted Lanczos. Eigenvectors are
    returned orthonormal, values ascending.

    Raises
    ------
    ConvergenceError
        If the iterative solver hits its cap; carries the best residual.
    """
    if k > n:
        raise DimensionError(f"k={k} exceeds dimension n={n}")
    if n <= _DENSE_FALLBACK_DIM or k >= n - 1:
        basis = np.eye(n, dtype=np.complex128)
        cols = [np.asarray(apply(basis[:, i]), dtype=np.complex128) for i in range(n)]
        h = np.column_stack(cols)
        h = 0.5 * (h + h.conj().T)
        vals, vecs = np.linalg.eigh(h)
        return vals[:k].copy(), [vecs[:, i].copy() for i in range(k)]

    op = spla.LinearOperator((n, n), matvec=apply, dtype=np.complex128)
    try:
        vals, vecs = spla.eigsh(op, k=k, which="SA", tol=tol, v0=v0, maxiter=maxiter)
    except spla.ArpackNoConvergence as exc:
        best = np.inf
        if exc.eigenvalues is not None and len(exc.eigenvalues):
            v = exc.eigenvectors[:, 0]
            best = float(np.linalg.norm(apply(v) - exc.eigenvalues[0] * v))
        raise ConvergenceError(
            f"eigsh failed to converge ({k} of dim {n})", best_residual=best) from exc
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    return vals.copy(), [vecs[:, i].copy() for i in range(k)]

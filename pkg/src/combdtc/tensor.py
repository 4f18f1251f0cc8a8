"""Dense complex tensor kernels.

Tensors are plain ``numpy.ndarray`` objects with ``complex128`` entries in
row-major order.  Every routine here is a pure function of its inputs.

A *split* (axis bipartition) is either an integer ``k`` meaning "the first
``k`` axes versus the rest", or a sequence of axes forming the left group;
the right group is then every remaining axis in ascending order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from .errors import ContractError, ShapeError

Split = Union[int, Sequence[int]]

__all__ = [
    "SvdResult",
    "contract",
    "svd_truncate",
    "qr_orthogonalize",
    "expm_antihermitian",
    "truncation_rank",
    "robust_svd",
]


@dataclass(frozen=True)
class SvdResult:
    """Truncated singular value decomposition of a bipartitioned tensor.

    ``left`` has shape ``left_dims + (rank,)`` and ``right`` has shape
    ``(rank,) + right_dims``; ``left @ diag(s) @ right`` rebuilds the
    (truncated) tensor.  ``discarded_weight`` is the dropped fraction of the
    squared norm.
    """

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    discarded_weight: float

    @property
    def rank(self) -> int:
        return len(self.singular_values)


def contract(a: np.ndarray, b: np.ndarray, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Sum over paired axes of ``a`` and ``b``.

    The result carries the unpaired axes of ``a`` followed by the unpaired
    axes of ``b``, each group in its original order.
    """
    axes_a = [int(p[0]) for p in pairs]
    axes_b = [int(p[1]) for p in pairs]
    for i, j in zip(axes_a, axes_b):
        if not (-a.ndim <= i < a.ndim and -b.ndim <= j < b.ndim):
            raise ShapeError(f"axis pair ({i}, {j}) out of range for ranks {a.ndim}, {b.ndim}")
        if a.shape[i] != b.shape[j]:
            raise ShapeError(
                f"axis pair ({i}, {j}) has mismatched extents {a.shape[i]} != {b.shape[j]}"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def _bipartition(t: np.ndarray, split: Split) -> tuple[np.ndarray, tuple, tuple]:
    if isinstance(split, (int, np.integer)):
        left = list(range(int(split)))
    else:
        left = [int(ax) % t.ndim for ax in split]
    right = [ax for ax in range(t.ndim) if ax not in left]
    if not left or not right or len(set(left)) != len(left):
        raise ContractError(f"split {split!r} must partition {t.ndim} axes into two non-empty groups")
    perm = left + right
    if perm != list(range(t.ndim)):
        t = t.transpose(perm)
    ldims = t.shape[: len(left)]
    rdims = t.shape[len(left):]
    mat = t.reshape(int(np.prod(ldims)), int(np.prod(rdims)))
    return mat, ldims, rdims


def robust_svd(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD falling back to the QR-iteration driver when ``gesdd`` fails."""
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


def truncation_rank(s: np.ndarray, max_bond: int, cutoff: float) -> tuple[int, float]:
    """Number of singular values to keep and the relative discarded weight.

    Keeps the smallest rank whose discarded squared weight (relative to the
    total) is at most ``cutoff``; a degenerate multiplet straddling that
    boundary is kept whole.  ``max_bond`` is a hard cap applied last.
    """
    s2 = s * s
    total = float(s2.sum())
    if total == 0.0:
        return 1, 0.0
    # tail[r] = weight discarded when keeping r values
    tail = np.concatenate([np.cumsum(s2[::-1])[::-1], [0.0]]) / total
    r = int(np.argmax(tail <= cutoff))
    r = max(r, 1)
    while r < len(s) and s[r] >= s[r - 1] * (1.0 - 1e-12):
        r += 1
    r = min(r, int(max_bond))
    return r, float(tail[r])


def svd_truncate(t: np.ndarray, split: Split, max_bond: int | None = None, cutoff: float = 0.0) -> SvdResult:
    """Truncated SVD of ``t`` across the bipartition ``split``."""
    if max_bond is None:
        max_bond = np.iinfo(np.int64).max
    if max_bond < 1:
        raise ContractError("max_bond must be positive")
    if cutoff < 0:
        raise ContractError("cutoff must be non-negative")
    mat, ldims, rdims = _bipartition(np.asarray(t), split)
    u, s, vh = robust_svd(mat)
    r, discarded = truncation_rank(s, max_bond, cutoff)
    if s.size == 0 or s[0] == 0.0:
        # zero tensor: rank-one result with a vanishing singular value
        u = np.eye(mat.shape[0], 1, dtype=mat.dtype)
        vh = np.eye(1, mat.shape[1], dtype=mat.dtype)
        s = np.zeros(1)
        r = 1
    return SvdResult(
        left=u[:, :r].reshape(ldims + (r,)),
        singular_values=s[:r].copy(),
        right=vh[:r].reshape((r,) + rdims),
        discarded_weight=discarded,
    )


def qr_orthogonalize(t: np.ndarray, split: Split) -> tuple[np.ndarray, np.ndarray]:
    """Split ``t`` into an isometry over the left group and a remainder.

    Returns ``(q, r)`` with ``q`` of shape ``left_dims + (k,)`` satisfying
    ``q^dagger q = I`` and ``r`` of shape ``(k,) + right_dims``.
    """
    mat, ldims, rdims = _bipartition(np.asarray(t), split)
    q, r = np.linalg.qr(mat)
    k = q.shape[1]
    return q.reshape(ldims + (k,)), r.reshape((k,) + rdims)


def expm_antihermitian(g: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Exponential of an anti-Hermitian matrix.

    Uses the spectral decomposition of the Hermitian matrix ``i g``, which
    yields a unitary to machine precision for any generator norm.

    Raises
    ------
    ContractError
        If ``g`` is not square or ``g^dagger != -g`` within ``1e-12``.
    """
    g = np.asarray(g, dtype=complex)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ContractError(f"generator must be a square matrix, got shape {g.shape}")
    asym = np.max(np.abs(g + g.conj().T)) if g.size else 0.0
    if asym > 1e-12 * max(1.0, float(np.max(np.abs(g))) if g.size else 1.0):
        raise ContractError(f"generator is not anti-Hermitian (|g + g^H|_max = {asym:.3e})")
    h = 0.5j * (g - g.conj().T)  # Hermitian, g = -i h
    w, v = np.linalg.eigh(h)
    u = (v * np.exp(-1j * w)) @ v.conj().T
    err = np.max(np.abs(u.conj().T @ u - np.eye(len(u)))) if u.size else 0.0
    if err > tol:
        raise ContractError(f"exponential failed the unitarity check ({err:.3e} > {tol:.1e})")
    return u

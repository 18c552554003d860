"""Dense tensor substrate: validated reshape/permute/matmul and a deterministic truncated SVD.

Everything is float64 and row-major.  All functions are pure: inputs are
never mutated, outputs are plain C-contiguous numpy arrays, so values can
be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SvdResult", "reshape", "permute", "matmul", "truncated_svd"]

_EPS = np.finfo(np.float64).eps


def reshape(t: np.ndarray, new_shape) -> np.ndarray:
    """Reshape without reordering the row-major data buffer."""
    t = np.asarray(t)
    shape = tuple(int(s) for s in new_shape)
    if any(s < 1 for s in shape):
        raise ValueError(f"extents must be positive, got {shape}")
    if int(np.prod(shape)) != t.size:
        raise ValueError(f"cannot reshape {t.size} elements into {shape}")
    return np.ascontiguousarray(t).reshape(shape)


def permute(t: np.ndarray, perm) -> np.ndarray:
    """Reorder axes: output axis ``a`` is input axis ``perm[a]``.

    Applying the inverse permutation (``np.argsort(perm)``) restores the
    original tensor bit-exactly.
    """
    t = np.asarray(t)
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(t.ndim)):
        raise ValueError(f"{perm} is not a permutation of 0..{t.ndim - 1}")
    return np.ascontiguousarray(np.transpose(t, perm))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects rank-2 operands")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner extents disagree: {a.shape} x {b.shape}")
    return a @ b


@dataclass(frozen=True)
class SvdResult:
    """Rank-truncated SVD together with the Frobenius norm of the cut part.

    ``s`` is non-negative and non-increasing.  The retained factors satisfy
    ``||u @ diag(s) @ vt - a||_F == discarded_norm`` and the Pythagorean
    split ``||kept||_F^2 + discarded_norm^2 == ||a||_F^2``.
    """

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    discarded_norm: float

    @property
    def rank(self) -> int:
        return int(self.s.size)

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vt


def truncated_svd(a: np.ndarray, max_rank: int) -> SvdResult:
    """Best Frobenius-norm approximation of ``a`` with at most ``max_rank`` terms.

    Keeps ``min(max_rank, numerical_rank)`` singular triplets.  Output is a
    pure function of the input bytes: the LAPACK factorization is made sign
    deterministic by forcing, in each column of ``u``, the entry of largest
    magnitude (lowest index on ties) to be non-negative.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("truncated_svd expects a matrix")
    max_rank = int(max_rank)
    if max_rank < 1:
        raise ValueError(f"max_rank must be >= 1, got {max_rank}")
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite values in SVD input")

    u, s, vt = np.linalg.svd(a, full_matrices=False)
    cutoff = s[0] * max(a.shape) * _EPS if s.size else 0.0
    numerical_rank = int(np.count_nonzero(s > cutoff))
    r = min(max_rank, numerical_rank)
    discarded = float(np.sqrt(np.sum(s[r:] ** 2)))

    u = np.ascontiguousarray(u[:, :r])
    s = np.ascontiguousarray(s[:r])
    vt = np.ascontiguousarray(vt[:r])
    for j in range(r):
        k = int(np.argmax(np.abs(u[:, j])))
        if u[k, j] < 0.0:
            u[:, j] *= -1.0
            vt[j, :] *= -1.0
    return SvdResult(u=u, s=s, vt=vt, discarded_norm=discarded)

"""Dense float64 primitives shared by every other module.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Similarity
computations that later feed ``exp`` operate on unit-norm rows, so the
exponent stays within [-1, 1].
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_matrix",
    "make_rng",
    "softmax_rows",
    "l2_normalize_rows",
    "pairwise_similarity",
]


def as_matrix(m, name: str = "input") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting non-finite entries."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains NaN or Inf")
    return arr


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax with max-subtraction."""
    arr = as_matrix(m)
    if arr.size == 0:
        raise ValueError("empty input")
    shifted = arr - arr.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def l2_normalize_rows(m) -> np.ndarray:
    """Scale each row to unit Euclidean norm; all-zero rows pass through."""
    arr = as_matrix(m)
    norms = np.sqrt(np.einsum("ij,ij->i", arr, arr))
    out = arr.copy()
    nz = norms > 0.0
    out[nz] /= norms[nz, None]
    return out


def pairwise_similarity(a, b) -> np.ndarray:
    """Dot products between every row of ``a`` (n x d) and ``b`` (m x d)."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"dimension mismatch: a has {a.shape[1]} columns, b has {b.shape[1]}"
        )
    # einsum avoids BLAS thread-count dependent reduction order
    return np.einsum("ik,jk->ij", a, b, optimize=False)

"""Plain ndarray activation / similarity primitives with input validation.

These operate on float64 arrays and are the reference semantics for the
tape ops in autograd.py. DenseVector / DenseMatrix are ordinary numpy
float64 arrays (1-D and 2-D, row-major).
"""

from __future__ import annotations

import numpy as np

DenseVector = np.ndarray
DenseMatrix = np.ndarray


def _check_finite(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")


def leaky_relu(x: DenseVector, slope: float = 0.2) -> DenseVector:
    """Elementwise x if x >= 0 else slope*x. slope must be in (0, 1)."""
    if not (0.0 < slope < 1.0):
        raise ValueError(f"slope must be in (0, 1), got {slope}")
    x = np.asarray(x, dtype=np.float64)
    _check_finite("leaky_relu input", x)
    return np.where(x >= 0.0, x, slope * x)


def softmax(x: DenseVector) -> DenseVector:
    """Max-shifted softmax of a 1-D vector; output sums to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("softmax of an empty vector")
    _check_finite("softmax input", x)
    e = np.exp(x - x.max())
    return e / e.sum()


def cosine_sim(u: DenseVector, v: DenseVector) -> float:
    """Cosine similarity u.v / (|u||v|); both vectors must be nonzero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity of a zero-norm vector is undefined")
    return float(u @ v / (nu * nv))

"""Dense float64 linear algebra and statistics shared by every other module.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The
helpers here add the shape checks and numerical conventions the rest of the
package relies on (max-shifted softmax, population standardization with a
zero-variance rule, entrywise norms).
"""

from __future__ import annotations

import numpy as np

from auber.errors import InputError, ShapeError

DTYPE = np.float64


def as_matrix(a) -> np.ndarray:
    """Coerce ``a`` to a 2-D float64 array with at least one row and column."""
    m = np.asarray(a, dtype=DTYPE)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def row_softmax(a) -> np.ndarray:
    """Softmax along the last axis; works on any array with ndim >= 1."""
    a = np.asarray(a, dtype=DTYPE)
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def entrywise_norm(a, p: int = 1) -> float:
    a = np.asarray(a, dtype=DTYPE)
    if p == 1:
        return float(np.abs(a).sum())
    if p == 2:
        return float(np.sqrt((a * a).sum()))
    raise InputError(f"entrywise norm order must be 1 or 2, got {p}")


def standardize(v) -> np.ndarray:
    """Shift to mean 0 and scale to population std 1.

    A constant input (std 0) maps to the all-zero vector.
    """
    v = np.asarray(v, dtype=DTYPE).ravel()
    if v.size < 2:
        raise InputError(f"standardize needs at least 2 entries, got {v.size}")
    centered = v - v.mean()
    sigma = np.sqrt((centered * centered).mean())
    # Relative threshold: identical heads can differ by summation-order rounding.
    if sigma <= 1e-12 * max(1.0, float(np.abs(v).max())):
        return np.zeros_like(v)
    return centered / sigma


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))

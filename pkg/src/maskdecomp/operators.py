"""Finite-difference operators and the proximal/projection primitives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError


@dataclass(frozen=True, eq=False)
class DiffOperator:
    """Sparse forward-difference matrix (R x N) for 1D or row-major 2D signals."""

    matrix: sp.csr_matrix
    signal_shape: tuple

    @property
    def n(self):
        return self.matrix.shape[1]

    @property
    def rows(self):
        return self.matrix.shape[0]

    def __matmul__(self, other):
        return self.matrix @ other

    @property
    def T(self):
        return self.matrix.T


def _d1(n):
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


def diff_1d(n: int) -> DiffOperator:
    if n < 2:
        raise InvalidArgumentError(f"need n >= 2, got {n}")
    return DiffOperator(_d1(n), (n,))


def diff_2d(rows: int, cols: int) -> DiffOperator:
    """D = [Dx; Dy]; Dx differences along each row, Dy along each column.

    No wraparound at the borders.
    """
    if rows < 2 or cols < 2:
        raise InvalidArgumentError(f"need rows, cols >= 2, got {(rows, cols)}")
    dx = sp.kron(sp.identity(rows), _d1(cols))
    dy = sp.kron(_d1(rows), sp.identity(cols))
    return DiffOperator(sp.vstack([dx, dy]).tocsr(), (rows, cols))


def diff_for_shape(shape) -> DiffOperator:
    shape = tuple(shape)
    if len(shape) == 1:
        return diff_1d(shape[0])
    if len(shape) == 2:
        return diff_2d(*shape)
    raise InvalidArgumentError(f"unsupported signal shape {shape}")


def soft_threshold(v, t):
    """Elementwise sign(v) * max(|v| - t, 0)."""
    if t < 0:
        raise InvalidArgumentError(f"threshold must be >= 0, got {t}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def project_box01(v):
    return np.clip(np.asarray(v, dtype=float), 0.0, 1.0)


def project_top_k(v, k: int):
    """Keep the k largest-magnitude entries; ties keep the lowest index."""
    v = np.asarray(v, dtype=float)
    if k < 0:
        raise InvalidArgumentError(f"k must be >= 0, got {k}")
    if k >= v.size:
        return v.copy()
    out = np.zeros_like(v)
    keep = np.argsort(-np.abs(v), kind="stable")[:k]
    out[keep] = v[keep]
    return out


def tv(w, d: DiffOperator) -> float:
    """Anisotropic total variation ||D w||_1."""
    w = np.asarray(w, dtype=float)
    if w.shape != (d.n,):
        raise InvalidArgumentError(f"w has shape {w.shape}, operator expects ({d.n},)")
    return float(np.abs(d.matrix @ w).sum())

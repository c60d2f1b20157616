"""Subspace matrices for the two signal components.

Every constructor returns a :class:`Subspace` whose columns have unit
Euclidean norm.  2D signals are vectorized in row-major (raster) order,
the same convention used by :mod:`maskdecomp.operators`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

KINDS = ("dct2", "hadamard", "sinusoid", "custom")


@dataclass(frozen=True, eq=False)
class Subspace:
    """A basis matrix (N x M) with the shape of the signals it models."""

    matrix: np.ndarray
    signal_shape: tuple
    kind: str = "custom"

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float, copy=True)
        if m.ndim != 2:
            raise InvalidArgumentError("basis matrix must be 2D")
        n, k = m.shape
        if k > n:
            raise InvalidArgumentError(f"basis has more columns ({k}) than rows ({n})")
        shape = tuple(int(s) for s in self.signal_shape)
        if int(np.prod(shape)) != n:
            raise InvalidArgumentError(f"signal shape {shape} does not match {n} rows")
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown basis kind {self.kind!r}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "signal_shape", shape)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def k(self):
        return self.matrix.shape[1]

    def __repr__(self):
        return f"Subspace(kind={self.kind!r}, shape={self.matrix.shape}, signal_shape={self.signal_shape})"


def _zigzag(rows, cols):
    pairs = [(p, q) for p in range(rows) for q in range(cols)]
    pairs.sort(key=lambda pq: (pq[0] + pq[1], pq[0]))
    return pairs


def _dct_vectors(n):
    """Orthonormal 1D DCT-II basis; column f is frequency f."""
    t = np.arange(n)[:, None]
    f = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * t + 1) * f / (2 * n))
    c[:, 0] *= np.sqrt(1.0 / n)
    c[:, 1:] *= np.sqrt(2.0 / n)
    return c


def make_dct2_basis(rows: int, cols: int, k: int) -> Subspace:
    """The ``k`` lowest-frequency 2D DCT-II basis images in zigzag order.

    Columns are ordered by ascending ``p + q`` (vertical + horizontal
    frequency), ties by ascending ``p``.  ``rows == 1`` gives a 1D DCT.
    """
    if rows < 1 or cols < 1:
        raise InvalidArgumentError("rows and cols must be positive")
    if not 1 <= k <= rows * cols:
        raise InvalidArgumentError(f"k must be in [1, {rows * cols}], got {k}")
    vr = _dct_vectors(rows)
    vc = _dct_vectors(cols)
    order = _zigzag(rows, cols)[:k]
    mat = np.empty((rows * cols, k))
    for j, (p, q) in enumerate(order):
        mat[:, j] = np.outer(vr[:, p], vc[:, q]).ravel()
    mat /= np.linalg.norm(mat, axis=0)
    shape = (cols,) if rows == 1 else (rows, cols)
    return Subspace(mat, shape, "dct2")


def dct2_frequencies(rows: int, cols: int, k: int) -> list:
    """(p, q) frequency pairs of the columns returned by make_dct2_basis."""
    return _zigzag(rows, cols)[:k]


def _bit_reverse(value, bits):
    out = 0
    for _ in range(bits):
        out = (out << 1) | (value & 1)
        value >>= 1
    return out


def walsh_index(sequency: int, bits: int) -> int:
    """Natural (Sylvester) Hadamard index of the Walsh function with the given sequency."""
    gray = sequency ^ (sequency >> 1)
    return _bit_reverse(gray, bits)


def hadamard_sequencies(n: int, k: int, select: str = "lowest") -> list:
    """Sequencies picked by make_hadamard_basis.

    ``lowest`` takes 0..k-1; ``spread`` takes floor(j * n / k) for
    j = 0..k-1, i.e. evenly spaced over the whole sequency range.
    """
    if select == "lowest":
        return list(range(k))
    if select == "spread":
        return [j * n // k for j in range(k)]
    raise InvalidArgumentError(f"unknown Hadamard selection {select!r}")


def make_hadamard_basis(n: int, k: int, shape=None, select: str = "lowest") -> Subspace:
    """``k`` columns of the n x n Sylvester Hadamard matrix in ascending sequency.

    By default the lowest-sequency columns; ``select="spread"`` spaces them
    evenly over all sequencies (see :func:`hadamard_sequencies`).  Columns
    are scaled by 1/sqrt(n).  Only the selected columns are built, so
    n = 4096 does not materialize the full matrix.  ``shape`` optionally
    tags the basis as 2D (rows, cols) with rows * cols == n; the columns are
    the same either way.
    """
    if n < 1 or n & (n - 1):
        raise InvalidArgumentError(f"n must be a power of two, got {n}")
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"k must be in [1, {n}], got {k}")
    bits = n.bit_length() - 1
    t = np.arange(n, dtype=np.int64)
    mat = np.empty((n, k))
    for j, s in enumerate(hadamard_sequencies(n, k, select)):
        idx = walsh_index(s, bits)
        parity = np.bitwise_count(t & idx) & 1
        mat[:, j] = 1.0 - 2.0 * parity
    mat /= np.sqrt(n)
    return Subspace(mat, shape or (n,), "hadamard")


def make_sinusoid_basis(n: int, k: int) -> Subspace:
    """Harmonic cos/sin pairs cos(1), sin(1), cos(2), ... without a DC column."""
    if k % 2 or not 2 <= k <= n - 1:
        raise InvalidArgumentError(f"k must be even and in [2, {n - 1}], got {k}")
    t = np.arange(n)
    cols = []
    for q in range(1, k // 2 + 1):
        arg = 2 * np.pi * q * t / n
        cols.append(np.cos(arg))
        cols.append(np.sin(arg))
    mat = np.column_stack(cols)
    mat /= np.linalg.norm(mat, axis=0)
    return Subspace(mat, (n,), "sinusoid")


def make_custom_basis(matrix, signal_shape=None) -> Subspace:
    """Wrap a user matrix, unit-normalizing its columns."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if m.shape[0] == 1 and m.shape[1] > 1 and signal_shape is None:
        m = m.T
    norms = np.linalg.norm(m, axis=0)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise InvalidArgumentError("basis columns must be finite and nonzero")
    return Subspace(m / norms, signal_shape or (m.shape[0],), "custom")


def make_basis(kind: str, shape, k: int) -> Subspace:
    """Dispatch by kind name; ``shape`` is (n,) or (rows, cols).

    ``hadamard-spread`` selects evenly spaced sequencies.
    """
    shape = tuple(shape)
    n = int(np.prod(shape))
    if kind == "dct2":
        if len(shape) == 1:
            return make_dct2_basis(1, shape[0], k)
        return make_dct2_basis(shape[0], shape[1], k)
    if kind == "hadamard":
        return make_hadamard_basis(n, k, shape)
    if kind == "hadamard-spread":
        return make_hadamard_basis(n, k, shape, select="spread")
    if kind == "sinusoid":
        if len(shape) != 1:
            raise InvalidArgumentError("sinusoid basis is 1D only")
        return make_sinusoid_basis(n, k)
    raise InvalidArgumentError(f"unknown basis kind {kind!r}")

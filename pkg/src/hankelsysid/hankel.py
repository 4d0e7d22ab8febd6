"""Hankel and weighted-Hankel maps on block impulse responses.

Layout
------
An impulse response over Hankel half-size ``n`` holds ``2n-1`` Markov
parameter blocks, each ``m x p``. It is stored as an array of shape
``(2n-1, m, p)`` with ``blocks[j]`` equal to ``h_{j+1} = C A^j B``. This is the
single canonical layout used by every module; the regression layout used by
the estimators (``((2n-1)p, m)``) is obtained with
:meth:`ImpulseResponse.as_matrix`.

The Hankel map places ``h_{i+l-1}`` in block ``(i, l)`` of an ``mn x pn``
matrix. Block ``j`` of the impulse response appears on antidiagonal ``j``
exactly ``min(j, 2n-j)`` times, which is why the shaping weights are the
square roots of those multiplicities.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import InvalidDimensionError

MAX_HALF_SIZE = 512


@dataclass(frozen=True, eq=False)
class ImpulseResponse:
    """First ``2n-1`` Markov parameters of an LTI system.

    ``blocks`` may be given as a 1-D sequence for the scalar case; it is
    copied, promoted to shape ``(2n-1, m, p)`` and frozen.
    """

    blocks: np.ndarray

    def __post_init__(self):
        b = np.array(self.blocks, dtype=float)
        if b.ndim == 1:
            b = b[:, None, None]
        if b.ndim != 3:
            raise InvalidDimensionError(f"blocks must be 1-D or 3-D, got shape {b.shape}")
        if b.shape[0] % 2 != 1:
            raise InvalidDimensionError(
                f"number of blocks must be 2n-1 (odd), got {b.shape[0]}"
            )
        if b.shape[1] < 1 or b.shape[2] < 1:
            raise InvalidDimensionError(f"empty block shape {b.shape[1:]}")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)

    @property
    def n(self) -> int:
        return (self.blocks.shape[0] + 1) // 2

    @property
    def m(self) -> int:
        return self.blocks.shape[1]

    @property
    def p(self) -> int:
        return self.blocks.shape[2]

    @property
    def geometry(self) -> tuple[int, int, int]:
        return self.n, self.m, self.p

    @classmethod
    def zeros(cls, n: int, m: int = 1, p: int = 1) -> "ImpulseResponse":
        return cls(np.zeros((2 * n - 1, m, p)))

    @classmethod
    def from_matrix(cls, mat, n: int, p: int = 1) -> "ImpulseResponse":
        """Build from the regression layout ``((2n-1)p, m)`` (or a flat vector for m=1)."""
        mat = np.asarray(mat, dtype=float)
        if mat.ndim == 1:
            mat = mat[:, None]
        if mat.shape[0] != (2 * n - 1) * p:
            raise InvalidDimensionError(
                f"expected {(2 * n - 1) * p} rows for n={n}, p={p}, got {mat.shape[0]}"
            )
        m = mat.shape[1]
        return cls(mat.reshape(2 * n - 1, p, m).transpose(0, 2, 1))

    def as_matrix(self) -> np.ndarray:
        """Regression layout: row ``j*p + c``, column ``r`` holds ``blocks[j, r, c]``."""
        n, m, p = self.geometry
        return self.blocks.transpose(0, 2, 1).reshape((2 * n - 1) * p, m)

    def channel(self, r: int) -> "ImpulseResponse":
        """Single-output impulse response of output channel ``r``."""
        return ImpulseResponse(self.blocks[:, r : r + 1, :])

    def __sub__(self, other: "ImpulseResponse") -> "ImpulseResponse":
        if not isinstance(other, ImpulseResponse):
            return NotImplemented
        _check_same_geometry(self, other)
        return ImpulseResponse(self.blocks - other.blocks)

    def __add__(self, other: "ImpulseResponse") -> "ImpulseResponse":
        if not isinstance(other, ImpulseResponse):
            return NotImplemented
        _check_same_geometry(self, other)
        return ImpulseResponse(self.blocks + other.blocks)

    def __repr__(self) -> str:
        n, m, p = self.geometry
        return f"ImpulseResponse(n={n}, m={m}, p={p})"


BlockLike = Union[ImpulseResponse, np.ndarray]


def _check_same_geometry(a: ImpulseResponse, b: ImpulseResponse) -> None:
    if a.geometry != b.geometry:
        raise InvalidDimensionError(f"geometry mismatch: {a.geometry} vs {b.geometry}")


def as_blocks(h: BlockLike) -> np.ndarray:
    """Return ``h`` as a ``(2n-1, m, p)`` float array without copying when possible."""
    if isinstance(h, ImpulseResponse):
        return h.blocks
    b = np.asarray(h, dtype=float)
    if b.ndim == 1:
        b = b[:, None, None]
    elif b.ndim != 3:
        raise InvalidDimensionError(f"block vector must be 1-D or 3-D, got shape {b.shape}")
    if b.shape[0] % 2 != 1:
        raise InvalidDimensionError(f"number of blocks must be odd, got {b.shape[0]}")
    return b


@dataclass(frozen=True, eq=False)
class ShapingWeights:
    """Input-shaping weights ``k_j = sqrt(min(j, 2n-j))`` for ``j = 1..2n-1``."""

    n: int
    k: np.ndarray

    def __len__(self) -> int:
        return len(self.k)


def _check_half_size(n: int) -> int:
    if int(n) != n or n < 1:
        raise InvalidDimensionError(f"half-size n must be a positive integer, got {n!r}")
    if n > MAX_HALF_SIZE:
        raise InvalidDimensionError(f"half-size n={n} exceeds the cap {MAX_HALF_SIZE}")
    return int(n)


def antidiagonal_multiplicity(n: int) -> np.ndarray:
    """Number of block positions ``(i, l)`` with ``i + l - 1 = j``, for ``j = 1..2n-1``."""
    n = _check_half_size(n)
    j = np.arange(1, 2 * n)
    return np.minimum(j, 2 * n - j)


def shaping_weights(n: int) -> ShapingWeights:
    k = np.sqrt(antidiagonal_multiplicity(n).astype(float))
    k.setflags(write=False)
    return ShapingWeights(n=int(n), k=k)


def _weights_array(k, n: int) -> np.ndarray:
    arr = k.k if isinstance(k, ShapingWeights) else np.asarray(k, dtype=float)
    if arr.shape != (2 * n - 1,):
        raise InvalidDimensionError(
            f"shaping weights have length {arr.shape}, expected {2 * n - 1}"
        )
    return arr


@lru_cache(maxsize=128)
def _antidiagonal_index(n: int) -> np.ndarray:
    idx = np.add.outer(np.arange(n), np.arange(n))
    idx.setflags(write=False)
    return idx


def hankel_map(h: BlockLike) -> np.ndarray:
    """Block Hankel matrix of shape ``(mn, pn)`` whose block ``(i, l)`` is ``h_{i+l-1}``."""
    b = as_blocks(h)
    n = _check_half_size((b.shape[0] + 1) // 2)
    m, p = b.shape[1:]
    blk = b[_antidiagonal_index(n)]  # (n, n, m, p)
    return blk.transpose(0, 2, 1, 3).reshape(n * m, n * p)


def hankel_adjoint(M, n: int, m: int = 1, p: int = 1) -> np.ndarray:
    """Adjoint of :func:`hankel_map`: block sums along each antidiagonal.

    Returns an array of shape ``(2n-1, m, p)``.
    """
    n = _check_half_size(n)
    M = np.asarray(M, dtype=float)
    if M.shape != (n * m, n * p):
        raise InvalidDimensionError(
            f"matrix shape {M.shape} does not match (mn, pn) = {(n * m, n * p)}"
        )
    blk = M.reshape(n, m, n, p).transpose(0, 2, 1, 3).reshape(n * n, m * p)
    idx = _antidiagonal_index(n).ravel()
    out = np.empty((2 * n - 1, m * p))
    for c in range(m * p):
        out[:, c] = np.bincount(idx, weights=blk[:, c], minlength=2 * n - 1)
    return out.reshape(2 * n - 1, m, p)


def weighted_hankel_map(beta: BlockLike, k) -> np.ndarray:
    """``G(beta) = H(K^{-1} beta)``; an isometry from block vectors to matrices."""
    b = as_blocks(beta)
    n = (b.shape[0] + 1) // 2
    kk = _weights_array(k, n)
    return hankel_map(b / kk[:, None, None])


def weighted_hankel_adjoint(M, k, m: int = 1, p: int = 1) -> np.ndarray:
    """Adjoint of :func:`weighted_hankel_map`; ``G* G`` is the identity."""
    kk = np.asarray(k.k if isinstance(k, ShapingWeights) else k, dtype=float)
    n = (len(kk) + 1) // 2
    return hankel_adjoint(M, n, m, p) / kk[:, None, None]


def numerical_rank(M_or_sv, rel_tol: float = 1e-8) -> int:
    """Count singular values with ``s_i / s_1 > rel_tol``.

    Accepts either a matrix or an already computed 1-D spectrum.
    """
    a = np.asarray(M_or_sv, dtype=float)
    sv = a if a.ndim == 1 else np.linalg.svd(a, compute_uv=False)
    if sv.size == 0 or sv.max() == 0.0:
        return 0
    return int(np.sum(sv / sv.max() > rel_tol))

"""Ho-Kalman realization and order detection from the Hankel spectrum."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, InvalidDimensionError
from .hankel import ImpulseResponse, hankel_map, numerical_rank
from .lti import StateSpace, impulse_response

SIGNIFICANCE = 1e-6


@dataclass(frozen=True, eq=False)
class RealizationResult:
    sys: StateSpace
    order_used: int
    singular_values: np.ndarray
    reconstruction_error: float
    rank_exceeded: bool = False


@dataclass(frozen=True)
class OrderEstimate:
    order: int
    gap_ratio: float
    low_confidence: bool


def hankel_spectrum(h: ImpulseResponse) -> np.ndarray:
    """Singular values of the block Hankel matrix, largest first."""
    return np.linalg.svd(hankel_map(h), compute_uv=False)


def detect_order(sv, gap_ratio_threshold: float = 10.0) -> OrderEstimate:
    """Pick the order at the largest ratio between consecutive singular values.

    Only values above ``1e-6`` times the largest one take part. When the best
    ratio is below ``gap_ratio_threshold`` the number of significant values
    is returned with ``low_confidence`` set. This is a heuristic.
    """
    sv = np.asarray(sv, dtype=float)
    if sv.ndim != 1 or sv.size == 0:
        raise DomainError("spectrum must be a non-empty vector")
    if np.any(np.diff(sv) > 1e-12 * max(sv[0], 1.0)):
        raise DomainError("spectrum must be non-increasing")
    if sv[0] <= 0:
        return OrderEstimate(0, float("inf"), True)
    signif = int(np.sum(sv / sv[0] > SIGNIFICANCE))
    # ratios sv_i / sv_{i+1} for significant i; a zero successor is an infinite gap
    nxt = sv[1 : signif + 1]
    head = sv[: nxt.size]
    with np.errstate(divide="ignore"):
        ratios = np.where(nxt > 0, head / np.where(nxt > 0, nxt, 1.0), np.inf)
    if ratios.size == 0:
        return OrderEstimate(signif, float("inf"), False)
    i = int(np.argmax(ratios))
    best = float(ratios[i])
    if best >= gap_ratio_threshold:
        return OrderEstimate(i + 1, best, False)
    return OrderEstimate(signif, best, True)


def ho_kalman(h: ImpulseResponse, R: int, D: Optional[np.ndarray] = None) -> RealizationResult:
    """Balanced rank-``R`` realization from the Markov parameters.

    The ``n x n`` block Hankel matrix of ``h_1 .. h_{2n-1}`` is truncated to
    rank ``R``; the observability factor is ``U S^{1/2}`` and the state
    matrix is solved from its shift. ``D`` is not identifiable from the
    Markov parameters and defaults to zero.
    """
    n, m, p = h.geometry
    if not 1 <= R <= n - 1:
        raise InvalidDimensionError(f"order must satisfy 1 <= R <= n-1 = {n - 1}, got {R}")
    Hm = hankel_map(h)
    U, s, Vt = np.linalg.svd(Hm)
    sq = np.sqrt(s[:R])
    O = U[:, :R] * sq
    Q = sq[:, None] * Vt[:R]
    C = O[:m]
    B = Q[:, :p]
    A = np.linalg.lstsq(O[:-m], O[m:], rcond=None)[0]
    Dm = np.zeros((m, p)) if D is None else np.asarray(D, dtype=float).reshape(m, p)
    sys = StateSpace(A, B, C, Dm)
    err = float(np.linalg.norm(impulse_response(sys, n).blocks - h.blocks))
    return RealizationResult(
        sys=sys,
        order_used=R,
        singular_values=s,
        reconstruction_error=err,
        rank_exceeded=bool(R > numerical_rank(s)),
    )

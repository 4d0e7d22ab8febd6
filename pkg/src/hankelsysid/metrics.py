from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidDimensionError, UnsupportedGeometryError
from .hankel import ImpulseResponse, as_blocks, hankel_map


@dataclass(frozen=True)
class ErrorReport:
    ir_error: float
    hankel_spectral_error: float
    sandwich_ok: bool
    predicted_rate: Optional[float] = None


@dataclass(frozen=True)
class SandwichCheck:
    ok: bool
    frobenius: float
    spectral: float
    lower: float
    upper: float


def _diff(h_hat: ImpulseResponse, h: ImpulseResponse) -> ImpulseResponse:
    if h_hat.geometry != h.geometry:
        raise InvalidDimensionError(f"geometry mismatch: {h_hat.geometry} vs {h.geometry}")
    return h_hat - h


def ir_error(h_hat: ImpulseResponse, h: ImpulseResponse) -> float:
    return float(np.linalg.norm(_diff(h_hat, h).blocks))


def hankel_spectral_error(h_hat: ImpulseResponse, h: ImpulseResponse) -> float:
    return float(np.linalg.norm(hankel_map(_diff(h_hat, h)), 2))


def check_norm_sandwich(d: ImpulseResponse, rtol: float = 1e-12) -> SandwichCheck:
    """Check ``||d||_F / sqrt(2 q) <= ||H(d)|| <= sqrt(n) ||d||_F`` with ``q = min(m, p)``.

    The first and last block columns (or rows) of the Hankel matrix hold
    every block and have rank at most ``q``, which gives the lower bound.
    For single-input or single-output systems ``q = 1``.
    """
    fro = float(np.linalg.norm(d.blocks))
    spec = float(np.linalg.norm(hankel_map(d), 2))
    lo, hi = fro / np.sqrt(2 * min(d.m, d.p)), np.sqrt(d.n) * fro
    slack = rtol * max(fro, 1e-300)
    return SandwichCheck(bool(lo - slack <= spec <= hi + slack), fro, spec, lo, hi)


def error_report(h_hat: ImpulseResponse, h: ImpulseResponse, predicted_rate=None) -> ErrorReport:
    chk = check_norm_sandwich(_diff(h_hat, h))
    return ErrorReport(chk.frobenius, chk.spectral, chk.ok, predicted_rate)


def ls_rate(sigma_z: float, m: int, n: int, p: int, T: int, C: float = 1.0) -> float:
    """Least-squares spectral rate ``C sigma_z sqrt(mnp/T) max(log(np), 1)``."""
    return float(C * sigma_z * np.sqrt(m * n * p / T) * max(np.log(n * p), 1.0))


def effective_rank(R: int, n: int) -> float:
    """``min(R^2 log^2 n, n)``."""
    return float(min(R**2 * np.log(n) ** 2, n))


def hnn_rate(sigma: float, R: int, n: int, p: int, T: int, C: float = 1.0) -> tuple[float, str]:
    """Regularized spectral rate and the sample-size regime it applies to.

    ``sigma = 1/sqrt(snr)``. Returns ``(value, regime)`` with regime one of
    ``"large-T"``, ``"small-T"`` or ``"below-theory"`` (``T < R``).
    """
    base = C * sigma * np.sqrt(n * p / T) * np.log(n)
    if T < R:
        return float(np.sqrt(R) * base), "below-theory"
    if T >= effective_rank(R, n):
        return float(base), "large-T"
    return float(np.sqrt(R) * base), "small-T"


def circulant_spectral_bound(d, n: Optional[int] = None) -> float:
    """Largest DFT magnitude of the length-``2n-1`` scalar block vector.

    The Hankel matrix of ``d`` is a submatrix of a circulant matrix whose
    eigenvalues are the DFT of ``d``, so this dominates ``||H(d)||``.
    """
    b = as_blocks(d)
    if b.shape[1:] != (1, 1):
        raise UnsupportedGeometryError("the circulant bound is defined for scalar systems only")
    if n is not None and b.shape[0] != 2 * n - 1:
        raise InvalidDimensionError(f"expected {2 * n - 1} blocks, got {b.shape[0]}")
    return float(np.max(np.abs(np.fft.fft(b[:, 0, 0]))))


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])

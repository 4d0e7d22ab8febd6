"""State-space simulation and the two data-acquisition models.

Time indexing
-------------
Arrays are 0-based in time. ``simulate`` starts from ``x[0] = 0`` and returns
``y[t] = C x[t] + D u[t]``, so the Markov parameter ``h_1 = CB`` reaches the
output one step after the input that excites it. ``convolve_output`` is the
plain convolution ``y[t] = sum_j h_{j+1} u[t-j]`` over the stored blocks; for
a system without feedthrough it equals the simulated output one step later.

A window regressor for an output at stream index ``q`` holds the inputs
``u[q-delay], u[q-delay-1], ..., u[q-delay-2n+2]`` (newest first), so that a
row times ``ImpulseResponse.as_matrix()`` is the FIR prediction of ``y[q]``.
``delay=1`` (the default) matches the state recursion. The feedthrough ``D``
never enters the Hankel matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError, InvalidDimensionError
from .hankel import ImpulseResponse, _check_half_size, shaping_weights

MULTI_ROLLOUT = "multi_rollout"
SINGLE_ROLLOUT = "single_rollout"


def _as_2d(x, name: str) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise InvalidDimensionError(f"{name} must be a matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Discrete-time realization ``x+ = Ax + Bu, y = Cx + Du``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: Optional[np.ndarray] = None

    def __post_init__(self):
        A = _as_2d(self.A, "A")
        B = _as_2d(self.B, "B")
        C = _as_2d(self.C, "C")
        R = A.shape[0]
        if A.shape != (R, R):
            raise InvalidDimensionError(f"A must be square, got {A.shape}")
        if np.asarray(self.B).ndim == 1:
            B = B.reshape(R, -1)
        if np.asarray(self.C).ndim == 1:
            C = C.reshape(-1, R)
        if B.shape[0] != R:
            raise InvalidDimensionError(f"B has {B.shape[0]} rows, expected {R}")
        if C.shape[1] != R:
            raise InvalidDimensionError(f"C has {C.shape[1]} columns, expected {R}")
        m, p = C.shape[0], B.shape[1]
        D = np.zeros((m, p)) if self.D is None else _as_2d(self.D, "D")
        if D.shape != (m, p):
            raise InvalidDimensionError(f"D has shape {D.shape}, expected {(m, p)}")
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    @property
    def is_stable(self) -> bool:
        return self.spectral_radius < 1.0


@dataclass(frozen=True, eq=False)
class RolloutData:
    """Regressors ``U`` (T x (2n-1)p) and outputs ``y`` (T x m).

    ``time_index`` holds, for each row, the stream index of the output
    sample (single rollout) or the rollout number (multi rollout). It is used
    to check that training and validation samples do not overlap.
    """

    regressors: np.ndarray
    outputs: np.ndarray
    mode: str
    shaped: bool
    sigma_z: float
    seed: Optional[int]
    n: int
    p: int
    m: int
    time_index: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        U = np.array(self.regressors, dtype=float)
        y = np.array(self.outputs, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if U.ndim != 2 or y.ndim != 2:
            raise InvalidDimensionError("regressors and outputs must be 2-D")
        if U.shape[1] != (2 * self.n - 1) * self.p:
            raise InvalidDimensionError(
                f"regressors have {U.shape[1]} columns, expected {(2 * self.n - 1) * self.p}"
            )
        if y.shape != (U.shape[0], self.m):
            raise InvalidDimensionError(
                f"outputs have shape {y.shape}, expected {(U.shape[0], self.m)}"
            )
        if self.mode not in (MULTI_ROLLOUT, SINGLE_ROLLOUT):
            raise ValueError(f"unknown acquisition mode {self.mode!r}")
        U.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "regressors", U)
        object.__setattr__(self, "outputs", y)
        if self.time_index is not None:
            ti = np.array(self.time_index, dtype=np.int64)
            if ti.shape != (U.shape[0],):
                raise InvalidDimensionError("time_index must have one entry per row")
            ti.setflags(write=False)
            object.__setattr__(self, "time_index", ti)

    @property
    def T(self) -> int:
        return self.regressors.shape[0]

    def subset(self, rows) -> "RolloutData":
        """Rows ``rows`` of the data set, keeping the metadata."""
        rows = np.asarray(rows)
        ti = None if self.time_index is None else self.time_index[rows]
        return RolloutData(
            self.regressors[rows], self.outputs[rows], self.mode, self.shaped,
            self.sigma_z, self.seed, self.n, self.p, self.m, ti,
        )


def impulse_response(sys: StateSpace, n: int) -> ImpulseResponse:
    """Markov parameters ``CB, CAB, ..., CA^{2n-2}B`` (feedthrough excluded)."""
    n = _check_half_size(n)
    blocks = np.empty((2 * n - 1, sys.m, sys.p))
    CA = sys.C.copy()
    for j in range(2 * n - 1):
        blocks[j] = CA @ sys.B
        CA = CA @ sys.A
    return ImpulseResponse(blocks)


def _as_series(x, width: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[1] != width:
        raise InvalidDimensionError(f"{name} must have {width} channel(s), got shape {np.shape(x)}")
    return a


def simulate(sys: StateSpace, u, z=None) -> np.ndarray:
    """Run the state recursion from a zero initial state.

    Returns an array of shape ``(L, m)`` with ``y[t] = C x[t] + D u[t] + z[t]``.
    """
    u = _as_series(u, sys.p, "u")
    L = u.shape[0]
    y = np.empty((L, sys.m))
    x = np.zeros(sys.order)
    for t in range(L):
        y[t] = sys.C @ x + sys.D @ u[t]
        x = sys.A @ x + sys.B @ u[t]
    if z is not None:
        y += _noise_series(z, L, sys.m)
    return y


def _noise_series(z, L: int, m: int) -> np.ndarray:
    z = _as_series(z, m, "z")
    if z.shape[0] != L:
        raise InvalidDimensionError(f"noise has length {z.shape[0]}, expected {L}")
    return z


def convolve_output(h: ImpulseResponse, u, z=None) -> np.ndarray:
    """FIR output ``y[t] = sum_j h_{j+1} u[t-j]`` using only the stored blocks."""
    u = _as_series(u, h.p, "u")
    L = u.shape[0]
    y = np.zeros((L, h.m))
    for j in range(min(len(h.blocks), L)):
        y[j:] += u[: L - j] @ h.blocks[j].T
    if z is not None:
        y += _noise_series(z, L, h.m)
    return y


def window_regressors(u, n: int, out_index, delay: int = 1) -> np.ndarray:
    """Sliding-window regressor rows for outputs at stream indices ``out_index``.

    Row ``i`` is ``[u[q-delay], ..., u[q-delay-2n+2]]`` flattened with
    ``q = out_index[i]``, each entry a ``p``-vector.
    """
    n = _check_half_size(n)
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    q = np.asarray(out_index, dtype=np.int64)
    start = q - delay - (2 * n - 2)
    if q.size and (start.min() < 0 or (q - delay).max() >= u.shape[0]):
        raise InvalidDimensionError(
            f"input stream of length {u.shape[0]} too short for n={n} at the requested outputs"
        )
    win = sliding_window_view(u, 2 * n - 1, axis=0)  # (L-2n+2, p, 2n-1)
    rows = win[start][:, :, ::-1]  # newest first
    return np.ascontiguousarray(rows.transpose(0, 2, 1)).reshape(q.size, -1)


def gen_multi_rollout(
    h: ImpulseResponse,
    T: int,
    shaped: bool = True,
    sigma_z: float = 0.0,
    seed: Optional[int] = 0,
) -> RolloutData:
    """Independent restarts, each observed once after ``2n-1`` input steps.

    The regressor row is the rollout's input sequence in reverse time order.
    Shaped inputs draw the block multiplying ``h_j`` with variance ``k_j^2``.
    """
    if T < 1:
        raise InvalidDimensionError(f"T must be at least 1, got {T}")
    if sigma_z < 0:
        raise DomainError("sigma_z must be non-negative")
    n, m, p = h.geometry
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((T, (2 * n - 1) * p))
    if shaped:
        U *= np.repeat(shaping_weights(n).k, p)
    noise = rng.standard_normal((T, m))
    y = U @ h.as_matrix()
    if sigma_z > 0:
        y += sigma_z * noise
    return RolloutData(U, y, MULTI_ROLLOUT, bool(shaped), float(sigma_z), seed, n, p, m,
                       np.arange(T))


def single_rollout_stream(
    source: Union[ImpulseResponse, StateSpace],
    length: int,
    sigma_z: float = 0.0,
    seed: Optional[int] = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """One iid Gaussian input stream and its (noisy) output stream.

    Returns ``(u, y)`` of shapes ``(length, p)`` and ``(length, m)``. A
    :class:`StateSpace` source is run through the full state recursion; an
    :class:`ImpulseResponse` source through the lag-one FIR filter.
    """
    if sigma_z < 0:
        raise DomainError("sigma_z must be non-negative")
    m, p = source.m, source.p
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((length, p))
    noise = rng.standard_normal((length, m))
    if isinstance(source, StateSpace):
        y = simulate(source, u)
    else:
        y = np.zeros((length, m))
        y[1:] = convolve_output(source, u[:-1])
    if sigma_z > 0:
        y += sigma_z * noise
    return u, y


def gen_single_rollout(
    source: Union[ImpulseResponse, StateSpace],
    T: int,
    sigma_z: float = 0.0,
    seed: Optional[int] = 0,
    n: Optional[int] = None,
) -> RolloutData:
    """One continuous iid Gaussian input stream observed at ``T`` consecutive times.

    When ``source`` is a :class:`StateSpace` the outputs come from the full
    state recursion, so the FIR truncation error is present in ``y``;
    ``n`` must then be given. For an :class:`ImpulseResponse` the FIR model
    is exact. The stream has ``2n + T - 1`` samples and the first output
    used is at index ``2n - 1``.
    """
    if T < 1:
        raise InvalidDimensionError(f"T must be at least 1, got {T}")
    if isinstance(source, StateSpace):
        if n is None:
            raise InvalidDimensionError("n is required when simulating a state-space system")
        n = _check_half_size(n)
    else:
        n = source.n
    u, y = single_rollout_stream(source, 2 * n + T - 1, sigma_z, seed)
    return stream_to_rollout(u, y, n, np.arange(2 * n - 1, 2 * n + T - 1), sigma_z=sigma_z, seed=seed)


def stream_to_rollout(
    u, y, n: int, out_index, delay: int = 1, sigma_z: float = float("nan"), seed: Optional[int] = None
) -> RolloutData:
    """Single-rollout regression problem for the outputs at ``out_index``."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != u.shape[0]:
        raise InvalidDimensionError("input and output streams differ in length")
    q = np.asarray(out_index, dtype=np.int64)
    U = window_regressors(u, n, q, delay=delay)
    return RolloutData(U, y[q], SINGLE_ROLLOUT, False, float(sigma_z), seed, n,
                       u.shape[1], y.shape[1], q)


def random_system(
    R: int,
    p: int = 1,
    m: int = 1,
    rho_target: float = 0.9,
    seed: Optional[int] = 0,
) -> StateSpace:
    """Random order-``R`` system whose state matrix has spectral radius ``rho_target``."""
    if R < 1 or p < 1 or m < 1:
        raise InvalidDimensionError(f"R, p, m must be positive, got {(R, p, m)}")
    if not 0 < rho_target < 1:
        raise DomainError(f"rho_target must lie in (0, 1), got {rho_target}")
    rng = np.random.default_rng(seed)
    if R == 1:
        A = np.array([[rho_target]])
    else:
        A = rng.standard_normal((R, R))
        A *= rho_target / np.max(np.abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((R, p))
    C = rng.standard_normal((m, R))
    return StateSpace(A, B, C)


def input_power(n: int, p: int, shaped: bool) -> float:
    """Expected ``||u||^2 / n`` for one length-``(2n-1)`` input window."""
    # sum_j min(j, 2n-j) over j = 1..2n-1 equals n^2
    return float(n * p) if shaped else (2 * n - 1) * p / n


def snr(data: RolloutData) -> float:
    """Population signal-to-noise ratio ``E[||u||^2/n] / E[||z||^2]``."""
    if data.sigma_z == 0:
        return float("inf")
    return input_power(data.n, data.p, data.shaped) / (data.m * data.sigma_z**2)


def sigma_from_snr(s: float) -> float:
    """Effective noise level ``1/sqrt(snr)`` used by the rate formulas."""
    if s <= 0:
        raise DomainError(f"snr must be positive, got {s}")
    return 0.0 if np.isinf(s) else 1.0 / np.sqrt(s)


def noise_std_for_snr(s: float, n: int, p: int = 1, m: int = 1, shaped: bool = True) -> float:
    """Output-noise standard deviation that yields population snr ``s``."""
    if s <= 0:
        raise DomainError(f"snr must be positive, got {s}")
    if np.isinf(s):
        return 0.0
    return float(np.sqrt(input_power(n, p, shaped) / (m * s)))


def truncation_error_bound(rho: float, n: int) -> float:
    """Tail size ``rho^{2n} / (1 - rho^n)`` of a pole-``rho`` impulse response."""
    if not 0 <= rho < 1:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    n = _check_half_size(n)
    return rho ** (2 * n) / (1 - rho**n)

"""Least-squares and Hankel-nuclear-norm estimators.

Both nuclear-norm solvers use ADMM with the splitting ``M = L(x)``, where
``L`` is the Hankel map (plain coordinates, ``x = h``) or the weighted map
(shaped coordinates, ``x = K h``). In either case ``L* L`` is diagonal, so
the ``x``-update is a single pre-factored positive definite solve.

Scaling of the penalty
----------------------
The loss is the raw ``0.5 * ||U h - y||_F^2``. The theoretical rule in
:func:`default_lambda` is stated for regressors with ``N(0, 1/T)`` entries;
the equivalent weight for the raw loss is ``T`` times larger, which is what
:func:`data_lambda` returns.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .errors import DomainError, InvalidDimensionError, UnsupportedGeometryError
from .hankel import (
    ImpulseResponse,
    antidiagonal_multiplicity,
    hankel_adjoint,
    hankel_map,
    shaping_weights,
)
from .lti import RolloutData

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SolverOptions:
    """ADMM settings.

    ``rho=None`` selects the default penalty (``lam`` for the penalized
    problem, a data-scaled value for the constrained one).
    ``use_shaped_variable=None`` follows ``data.shaped``.
    """

    lam: float = 0.0
    rho: Optional[float] = None
    max_iter: int = 5000
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    use_shaped_variable: Optional[bool] = None

    def __post_init__(self):
        if self.lam < 0 or not np.isfinite(self.lam):
            raise DomainError(f"lambda must be finite and non-negative, got {self.lam}")
        if self.rho is not None and not self.rho > 0:
            raise DomainError(f"rho must be positive, got {self.rho}")
        if self.max_iter < 1:
            raise DomainError("max_iter must be at least 1")
        if not (self.tol_primal > 0 and self.tol_dual > 0):
            raise DomainError("tolerances must be positive")


@dataclass(frozen=True, eq=False)
class SolveResult:
    h_hat: ImpulseResponse
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    objective: float
    rank_deficient: bool = False
    method: str = ""


def svt(M, tau: float) -> np.ndarray:
    """Singular value soft-thresholding, the prox of ``tau * ||.||_*``."""
    if tau < 0:
        raise DomainError(f"threshold must be non-negative, got {tau}")
    M = np.asarray(M, dtype=float)
    if tau == 0:
        return M.copy()
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    r = int(np.count_nonzero(s))
    return (U[:, :r] * s[:r]) @ Vt[:r]


def nuclear_norm(M) -> float:
    return float(np.sum(np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)))


def objective(h: ImpulseResponse, data: RolloutData, lam: float) -> float:
    """``0.5 * ||U h - y||_F^2 + lam * ||H(h)||_*``."""
    _check_geometry(h, data)
    r = data.regressors @ h.as_matrix() - data.outputs
    val = 0.5 * float(np.sum(r * r))
    if lam:
        val += lam * nuclear_norm(hankel_map(h))
    return val


def default_lambda(sigma: float, p: int, n: int, T: int, C: float = 1.0) -> float:
    """Theoretical weight ``C sigma sqrt(p n / T) log n`` (normalized regressors)."""
    return float(C * sigma * np.sqrt(p * n / T) * np.log(n))


def data_lambda(data: RolloutData, sigma: float, C: float = 1.0) -> float:
    """:func:`default_lambda` rescaled to the raw loss used by :func:`solve_hnn`."""
    return data.T * default_lambda(sigma, data.p, data.n, data.T, C)


def _check_geometry(h: ImpulseResponse, data: RolloutData) -> None:
    if h.geometry != (data.n, data.m, data.p):
        raise InvalidDimensionError(
            f"estimate geometry {h.geometry} does not match data {(data.n, data.m, data.p)}"
        )


def solve_ols(data: RolloutData) -> SolveResult:
    """Minimum-norm least squares ``h = pinv(U) y`` via LAPACK ``gelsd``."""
    U, y = data.regressors, data.outputs
    sol, _, rank, _ = sla.lstsq(U, y, lapack_driver="gelsd")
    h = ImpulseResponse.from_matrix(sol, data.n, data.p)
    return SolveResult(
        h_hat=h,
        iterations=0,
        primal_residual=0.0,
        dual_residual=0.0,
        converged=True,
        objective=objective(h, data, 0.0),
        rank_deficient=bool(rank < min(U.shape)),
        method="ols",
    )


class _Splitting:
    """Linear map ``L(x) = H(x / w)`` for one input geometry, with ``L* L = diag(c / w^2)``."""

    def __init__(self, n: int, p: int, w: np.ndarray):
        self.n, self.p = n, p
        self.w = np.repeat(w, p)  # per regression row
        self.wb = w[:, None, None]
        self.gram_diag = np.repeat(antidiagonal_multiplicity(n) / w**2, p)

    def fwd(self, x: np.ndarray) -> np.ndarray:
        # x in regression layout ((2n-1)p,), single output channel
        b = (x / self.w).reshape(2 * self.n - 1, 1, self.p)
        return hankel_map(b)

    def adj(self, M: np.ndarray) -> np.ndarray:
        b = hankel_adjoint(M, self.n, 1, self.p) / self.wb
        return b.reshape(-1)


def _use_shaped(data: RolloutData, opts: SolverOptions) -> bool:
    return data.shaped if opts.use_shaped_variable is None else bool(opts.use_shaped_variable)


def _weights(data: RolloutData, shaped: bool) -> np.ndarray:
    return shaping_weights(data.n).k if shaped else np.ones(2 * data.n - 1)


def solve_hnn(data: RolloutData, opts: SolverOptions) -> SolveResult:
    """Approximate minimizer of ``0.5 ||U h - y||_F^2 + lam ||H(h)||_*``.

    Multi-output data are solved one output channel at a time. A zero
    ``lam`` solves the normal equations by Cholesky, falling back to
    :func:`solve_ols` when the Gram matrix is not positive definite.
    """
    lam = opts.lam
    if lam == 0:
        return _normal_equations(data)
    rho = lam if opts.rho is None else opts.rho
    shaped = _use_shaped(data, opts)
    w = _weights(data, shaped)
    op = _Splitting(data.n, data.p, w)

    Us = data.regressors / op.w
    sysmat = Us.T @ Us + rho * np.diag(op.gram_diag)
    fac = sla.cho_factor(sysmat)
    ev = np.linalg.eigvalsh(sysmat)
    # the x-update cannot be resolved below this relative accuracy
    floor = 10 * _EPS * ev[-1] / max(ev[0], ev[-1] * _EPS)

    cols, iters, pres, dres, conv = [], 0, 0.0, 0.0, True
    for r in range(data.m):
        x, it, pr, dr, ok = _admm_channel(Us, data.outputs[:, r], op, fac, lam, rho, opts, floor)
        cols.append(x / op.w)
        iters = max(iters, it)
        pres, dres = max(pres, pr), max(dres, dr)
        conv = conv and ok
    h = ImpulseResponse.from_matrix(np.column_stack(cols), data.n, data.p)
    return SolveResult(h, iters, pres, dres, conv, objective(h, data, lam), method="hnn-admm")


def _normal_equations(data: RolloutData) -> SolveResult:
    U = data.regressors
    if U.shape[0] >= U.shape[1]:
        try:
            fac = sla.cho_factor(U.T @ U)
        except np.linalg.LinAlgError:
            fac = None
        if fac is not None:
            h = ImpulseResponse.from_matrix(sla.cho_solve(fac, U.T @ data.outputs), data.n, data.p)
            return SolveResult(h, 0, 0.0, 0.0, True, objective(h, data, 0.0), method="hnn-normal")
    return replace(solve_ols(data), method="hnn-ols")


def _admm_channel(Us, y, op: _Splitting, fac, lam, rho, opts: SolverOptions, floor: float):
    Uty = Us.T @ y
    n, p = op.n, op.p
    M = np.zeros((n, n * p))
    W = np.zeros_like(M)
    x = np.zeros(Us.shape[1])
    tol_p = max(opts.tol_primal, floor)
    tol_d = max(opts.tol_dual, floor)
    # problem scales used when the solution itself is (near) zero
    x1 = sla.cho_solve(fac, Uty)
    floor_p = 1e-3 * np.linalg.norm(op.fwd(x1))
    floor_d = 1e-3 * np.linalg.norm(Uty)
    if floor_d == 0.0:
        return x, 0, 0.0, 0.0, True
    pr = dr = np.inf
    for it in range(1, opts.max_iter + 1):
        x = sla.cho_solve(fac, Uty + rho * op.adj(M - W))
        Lx = op.fwd(x)
        M_old = M
        M = svt(Lx + W, lam / rho)
        W = W + Lx - M
        pr = np.linalg.norm(Lx - M)
        dr = rho * np.linalg.norm(op.adj(M - M_old))
        scale_p = max(np.linalg.norm(Lx), np.linalg.norm(M), floor_p)
        scale_d = max(rho * np.linalg.norm(op.adj(W)), floor_d)
        if pr <= tol_p * scale_p and dr <= tol_d * scale_d:
            return x, it, pr, dr, True
    return x, opts.max_iter, pr, dr, False


class _ResidualBall:
    """Euclidean projection onto ``{x : ||A x - y|| <= delta}``."""

    def __init__(self, A: np.ndarray, y: np.ndarray, delta: float):
        P, s, Qt = np.linalg.svd(A, full_matrices=False)
        keep = s > (s[0] if s.size else 0.0) * 1e-12
        self.s, self.Qt = s[keep], Qt[keep]
        self.b = P[:, keep].T @ y
        perp = y - P[:, keep] @ self.b  # part of y outside the range of A
        self.out2 = float(perp @ perp)
        self.ynorm = float(np.linalg.norm(y))
        self.delta = float(delta)
        # any delta below the unreachable residual is effectively zero
        self.affine = self.delta**2 <= self.out2 * (1 + 1e-12) or self.delta == 0.0

    def minimum_norm_point(self) -> np.ndarray:
        return self.Qt.T @ (self.b / self.s)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        r = self.s * (self.Qt @ v) - self.b
        if r @ r + self.out2 <= self.delta**2:
            return v
        if self.affine:
            return v - self.Qt.T @ (r / self.s)
        s2 = self.s**2
        target = self.delta**2 - self.out2

        def gap(mu):
            return float(np.sum((r / (1 + mu * s2)) ** 2)) - target

        hi = 1.0 / s2.max()
        while gap(hi) > 0:
            hi *= 4.0
        mu = brentq(gap, 0.0, hi, xtol=1e-15 * hi, rtol=4 * _EPS)
        return v - self.Qt.T @ (mu * self.s * r / (1 + mu * s2))


def solve_hnn_constrained(
    data: RolloutData,
    delta: float,
    opts: Optional[SolverOptions] = None,
    stop_below: Optional[float] = None,
) -> SolveResult:
    """Approximate minimizer of ``||H(h)||_*`` subject to ``||U h - y|| <= delta``.

    Solved in shaped coordinates ``x = K h``, where the weighted Hankel map is
    an isometry and the ``x``-update is a Euclidean projection onto the
    residual ball. The projection is exact, so every iterate is feasible.
    The problem itself does not depend on the coordinates, so
    ``opts.use_shaped_variable`` is ignored. Only single-output data are
    supported.

    ``stop_below`` ends the run early (``converged=False``, method
    ``"hnn-constrained-stopped"``) once a feasible iterate has Hankel nuclear
    norm below it; the optimal value is then known to be smaller too.
    Checked every 10 iterations.
    """
    if delta < 0:
        raise DomainError(f"delta must be non-negative, got {delta}")
    if data.m != 1:
        raise UnsupportedGeometryError("the constrained solver handles one output channel")
    opts = opts or SolverOptions()
    op = _Splitting(data.n, data.p, shaping_weights(data.n).k)
    Us = data.regressors / op.w
    y = data.outputs[:, 0]
    ball = _ResidualBall(Us, y, delta)
    if np.sqrt(ball.out2) > delta + 1e-10 * ball.ynorm:
        raise DomainError("no point satisfies the residual constraint")

    x = ball(np.zeros(Us.shape[1]))
    if not np.any(x):
        h = ImpulseResponse.from_matrix(x[:, None], data.n, data.p)
        return SolveResult(h, 0, 0.0, 0.0, True, 0.0, method="hnn-constrained")
    if opts.rho is None:
        rho = 1.0 / max(np.linalg.norm(op.fwd(ball.minimum_norm_point()), 2), 1e-300)
    else:
        rho = opts.rho
    M = op.fwd(x)
    W = np.zeros_like(M)
    pr = dr = np.inf
    converged = stopped = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        x = ball(op.adj(M - W))
        Lx = op.fwd(x)
        if stop_below is not None and it % 10 == 0 and nuclear_norm(Lx) < stop_below:
            stopped = True
            break
        M_old = M
        M = svt(Lx + W, 1.0 / rho)
        W = W + Lx - M
        pr = np.linalg.norm(Lx - M)
        dr = np.linalg.norm(M - M_old)
        scale_p = max(np.linalg.norm(Lx), np.linalg.norm(M))
        if pr <= opts.tol_primal * scale_p and dr <= opts.tol_dual * max(np.linalg.norm(W), 1e-300):
            converged = True
            break
    h = ImpulseResponse.from_matrix((x / op.w)[:, None], data.n, data.p)
    return SolveResult(h, it, float(pr), float(dr), converged, nuclear_norm(op.fwd(x)),
                       method="hnn-constrained-stopped" if stopped else "hnn-constrained")

"""Fast installation check used by ``hankelsysid selftest``."""

from __future__ import annotations

import numpy as np

from .hankel import (
    ImpulseResponse,
    hankel_adjoint,
    hankel_map,
    numerical_rank,
    shaping_weights,
    weighted_hankel_adjoint,
    weighted_hankel_map,
)
from .lti import gen_multi_rollout, impulse_response, random_system
from .realization import ho_kalman
from .solvers import SolverOptions, solve_hnn, solve_hnn_constrained, solve_ols


def _adjoint_gap(rng) -> float:
    n, m, p = 5, 2, 3
    h = rng.standard_normal((2 * n - 1, m, p))
    M = rng.standard_normal((n * m, n * p))
    k = shaping_weights(n)
    a = abs(np.sum(hankel_map(h) * M) - np.sum(h * hankel_adjoint(M, n, m, p)))
    b = abs(np.sum(weighted_hankel_map(h, k) * M) - np.sum(h * weighted_hankel_adjoint(M, k, m, p)))
    return max(a, b)


def run_selftest() -> tuple[bool, list[str]]:
    rng = np.random.default_rng(0)
    checks = []

    checks.append(("adjoint identities", _adjoint_gap(rng) < 1e-10))

    beta = rng.standard_normal(2 * 7 - 1)
    iso = abs(np.linalg.norm(weighted_hankel_map(beta, shaping_weights(7))) - np.linalg.norm(beta))
    checks.append(("weighted map isometry", iso < 1e-10))

    sys = random_system(3, 1, 1, 0.8, seed=1)
    h = impulse_response(sys, 12)
    checks.append(("Hankel rank equals order", numerical_rank(hankel_map(h)) == 3))

    data = gen_multi_rollout(h, 80, shaped=True, sigma_z=0.0, seed=2)
    err = np.linalg.norm((solve_ols(data).h_hat - h).blocks)
    checks.append(("least squares on noiseless data", err < 1e-8))

    h1 = ImpulseResponse(0.5 ** np.arange(2 * 8 - 1))
    d1 = gen_multi_rollout(h1, 10, shaped=True, sigma_z=0.0, seed=3)
    c = solve_hnn_constrained(d1, 1e-8)
    rel = np.linalg.norm((c.h_hat - h1).blocks) / np.linalg.norm(h1.blocks)
    checks.append(("constrained recovery", rel < 1e-3))

    r = solve_hnn(d1, SolverOptions(lam=1e-6))
    rel = np.linalg.norm((r.h_hat - h1).blocks) / np.linalg.norm(h1.blocks)
    checks.append(("penalized recovery", rel < 1e-3))

    real = ho_kalman(h, 3)
    checks.append(("Ho-Kalman round trip", real.reconstruction_error < 1e-8 * np.linalg.norm(h.blocks)))

    lines = [f"{'PASS' if ok else 'FAIL'}  {name}" for name, ok in checks]
    return all(ok for _, ok in checks), lines

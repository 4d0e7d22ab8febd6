"""Joint estimation over a penalty grid with hold-out selection."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, InvalidDimensionError
from .hankel import ImpulseResponse
from .lti import SINGLE_ROLLOUT, RolloutData
from .solvers import SolveResult, SolverOptions, solve_hnn


@dataclass(frozen=True, eq=False)
class Candidate:
    lam: float
    result: SolveResult
    train_error: float
    val_error: float
    val_error_normalized: float


@dataclass(frozen=True, eq=False)
class ModelSelectionReport:
    candidates: list[Candidate]
    chosen_index: int
    chosen_h: ImpulseResponse
    T: int
    T_val: int

    @property
    def chosen(self) -> Candidate:
        return self.candidates[self.chosen_index]

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([c.lam for c in self.candidates])

    @property
    def val_errors(self) -> np.ndarray:
        return np.array([c.val_error for c in self.candidates])


@dataclass(frozen=True)
class ValidationError:
    raw: float
    normalized: float


def _check_pair(h: ImpulseResponse, data: RolloutData) -> None:
    if h.geometry != (data.n, data.m, data.p):
        raise InvalidDimensionError(
            f"estimate geometry {h.geometry} does not match data {(data.n, data.m, data.p)}"
        )


def validation_error(h_hat: ImpulseResponse, val: RolloutData) -> ValidationError:
    """Squared residual ``||U_val h - y_val||_F^2``, raw and divided by ``||y_val||_F^2``."""
    _check_pair(h_hat, val)
    r = val.regressors @ h_hat.as_matrix() - val.outputs
    raw = float(np.sum(r * r))
    denom = float(np.sum(val.outputs**2))
    norm = raw / denom if denom > 0 else (0.0 if raw == 0 else float("inf"))
    return ValidationError(raw, norm)


def check_disjoint(train: RolloutData, val: RolloutData) -> None:
    """Raise if training and validation share output samples of one trajectory."""
    same_stream = (
        train.mode == val.mode == SINGLE_ROLLOUT
        and train.seed == val.seed
        and train.time_index is not None
        and val.time_index is not None
    )
    if same_stream and np.intersect1d(train.time_index, val.time_index).size:
        raise DomainError("training and validation samples overlap")


def default_grid(lam_star: float, num: int = 15, span: tuple[float, float] = (1e-2, 1e2)) -> np.ndarray:
    """``num`` log-spaced multiples of ``lam_star`` covering ``span``."""
    if lam_star <= 0:
        raise DomainError("the grid centre must be positive")
    return lam_star * np.logspace(np.log10(span[0]), np.log10(span[1]), num)


def select_penalty(
    train: RolloutData,
    val: RolloutData,
    lambda_grid: Iterable[float],
    opts: Optional[SolverOptions] = None,
) -> ModelSelectionReport:
    """Fit on ``train`` for every penalty and keep the best one on ``val``.

    Ties in validation error go to the smallest penalty, so the choice does
    not depend on the order of ``lambda_grid``.
    """
    grid = [float(x) for x in lambda_grid]
    if not grid:
        raise DomainError("lambda grid is empty")
    if (train.n, train.m, train.p) != (val.n, val.m, val.p):
        raise InvalidDimensionError("training and validation geometry differ")
    check_disjoint(train, val)
    opts = opts or SolverOptions()
    y2 = float(np.sum(train.outputs**2))
    cands = []
    for lam in grid:
        res = solve_hnn(train, replace(opts, lam=lam))
        r = train.regressors @ res.h_hat.as_matrix() - train.outputs
        tr = float(np.sum(r * r)) / y2 if y2 > 0 else 0.0
        ve = validation_error(res.h_hat, val)
        cands.append(Candidate(lam, res, tr, ve.raw, ve.normalized))
    best = min(range(len(cands)), key=lambda i: (cands[i].val_error, cands[i].lam))
    return ModelSelectionReport(cands, best, cands[best].result.h_hat, train.T, val.T)


run_algorithm1 = select_penalty


def required_validation_size(T: int, R: int, n: int, grid_size: int, P: float) -> int:
    """Hold-out size ``ceil((T log^2(|grid|/P) / (R log^2 n))^(1/3))``, at least 1."""
    if not 0 < P < 1:
        raise DomainError(f"failure probability must lie in (0, 1), got {P}")
    if T <= 0 or R <= 0 or grid_size <= 0:
        raise DomainError("T, R and grid_size must be positive")
    if n < 2:
        raise DomainError("n must be at least 2 for the logarithm to be positive")
    val = (T * np.log(grid_size / P) ** 2 / (R * np.log(n) ** 2)) ** (1.0 / 3.0)
    if not np.isfinite(val):
        return 1
    return max(1, int(np.ceil(val)))


def sample_size_sweep(
    trains: Sequence[RolloutData],
    val: RolloutData,
    lambda_grid: Iterable[float],
    threshold: float,
    opts: Optional[SolverOptions] = None,
) -> list[ModelSelectionReport]:
    """Run the selection on growing training sets until the chosen model's
    normalized validation error drops to ``threshold``.

    Heuristic diagnostic: the stopping threshold is user supplied.
    """
    grid = list(lambda_grid)
    out = []
    for tr in trains:
        rep = select_penalty(tr, val, grid, opts)
        out.append(rep)
        if rep.chosen.val_error_normalized <= threshold:
            break
    return out

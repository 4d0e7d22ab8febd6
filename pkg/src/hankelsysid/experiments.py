"""Experiment drivers. Each one is a pure function of its configuration."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Optional

import numpy as np

from .config import ExperimentConfig, derive_seed
from .dataio import ColumnSpec, load_dataset, split_contiguous, write_stream
from .errors import ConfigError
from .hankel import ImpulseResponse, hankel_map, numerical_rank, shaping_weights, weighted_hankel_map
from .lti import (
    StateSpace,
    gen_multi_rollout,
    impulse_response,
    input_power,
    noise_std_for_snr,
    random_system,
    single_rollout_stream,
    stream_to_rollout,
    truncation_error_bound,
)
from .metrics import (
    hankel_spectral_error,
    hnn_rate,
    ir_error,
    loglog_slope,
    ls_rate,
)
from .model_select import default_grid, required_validation_size, select_penalty, validation_error
from .realization import detect_order, hankel_spectrum, ho_kalman
from .report import ExperimentReport, group_summary
from .solvers import (
    SolverOptions,
    data_lambda,
    default_lambda,
    nuclear_norm,
    solve_hnn,
    solve_hnn_constrained,
    solve_ols,
)


def _pool_map(fn: Callable, tasks: Iterable, workers: int) -> list:
    """Map in task order; results do not depend on scheduling."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def solver_options(cfg: ExperimentConfig, lam: float = 0.0) -> SolverOptions:
    return SolverOptions(lam=lam, rho=cfg.admm_rho, max_iter=cfg.max_iter,
                         tol_primal=cfg.tol, tol_dual=cfg.tol)


def noise_levels(cfg: ExperimentConfig, n: int, shaped: bool) -> tuple[float, float]:
    """``(sigma_z, sigma)``: output-noise std and the effective level ``1/sqrt(snr)``."""
    power = input_power(n, cfg.p, shaped)
    if cfg.sigma_z is not None:
        sz = float(cfg.sigma_z)
        return sz, sz * np.sqrt(cfg.m / power)
    if cfg.snr is not None:
        return noise_std_for_snr(cfg.snr, n, cfg.p, cfg.m, shaped), 1.0 / np.sqrt(cfg.snr)
    return 0.0, 0.0


def _system(cfg: ExperimentConfig) -> StateSpace:
    if cfg.R == 1 and cfg.p == 1 and cfg.m == 1:
        return StateSpace([[cfg.pole]], [[1.0]], [[1.0]])
    return random_system(cfg.R, cfg.p, cfg.m, cfg.pole, derive_seed(cfg.seed, "system"))


def _lambda_grid(cfg: ExperimentConfig, center: float, num: Optional[int] = None) -> np.ndarray:
    return default_grid(center, num or cfg.grid_num, (cfg.grid_lo, cfg.grid_hi))


# --------------------------------------------------------------------------- slow decay


def slow_decay_split(cfg: ExperimentConfig, trial: int):
    """Input/output stream and the training/validation output indices of one trial.

    All Hankel sizes are fitted to the same output samples; the first output
    lies ``burn_in`` steps past the longest window.
    """
    sys = _system(cfg)
    n_max = max(cfg.n, cfg.n_small, cfg.ols_n_max)
    start = cfg.burn_in + 2 * n_max - 1
    length = start + cfg.T + cfg.T_val
    sz, _ = noise_levels(cfg, cfg.n, shaped=False)
    u, y = single_rollout_stream(sys, length, sz, derive_seed(cfg.seed, "slow_decay", trial))
    train_idx = np.arange(start, start + cfg.T)
    val_idx = np.arange(start + cfg.T, start + cfg.T + cfg.T_val)
    return u, y, train_idx, val_idx


def slow_decay_center(cfg: ExperimentConfig, n: int) -> float:
    _, sigma = noise_levels(cfg, n, shaped=False)
    return cfg.T * default_lambda(max(sigma, 1e-12), cfg.p, n, cfg.T, cfg.lambda_C)


def _slow_decay_trial(args) -> dict:
    cfg, trial = args
    u, y, tr, va = slow_decay_split(cfg, trial)
    opts = solver_options(cfg)
    rows: list[dict] = []
    best: dict = {}
    for label, n in (("hnn_large_n", cfg.n), ("hnn_small_n", cfg.n_small)):
        train = stream_to_rollout(u, y, n, tr)
        val = stream_to_rollout(u, y, n, va)
        rep = select_penalty(train, val, _lambda_grid(cfg, slow_decay_center(cfg, n)), opts)
        for c in rep.candidates:
            rows.append(dict(trial=trial, method=label, n=n, lam=c.lam,
                             train_error=c.train_error, val_error=c.val_error_normalized,
                             converged=c.result.converged, iterations=c.result.iterations))
        best[label] = rep.chosen.val_error_normalized
        best[label + "_lam"] = rep.chosen.lam
    ols_best = np.inf
    for n in range(2, cfg.ols_n_max + 1):
        train = stream_to_rollout(u, y, n, tr)
        val = stream_to_rollout(u, y, n, va)
        res = solve_ols(train)
        r = train.regressors @ res.h_hat.as_matrix() - train.outputs
        tr_err = float(np.sum(r * r) / np.sum(train.outputs**2))
        ve = validation_error(res.h_hat, val).normalized
        rows.append(dict(trial=trial, method="ols", n=n, lam=0.0, train_error=tr_err,
                         val_error=ve, converged=True, iterations=0))
        if ve < ols_best:
            ols_best, best["ols_n"] = ve, n
    best["ols"] = ols_best
    # vanishing penalty at the large size versus the minimum-norm least-squares fit
    train = stream_to_rollout(u, y, cfg.n, tr)
    val = stream_to_rollout(u, y, cfg.n, va)
    tiny = 1e-6 * slow_decay_center(cfg, cfg.n)
    lim = solve_hnn(train, solver_options(cfg, tiny))
    best["hnn_limit"] = validation_error(lim.h_hat, val).normalized
    best["ols_min_norm"] = validation_error(solve_ols(train).h_hat, val).normalized
    best["trial"] = trial
    best["train_range"] = [int(tr[0]), int(tr[-1])]
    best["val_range"] = [int(va[0]), int(va[-1])]
    return {"curves": rows, "best": best}


def run_slow_decay(cfg: ExperimentConfig) -> ExperimentReport:
    """Hankel-regularized fits at a large and a small size versus least squares
    over all over-determined sizes, on one slowly decaying single-rollout system.
    """
    _require(cfg, "slow_decay")
    if cfg.T_val < 1:
        raise ConfigError("slow_decay needs T_val >= 1")
    outs = _pool_map(_slow_decay_trial, [(cfg, t) for t in range(cfg.trials)], cfg.workers)
    curves = [r for o in outs for r in o["curves"]]
    bests = []
    for o in outs:
        b = o["best"]
        for method in ("hnn_large_n", "hnn_small_n", "ols", "hnn_limit", "ols_min_norm"):
            bests.append(dict(trial=b["trial"], method=method, val_error=b[method],
                              train_first=b["train_range"][0], train_last=b["train_range"][1],
                              val_first=b["val_range"][0], val_last=b["val_range"][1]))
    agg_best = group_summary(bests, ["method"], "val_error")
    med = {r["method"]: r["median"] for r in agg_best}
    summary = {
        "median_best_val": med,
        "hnn_large_beats_ols": med["hnn_large_n"] < med["ols"],
        "hnn_large_beats_small": med["hnn_large_n"] < med["hnn_small_n"],
        "truncation_bound_small_n": truncation_error_bound(cfg.pole, cfg.ols_n_max),
        "truncation_bound_large_n": truncation_error_bound(cfg.pole, cfg.n),
        "required_validation_size": required_validation_size(cfg.T, cfg.R, cfg.n, cfg.grid_num, 0.05),
    }
    return ExperimentReport(
        "slow_decay",
        cfg.to_dict(),
        records={"curves": curves, "best": bests},
        aggregates={"best": agg_best,
                    "curves": group_summary(curves, ["method", "n", "lam"], "val_error")},
        summary=summary,
        provenance={"seed": cfg.seed},
    )


# --------------------------------------------------------------------------- scaling


def _scaling_trial(args) -> list[dict]:
    cfg, h, T, trial = args
    sz, sigma = noise_levels(cfg, cfg.n, cfg.shaped)
    data = gen_multi_rollout(h, T, cfg.shaped, sz, derive_seed(cfg.seed, "scaling", T, trial))
    lam = data_lambda(data, sigma, cfg.lambda_C)
    rows = []
    for method, res in (("ols", solve_ols(data)), ("hnn", solve_hnn(data, solver_options(cfg, lam)))):
        ir = ir_error(res.h_hat, h)
        sp = hankel_spectral_error(res.h_hat, h)
        rows.append(dict(T=T, trial=trial, method=method, lam=lam if method == "hnn" else 0.0,
                         ir_error=ir, spectral_error=sp, ratio=sp / ir if ir > 0 else 0.0,
                         converged=res.converged, iterations=res.iterations))
    return rows


def run_scaling(cfg: ExperimentConfig) -> ExperimentReport:
    """Median estimation error of least squares and the regularized estimator
    as the number of multi-rollout samples grows."""
    _require(cfg, "scaling")
    if len(cfg.T_list) < 3:
        raise ConfigError("scaling needs at least three sample sizes in T_list")
    h = impulse_response(_system(cfg), cfg.n)
    tasks = [(cfg, h, T, t) for T in cfg.T_list for t in range(cfg.trials)]
    rows = [r for chunk in _pool_map(_scaling_trial, tasks, cfg.workers) for r in chunk]
    agg = group_summary(rows, ["method", "T"], "spectral_error")
    agg += group_summary(rows, ["method", "T"], "ir_error")
    sz, sigma = noise_levels(cfg, cfg.n, cfg.shaped)
    slopes = {}
    for method in ("ols", "hnn"):
        pts = [(r["T"], r["median"]) for r in agg if r["method"] == method and r["value"] == "spectral_error"]
        Ts, meds = zip(*pts)
        slopes[method] = loglog_slope(Ts, meds) if min(meds) > 0 else float("nan")
    rates = []
    for T in cfg.T_list:
        val, regime = hnn_rate(sigma, cfg.R, cfg.n, cfg.p, T)
        rates.append(dict(T=T, ls_rate=ls_rate(sz, cfg.m, cfg.n, cfg.p, T), hnn_rate=val,
                          hnn_regime=regime))
    max_ratio = max(r["ratio"] for r in rows if r["method"] == "ols")
    summary = {
        "slope_spectral": slopes,
        "max_ols_ratio": max_ratio,
        "ratio_bound": 3 * max(np.log(cfg.n * cfg.p), 1.0),
        "sigma_z": sz,
        "sigma": sigma,
    }
    return ExperimentReport("scaling", cfg.to_dict(), {"trials": rows},
                            {"errors": agg, "rates": rates}, summary, {"seed": cfg.seed})


# --------------------------------------------------------------------------- phase transition


def failure_certificate(h: ImpulseResponse, rel_tol: float) -> float:
    """Nuclear-norm level below which no estimate is within ``rel_tol`` of ``h``.

    ``||H(d)||_* <= n ||d||_F`` for any block vector ``d``, so an estimate
    within ``rel_tol * ||h||`` of ``h`` has Hankel nuclear norm at least
    ``||H(h)||_* - n rel_tol ||h||``. A feasible point below that level
    shows the minimizer is not within tolerance either.
    """
    return nuclear_norm(hankel_map(h)) - h.n * rel_tol * float(np.linalg.norm(h.blocks))


def _phase_trial(args) -> dict:
    cfg, shape, n, T, trial = args
    h = ImpulseResponse(np.ones(2 * n - 1))
    shaped = shape == "shaped"
    data = gen_multi_rollout(h, T, shaped, 0.0, derive_seed(cfg.seed, "phase", shape, n, T, trial))
    stop = failure_certificate(h, cfg.success_tol) if cfg.certify_failures else None
    res = solve_hnn_constrained(data, cfg.delta, solver_options(cfg), stop_below=stop)
    rel = ir_error(res.h_hat, h) / np.linalg.norm(h.blocks)
    return dict(shape=shape, n=n, T=T, trial=trial, rel_error=rel,
                success=bool(rel <= cfg.success_tol), converged=res.converged,
                certified_failure=res.method == "hnn-constrained-stopped",
                iterations=res.iterations)


def run_phase_transition(cfg: ExperimentConfig) -> ExperimentReport:
    """Noiseless recovery of the all-ones impulse response with shaped and iid
    inputs; reports success rates and the smallest sample size that reaches
    the target success probability."""
    _require(cfg, "phase_transition")
    if not cfg.n_list or not cfg.T_list:
        raise ConfigError("phase_transition needs n_list and T_list")
    rows, rates, t_star = [], [], {}
    for shape in cfg.shapes:
        t_star[shape] = {}
        for n in cfg.n_list:
            t_star[shape][str(n)] = None
            for T in sorted(set(cfg.T_list)):
                tasks = [(cfg, shape, n, T, t) for t in range(cfg.trials)]
                out = _pool_map(_phase_trial, tasks, cfg.workers)
                rows += out
                prob = float(np.mean([r["success"] for r in out]))
                rates.append(dict(shape=shape, n=n, T=T, success_prob=prob, trials=len(out)))
                if prob >= cfg.success_prob and t_star[shape][str(n)] is None:
                    t_star[shape][str(n)] = T
                    if cfg.early_stop:
                        break
    return ExperimentReport("phase_transition", cfg.to_dict(), {"trials": rows},
                            {"success": rates}, {"T_star": t_star}, {"seed": cfg.seed})


def success_table(rows: list[dict]) -> list[dict]:
    """Success probability per (shape, n, T) recomputed from trial rows."""
    acc: dict = {}
    for r in rows:
        acc.setdefault((r["shape"], r["n"], r["T"]), []).append(bool(r["success"]))
    return [dict(shape=k[0], n=k[1], T=k[2], success_prob=float(np.mean(v)), trials=len(v))
            for k, v in acc.items()]


def t_star_from_rates(rates: list[dict], prob: float) -> dict:
    out: dict = {}
    for r in sorted(rates, key=lambda r: (r["shape"], r["n"], r["T"])):
        d = out.setdefault(r["shape"], {})
        d.setdefault(str(r["n"]), None)
        if d[str(r["n"])] is None and r["success_prob"] >= prob:
            d[str(r["n"])] = r["T"]
    return out


# --------------------------------------------------------------------------- spectrum


def _spectrum_trial(args) -> dict:
    cfg, h, trial = args
    sz, sigma = noise_levels(cfg, cfg.n, cfg.shaped)
    data = gen_multi_rollout(h, cfg.T, cfg.shaped, sz, derive_seed(cfg.seed, "spectrum", trial))
    lam = data_lambda(data, sigma, cfg.lambda_C)
    fits = {"ols": solve_ols(data).h_hat, "hnn": solve_hnn(data, solver_options(cfg, lam)).h_hat}
    spectra, rows = [], []
    R = cfg.R
    for method, est in fits.items():
        sv = hankel_spectrum(est)
        est_order = detect_order(sv, cfg.gap_threshold)
        gap = sv[R - 1] / sv[R] if sv[R] > 0 else float("inf")
        rows.append(dict(trial=trial, method=method, gap_ratio=gap, detected_order=est_order.order,
                         low_confidence=est_order.low_confidence,
                         spectral_error=hankel_spectral_error(est, h)))
        spectra += [dict(trial=trial, method=method, index=i + 1, singular_value=float(s))
                    for i, s in enumerate(sv)]
    return {"rows": rows, "spectra": spectra}


def run_spectrum(cfg: ExperimentConfig) -> ExperimentReport:
    """Hankel singular values of least-squares and regularized fits side by side."""
    _require(cfg, "spectrum")
    if cfg.R >= cfg.n:
        raise ConfigError("spectrum needs R < n")
    h = impulse_response(_system(cfg), cfg.n)
    outs = _pool_map(_spectrum_trial, [(cfg, h, t) for t in range(cfg.trials)], cfg.workers)
    rows = [r for o in outs for r in o["rows"]]
    spectra = [r for o in outs for r in o["spectra"]]
    true_sv = hankel_spectrum(h)
    by_trial: dict = {}
    for r in rows:
        by_trial.setdefault(r["trial"], {})[r["method"]] = r["gap_ratio"]
    wins = [d["hnn"] > d["ols"] for d in by_trial.values()]
    summary = {
        "hnn_gap_wins": float(np.mean(wins)) if wins else float("nan"),
        "true_order": cfg.R,
        "true_detected_order": detect_order(true_sv, cfg.gap_threshold).order,
        "true_spectrum": true_sv,
    }
    agg = group_summary(spectra, ["method", "index"], "singular_value")
    agg_gap = group_summary(rows, ["method"], "gap_ratio")
    return ExperimentReport("spectrum", cfg.to_dict(), {"trials": rows, "spectra": spectra},
                            {"spectrum": agg, "gap": agg_gap}, summary, {"seed": cfg.seed})


# --------------------------------------------------------------------------- Gaussian norm


def weighted_gaussian_norms(n: int, p: int, draws: int, seed: int) -> np.ndarray:
    """Spectral norms of the weighted Hankel map of ``draws`` standard Gaussian vectors."""
    rng = np.random.default_rng(seed)
    k = shaping_weights(n)
    out = np.empty(draws)
    for i in range(draws):
        g = rng.standard_normal((2 * n - 1, 1, p))
        out[i] = np.linalg.norm(weighted_hankel_map(g, k), 2)
    return out


def run_gaussian_norm(cfg: ExperimentConfig) -> ExperimentReport:
    """Monte Carlo mean of the weighted-Hankel spectral norm of Gaussian vectors."""
    _require(cfg, "gaussian_norm")
    if not cfg.n_list or not cfg.p_list:
        raise ConfigError("gaussian_norm needs n_list and p_list")
    rows = []
    for p in cfg.p_list:
        for n in cfg.n_list:
            vals = weighted_gaussian_norms(n, p, cfg.trials, derive_seed(cfg.seed, "gauss", n, p))
            rows += [dict(p=p, n=n, draw=i, norm=float(v)) for i, v in enumerate(vals)]
    agg = group_summary(rows, ["p", "n"], "norm")
    for a in agg:
        a["ratio_log"] = a["mean"] / (np.sqrt(a["p"]) * np.log(a["n"]))
        a["width_bound"] = 3 * np.sqrt(cfg.R) * a["mean"]
    summary: dict = {"band": {}, "p_ratio": {}}
    for p in cfg.p_list:
        r = [a["mean"] / np.log(a["n"]) for a in agg if a["p"] == p]
        summary["band"][str(p)] = max(r) / min(r)
    base = min(cfg.p_list)
    for a in agg:
        if a["p"] != base:
            ref = next(b for b in agg if b["p"] == base and b["n"] == a["n"])
            summary["p_ratio"][f"{a['p']}/{base}@n={a['n']}"] = a["mean"] / ref["mean"]
    return ExperimentReport("gaussian_norm", cfg.to_dict(), {"draws": rows}, {"norms": agg},
                            summary, {"seed": cfg.seed})


# --------------------------------------------------------------------------- datasets


def run_dataset_fit(cfg: ExperimentConfig) -> ExperimentReport:
    """Model selection on a stored input/output stream with a contiguous split."""
    _require(cfg, "dataset_fit")
    cols = ColumnSpec(tuple(cfg.inputs), tuple(cfg.outputs), cfg.skip_rows)
    full = load_dataset(cfg.dataset, cols, cfg.n, cfg.T + cfg.T_val if cfg.T_val else None, cfg.delay)
    if full.T <= cfg.T:
        raise ConfigError(f"dataset provides {full.T} outputs, need more than T={cfg.T}")
    train, val = split_contiguous(full, cfg.T)
    ols = solve_ols(train)
    resid = train.regressors @ ols.h_hat.as_matrix() - train.outputs
    dof = train.T - train.regressors.shape[1]
    if cfg.sigma_z is not None:
        sz = cfg.sigma_z
    elif dof > 0:
        sz = float(np.sqrt(np.sum(resid**2) / (dof * train.m)))
    else:
        sz = 0.1 * float(np.std(train.outputs))
    sigma = sz * np.sqrt(train.m / input_power(train.n, train.p, False))
    center = data_lambda(train, max(sigma, 1e-12), cfg.lambda_C)
    rep = select_penalty(train, val, _lambda_grid(cfg, center), solver_options(cfg))
    rows = [dict(lam=c.lam, train_error=c.train_error, val_error=c.val_error_normalized,
                 converged=c.result.converged, iterations=c.result.iterations)
            for c in rep.candidates]
    sv = hankel_spectrum(rep.chosen_h)
    order = detect_order(sv, cfg.gap_threshold)
    R = min(max(order.order, 1), cfg.n - 1)
    real = ho_kalman(rep.chosen_h, R)
    poles = np.linalg.eigvals(real.sys.A)
    summary = {
        "chosen_lambda": rep.chosen.lam,
        "chosen_val_error": rep.chosen.val_error_normalized,
        "ols_val_error": validation_error(ols.h_hat, val).normalized,
        "detected_order": order.order,
        "order_low_confidence": order.low_confidence,
        "poles_real": poles.real,
        "poles_imag": poles.imag,
        "noise_estimate": sz,
        "train_range": [int(train.time_index[0]), int(train.time_index[-1])],
        "val_range": [int(val.time_index[0]), int(val.time_index[-1])],
    }
    spec_rows = [dict(index=i + 1, singular_value=float(s)) for i, s in enumerate(sv)]
    return ExperimentReport("dataset_fit", cfg.to_dict(), {"path": rows, "spectrum": spec_rows},
                            {"val": group_summary(rows, ["lam"], "val_error")}, summary,
                            {"seed": cfg.seed, "dataset": cfg.dataset})


def generate_dataset(cfg: ExperimentConfig, path) -> ExperimentReport:
    """Write a synthetic single-rollout stream from a random system to ``path``."""
    _require(cfg, "generate")
    sys = random_system(cfg.R, cfg.p, cfg.m, cfg.pole, derive_seed(cfg.seed, "system"))
    sz, _ = noise_levels(cfg, cfg.n, shaped=False)
    seed = derive_seed(cfg.seed, "stream")
    u, y = single_rollout_stream(sys, cfg.T, sz, seed)
    write_stream(path, u, y, {"seed": seed, "sigma_z": repr(sz), "order": cfg.R})
    h = impulse_response(sys, cfg.n)
    return ExperimentReport(
        "generate", cfg.to_dict(),
        {"markov": [dict(lag=j + 1, out=r, inp=c, value=float(h.blocks[j, r, c]))
                    for j in range(h.blocks.shape[0]) for r in range(h.m) for c in range(h.p)]},
        {}, {"path": str(path), "rows": int(u.shape[0]), "sigma_z": sz,
             "hankel_rank": numerical_rank(hankel_spectrum(h))},
        {"seed": cfg.seed},
    )


def _require(cfg: ExperimentConfig, kind: str) -> None:
    if cfg.kind != kind:
        raise ConfigError(f"expected a {kind} config, got {cfg.kind}")


RUNNERS = {
    "slow_decay": run_slow_decay,
    "scaling": run_scaling,
    "phase_transition": run_phase_transition,
    "spectrum": run_spectrum,
    "gaussian_norm": run_gaussian_norm,
    "dataset_fit": run_dataset_fit,
}

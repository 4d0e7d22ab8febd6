"""Experiment configuration: one flat record, per-kind defaults, JSON loading."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import ConfigError

KINDS = (
    "slow_decay",
    "scaling",
    "phase_transition",
    "spectrum",
    "gaussian_norm",
    "dataset_fit",
    "generate",
)


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    trials: int = 1
    # system
    R: int = 1
    p: int = 1
    m: int = 1
    pole: float = 0.9
    # geometry and samples
    n: int = 16
    n_list: list = field(default_factory=list)
    p_list: list = field(default_factory=list)
    n_small: int = 20
    ols_n_max: int = 20
    T: int = 40
    T_list: list = field(default_factory=list)
    T_val: int = 0
    burn_in: int = 500
    # noise: sigma_z wins over snr when both are set
    sigma_z: Optional[float] = None
    snr: Optional[float] = None
    shaped: bool = True
    shapes: list = field(default_factory=lambda: ["shaped", "iid"])
    # penalty grid around C * (theoretical lambda)
    lambda_C: float = 1.0
    grid_num: int = 15
    grid_lo: float = 1e-2
    grid_hi: float = 1e2
    # solver
    max_iter: int = 5000
    tol: float = 1e-8
    admm_rho: Optional[float] = None
    delta: float = 1e-8
    success_tol: float = 1e-3
    success_prob: float = 0.9
    early_stop: bool = True
    certify_failures: bool = True
    gap_threshold: float = 10.0
    # dataset files
    dataset: Optional[str] = None
    inputs: list = field(default_factory=lambda: [0])
    outputs: list = field(default_factory=lambda: [1])
    skip_rows: int = 0
    delay: int = 1
    # execution
    workers: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        ints = {"trials": 1, "R": 1, "p": 1, "m": 1, "n": 1, "n_small": 1, "ols_n_max": 2,
                "T": 1, "grid_num": 1, "max_iter": 1, "workers": 1}
        for name, lo in ints.items():
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < lo:
                raise ConfigError(f"{name} must be an integer >= {lo}, got {v!r}")
        for name in ("T_val", "burn_in", "skip_rows", "delay"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ConfigError(f"{name} must be a non-negative integer, got {v!r}")
        for name in ("n_list", "T_list", "p_list"):
            v = getattr(self, name)
            if not isinstance(v, list) or any(not isinstance(x, int) or x < 1 for x in v):
                raise ConfigError(f"{name} must be a list of positive integers, got {v!r}")
        if not 0 < self.pole < 1:
            raise ConfigError(f"pole must lie in (0, 1), got {self.pole}")
        if self.sigma_z is not None and self.sigma_z < 0:
            raise ConfigError("sigma_z must be non-negative")
        if self.snr is not None and self.snr <= 0:
            raise ConfigError("snr must be positive")
        if not (0 < self.grid_lo <= self.grid_hi):
            raise ConfigError("grid bounds must satisfy 0 < grid_lo <= grid_hi")
        if self.tol <= 0 or self.delta < 0 or self.success_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if not 0 < self.success_prob <= 1:
            raise ConfigError("success_prob must lie in (0, 1]")
        if self.admm_rho is not None and self.admm_rho <= 0:
            raise ConfigError("admm_rho must be positive")
        bad = [s for s in self.shapes if s not in ("shaped", "iid")]
        if bad:
            raise ConfigError(f"unknown input shapes {bad}")
        if self.kind == "dataset_fit":
            if not self.dataset:
                raise ConfigError("dataset_fit needs a dataset path")
            if not Path(self.dataset).exists():
                raise ConfigError(f"dataset file {self.dataset} does not exist")
        return self


DEFAULTS: dict[str, dict[str, Any]] = {
    "slow_decay": dict(R=1, pole=0.98, n=45, n_small=20, ols_n_max=20, T=40, T_val=800,
                       sigma_z=1.0, trials=10, tol=1e-4, burn_in=500, lambda_C=0.1),
    "scaling": dict(R=2, pole=0.8, n=32, snr=100.0, shaped=True, T_list=[200, 400, 800],
                    trials=50, tol=1e-6),
    "phase_transition": dict(n_list=[8, 16, 32, 64], T_list=[2, 4, 6, 8, 10, 12, 14, 16, 20, 24, 28, 32],
                             trials=25, max_iter=3000, tol=1e-7),
    "spectrum": dict(R=2, pole=0.8, n=16, T=40, snr=10.0, shaped=True, trials=50, tol=1e-6),
    "gaussian_norm": dict(n_list=[8, 32, 128], p_list=[1, 4], trials=200),
    "dataset_fit": dict(n=10, T=200, T_val=600, tol=1e-6),
    "generate": dict(R=2, pole=0.9, T=1000, snr=100.0),
}


def make_config(kind: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Defaults for ``kind`` updated with ``overrides``; unknown keys are rejected."""
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    names = {f.name for f in fields(ExperimentConfig)}
    values = dict(DEFAULTS[kind])
    for k, v in (overrides or {}).items():
        if k not in names:
            raise ConfigError(f"unknown config key {k!r}")
        if k == "kind" and v != kind:
            raise ConfigError(f"config kind {v!r} does not match {kind!r}")
        values[k] = v
    values.pop("kind", None)
    try:
        cfg = ExperimentConfig(kind=kind, **values)
    except TypeError as exc:  # pragma: no cover - guarded by the key check
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def derive_seed(base: int, *coords) -> int:
    """Deterministic 63-bit seed for one task, independent of execution order."""
    key = []
    for c in coords:
        if isinstance(c, str):
            key.append(zlib.crc32(c.encode("utf-8")))
        else:
            key.append(int(c))
    ss = np.random.SeedSequence(int(base), spawn_key=tuple(key))
    lo, hi = ss.generate_state(2)
    return int((int(hi) << 32 | int(lo)) & ((1 << 63) - 1))

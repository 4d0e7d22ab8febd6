"""Plain-text input/output streams: reading, splitting and writing."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DatasetError, InvalidDimensionError
from .lti import RolloutData, stream_to_rollout

_SPLIT = re.compile(r"[,\s]+")
_META = re.compile(r"^#\s*(\w+)\s*=\s*(.*?)\s*$")


@dataclass(frozen=True)
class ColumnSpec:
    """Which columns hold inputs and outputs, and how many leading rows to skip."""

    inputs: Sequence[int] = (0,)
    outputs: Sequence[int] = (1,)
    skip_rows: int = 0


@dataclass
class Stream:
    u: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)


def read_stream(path, columns: ColumnSpec = ColumnSpec()) -> Stream:
    """Parse a whitespace- or comma-delimited numeric file.

    Lines starting with ``#`` are comments; ``# key = value`` comments are
    collected as metadata.
    """
    meta: dict = {}
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno <= columns.skip_rows:
                continue
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                mm = _META.match(text)
                if mm:
                    meta[mm.group(1)] = mm.group(2)
                continue
            try:
                vals = [float(tok) for tok in _SPLIT.split(text) if tok]
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: cannot parse {text[:40]!r}") from exc
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DatasetError(f"{path}:{lineno}: expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DatasetError(f"{path}: no numeric rows")
    data = np.array(rows)
    need = max(max(columns.inputs), max(columns.outputs))
    if need >= data.shape[1]:
        raise DatasetError(f"{path}: column {need} requested but file has {data.shape[1]}")
    return Stream(data[:, list(columns.inputs)], data[:, list(columns.outputs)], meta)


def load_dataset(
    path,
    columns: ColumnSpec = ColumnSpec(),
    n: int = 10,
    T: Optional[int] = None,
    delay: int = 1,
    start: int = 0,
) -> RolloutData:
    """Single-rollout regression data from a stored stream.

    Uses the first ``T`` outputs whose full window fits after ``start``
    (all of them when ``T`` is None). ``T + 2n - 2 + delay`` rows are needed.
    """
    st = read_stream(path, columns)
    first = start + 2 * n - 2 + delay
    avail = st.u.shape[0] - first
    if T is None:
        T = avail
    if T < 1 or T > avail:
        raise InvalidDimensionError(
            f"{st.u.shape[0]} rows cannot provide T={T} outputs for n={n} (delay {delay})"
        )
    seed = int(st.meta["seed"]) if st.meta.get("seed", "None") != "None" else None
    sigma_z = float(st.meta.get("sigma_z", "nan"))
    return stream_to_rollout(st.u, st.y, n, np.arange(first, first + T), delay, sigma_z, seed)


def split_contiguous(data: RolloutData, T_train: int) -> tuple[RolloutData, RolloutData]:
    """First ``T_train`` rows for training, the rest for validation."""
    if not 0 < T_train < data.T:
        raise InvalidDimensionError(f"split point {T_train} outside 1..{data.T - 1}")
    idx = np.arange(data.T)
    return data.subset(idx[:T_train]), data.subset(idx[T_train:])


def write_stream(path, u, y, meta: Optional[dict] = None) -> None:
    """Write input and output columns with full precision, inputs first."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if u.shape[0] != y.shape[0]:
        raise InvalidDimensionError("input and output streams differ in length")
    path = Path(path)
    lines = [f"# {k} = {v}" for k, v in (meta or {}).items()]
    lines.append("# columns: " + " ".join(
        [f"u{i}" for i in range(u.shape[1])] + [f"y{i}" for i in range(y.shape[1])]))
    body = np.hstack([u, y])
    lines += [" ".join(repr(float(v)) for v in row) for row in body]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

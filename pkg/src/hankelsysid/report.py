"""Experiment reports: aggregation helpers and JSON/CSV serialization."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import __version__

SCHEMA_VERSION = 1


@dataclass
class ExperimentReport:
    """Per-trial records, aggregates derived from them, and headline numbers.

    ``records`` and ``aggregates`` map a table name to a list of flat rows.
    """

    kind: str
    config: dict
    records: dict[str, list[dict]] = field(default_factory=dict)
    aggregates: dict[str, list[dict]] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)
    provenance: dict[str, Any] = field(default_factory=dict)

    def to_dict(self, timestamp: bool = True) -> dict:
        prov = dict(self.provenance)
        prov.setdefault("version", __version__)
        prov.setdefault("numpy", np.__version__)
        prov.setdefault("python", platform.python_version())
        if timestamp:
            prov["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        else:
            prov.pop("timestamp", None)
        return _clean(
            {
                "schema_version": SCHEMA_VERSION,
                "kind": self.kind,
                "config": self.config,
                "provenance": prov,
                "summary": self.summary,
                "aggregates": self.aggregates,
                "records": self.records,
            }
        )

    def n_records(self) -> int:
        return sum(len(v) for v in self.records.values())


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, Path):
        return str(obj)
    return obj


def quantile_summary(values: Sequence[float]) -> dict:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"count": 0, "median": float("nan"), "q25": float("nan"), "q75": float("nan"),
                "mean": float("nan")}
    return {
        "count": int(v.size),
        "median": float(np.median(v)),
        "q25": float(np.percentile(v, 25)),
        "q75": float(np.percentile(v, 75)),
        "mean": float(np.mean(v)),
    }


def group_summary(rows: Iterable[dict], by: Sequence[str], value: str) -> list[dict]:
    """Quantiles of ``value`` for each distinct combination of the ``by`` keys.

    Groups appear in order of first occurrence.
    """
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        if value not in r or r[value] is None:
            continue
        groups.setdefault(tuple(r[k] for k in by), []).append(float(r[value]))
    out = []
    for key, vals in groups.items():
        row = dict(zip(by, key))
        row["value"] = value
        row.update(quantile_summary(vals))
        out.append(row)
    return out


def to_json(report: ExperimentReport, timestamp: bool = True) -> str:
    return json.dumps(report.to_dict(timestamp), indent=2, sort_keys=False) + "\n"


def to_csv(report: ExperimentReport, timestamp: bool = True) -> str:
    """One row per record; the table name is the first column.

    Comment lines at the top echo the configuration and seed.
    """
    d = report.to_dict(timestamp)
    buf = io.StringIO()
    buf.write(f"# schema_version = {SCHEMA_VERSION}\n")
    buf.write(f"# kind = {report.kind}\n")
    buf.write(f"# seed = {d['config'].get('seed')}\n")
    buf.write("# config = " + json.dumps(d["config"], sort_keys=True) + "\n")
    if "timestamp" in d["provenance"]:
        buf.write(f"# timestamp = {d['provenance']['timestamp']}\n")
    cols: list[str] = ["table"]
    for rows in d["records"].values():
        for r in rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for name, rows in d["records"].items():
        for r in rows:
            w.writerow({"table": name, **r})
    return buf.getvalue()


def emit_report(report: ExperimentReport, path: Optional[str], fmt: str = "json",
                timestamp: bool = True) -> str:
    """Serialize ``report``; write it to ``path`` unless ``path`` is None or ``-``."""
    if fmt == "json":
        text = to_json(report, timestamp)
    elif fmt == "csv":
        text = to_csv(report, timestamp)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path not in (None, "-"):
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_csv_records(text: str) -> list[dict]:
    """Parse the record rows of a CSV report (comment lines skipped)."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))

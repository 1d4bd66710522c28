"""Empirical CDFs, percentile summaries and delimited-text result files."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from collections import OrderedDict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .experiment import SCHEMA_VERSION, ResultRecord

RECORD_COLUMNS = (
    "schema_version",
    "scheme",
    "sweep_param",
    "sweep_value",
    "setup",
    "ue",
    "se_bits_per_hz",
    "seed",
    "layout_digest",
    "realization_digest",
    "error",
)
CDF_COLUMNS = ("schema_version", "scheme", "sweep_param", "sweep_value", "se_bits_per_hz", "cumulative_probability")
SUMMARY_COLUMNS = (
    "schema_version",
    "scheme",
    "sweep_param",
    "sweep_value",
    "n",
    "n_missing",
    "mean",
    "likely_95",
    "median",
    "p95",
)


class OutputError(OSError):
    """Raised when a result file cannot be written or read."""


def _select(records: Iterable[ResultRecord], scheme=None, sweep_value=None) -> np.ndarray:
    vals = [
        r.se
        for r in records
        if (scheme is None or r.scheme == scheme)
        and (sweep_value is None or r.sweep_value == sweep_value)
        and not r.missing
    ]
    return np.asarray(vals, dtype=float)


def _values(data, scheme, sweep_value) -> np.ndarray:
    data = list(data)
    if data and isinstance(data[0], ResultRecord):
        v = _select(data, scheme, sweep_value)
    else:
        v = np.asarray(data, dtype=float)
        v = v[~np.isnan(v)]
    if v.size == 0:
        raise ValueError("no SE samples match the filter")
    return v


def cdf(data, scheme: str | None = None, sweep_value=None) -> list[tuple[float, float]]:
    """Empirical CDF as sorted (SE, rank / n) pairs.

    ``data`` is a sequence of ResultRecord (filtered by scheme and sweep value)
    or of plain SE values.
    """
    v = np.sort(_values(data, scheme, sweep_value))
    n = v.size
    return [(float(x), (i + 1) / n) for i, x in enumerate(v)]


def likely_95(data, scheme: str | None = None, sweep_value=None) -> float:
    """SE exceeded by 95% of samples: 5th percentile, linear interpolation."""
    return float(np.percentile(_values(data, scheme, sweep_value), 5.0))


def summarize(records: Sequence[ResultRecord]) -> list[dict]:
    """Percentile summary per (sweep value, scheme), in record order."""
    groups: "OrderedDict[tuple, list[ResultRecord]]" = OrderedDict()
    for r in records:
        groups.setdefault((r.sweep_param, r.sweep_value, r.scheme), []).append(r)
    out = []
    for (param, value, scheme), rs in groups.items():
        v = _select(rs)
        row = {
            "scheme": scheme,
            "sweep_param": param,
            "sweep_value": value,
            "n": len(rs),
            "n_missing": len(rs) - v.size,
        }
        if v.size:
            row.update(
                mean=float(v.mean()),
                likely_95=float(np.percentile(v, 5.0)),
                median=float(np.median(v)),
                p95=float(np.percentile(v, 95.0)),
            )
        else:
            row.update(mean=None, likely_95=None, median=None, p95=None)
        out.append(row)
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _parse_sweep_value(text: str):
    if text == "":
        return ""
    try:
        return int(text)
    except ValueError:
        return float(text)


def format_records(records: Iterable[ResultRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow(
            [
                SCHEMA_VERSION, r.scheme, r.sweep_param, _fmt(r.sweep_value), r.setup, r.ue,
                _fmt(r.se), r.seed, r.layout_digest, r.realization_digest, r.error,
            ]
        )
    return buf.getvalue()


def format_cdf(records: Sequence[ResultRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CDF_COLUMNS)
    seen = OrderedDict()
    for r in records:
        seen.setdefault((r.sweep_param, r.sweep_value, r.scheme), None)
    for param, value, scheme in seen:
        rs = [r for r in records if r.scheme == scheme and r.sweep_param == param and r.sweep_value == value]
        if all(r.missing for r in rs):
            continue
        for se, prob in cdf(rs):
            w.writerow([SCHEMA_VERSION, scheme, param, _fmt(value), repr(se), repr(prob)])
    return buf.getvalue()


def format_summary(records: Sequence[ResultRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in summarize(records):
        w.writerow([SCHEMA_VERSION] + [_fmt(row[c]) for c in SUMMARY_COLUMNS[1:]])
    return buf.getvalue()


def summary_document(records: Sequence[ResultRecord], spec=None) -> str:
    """Machine-readable summary: spec snapshot plus percentiles per scheme."""
    snapshot = None
    if spec is not None:
        snapshot = spec.to_dict()
        # where the file lives is not part of the experiment
        snapshot.pop("output_path", None)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "spec": snapshot,
        "summary": summarize(records),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def summary_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".summary.json")


def emit(records: Sequence[ResultRecord], path, fmt: str = "per-ue-samples", spec=None) -> tuple[Path, Path]:
    """Write ``records`` in the requested format plus a JSON summary next to it.

    Returns the two paths written. Output is byte-stable for fixed input.
    """
    formatters = {
        "per-ue-samples": format_records,
        "cdf": format_cdf,
        "percentile-summary": format_summary,
    }
    if fmt not in formatters:
        raise ValueError(f"unknown emit format {fmt!r}")
    path = Path(path)
    _write(path, formatters[fmt](records))
    side = summary_path(path)
    _write(side, summary_document(records, spec))
    return path, side


def read_records(path) -> list[ResultRecord]:
    """Parse a per-UE record file written by :func:`emit`."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None or tuple(header) != RECORD_COLUMNS:
        raise ValueError(f"{path}: not a per-UE record file (header {header!r})")
    out = []
    for row in rows:
        d = dict(zip(RECORD_COLUMNS, row))
        if int(d["schema_version"]) != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema_version {d['schema_version']}")
        out.append(
            ResultRecord(
                scheme=d["scheme"],
                sweep_param=d["sweep_param"],
                sweep_value=_parse_sweep_value(d["sweep_value"]),
                setup=int(d["setup"]),
                ue=int(d["ue"]),
                se=float(d["se_bits_per_hz"]) if d["se_bits_per_hz"] else math.nan,
                seed=int(d["seed"]),
                layout_digest=d["layout_digest"],
                realization_digest=d["realization_digest"],
                error=d["error"],
            )
        )
    return out

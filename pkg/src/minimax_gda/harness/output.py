"""Trajectory CSVs, seed summaries and gnuplot data files.

Floats are written with ``repr`` (shortest round-trip form), so reading a
file back recovers every value exactly. Missing diagnostics are empty
fields.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from ..core import ContractError
from ..solvers import CSV_COLUMNS, TrajectoryRecord

__all__ = [
    "INT_COLUMNS",
    "AVG_COLUMNS",
    "format_value",
    "emit_csv",
    "emit_running_average",
    "read_csv",
    "summarize",
    "write_summary",
    "write_gnuplot",
    "trajectory_filename",
]

INT_COLUMNS = ("t", "oracle_calls")
AVG_COLUMNS = ("t", "oracle_calls", "running_avg")
SUMMARY_METRICS = tuple(c for c in CSV_COLUMNS if c not in INT_COLUMNS) + ("running_avg",)


def format_value(name: str, value) -> str:
    v = float(value)
    if math.isnan(v):
        return ""
    if name in INT_COLUMNS:
        return str(int(v))
    return repr(v)


def trajectory_filename(algo: str, seed: int) -> str:
    return f"{algo}_seed{seed}.csv"


def _write_rows(path, header, rows) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(c, v) for c, v in zip(header, row)])


def emit_csv(record: TrajectoryRecord, path) -> None:
    """Header plus one row per logged iteration, columns exactly ``CSV_COLUMNS``."""
    _write_rows(path, CSV_COLUMNS, record.rows())


def emit_running_average(record: TrajectoryRecord, path) -> None:
    cols = record.columns
    _write_rows(path, AVG_COLUMNS, zip(cols["t"], cols["oracle_calls"], record.running_avg))


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns of a file written by ``emit_csv`` (empty fields become NaN)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ContractError(f"{path} is empty")
    header = rows[0]
    body = rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ContractError(f"{path}:{i}: expected {len(header)} fields, got {len(r)}")
    return {name: np.array([float(r[j]) if r[j] != "" else np.nan for r in body], dtype=np.float64)
            for j, name in enumerate(header)}


def summarize(records: list[TrajectoryRecord]) -> dict[str, np.ndarray]:
    """Per-row mean and standard error across seeds (records must share one log grid).

    The standard error is the sample standard deviation (n - 1) over sqrt(n);
    it is NaN for a single seed.
    """
    if not records:
        raise ContractError("nothing to summarize")
    base = records[0].columns
    for r in records[1:]:
        if not (np.array_equal(r.columns["t"], base["t"])
                and np.array_equal(r.columns["oracle_calls"], base["oracle_calls"])):
            raise ContractError("records were logged at different iterations")
    n = len(records)
    out = {"t": base["t"].copy(), "oracle_calls": base["oracle_calls"].copy()}
    for name in SUMMARY_METRICS:
        stack = np.stack([r.running_avg if name == "running_avg" else r.columns[name] for r in records])
        out[f"{name}_mean"] = np.mean(stack, axis=0)
        if n > 1:
            out[f"{name}_se"] = np.std(stack, axis=0, ddof=1) / math.sqrt(n)
        else:
            out[f"{name}_se"] = np.full(stack.shape[1], np.nan)
    return out


def _summary_header() -> list[str]:
    cols = ["algo", "t", "oracle_calls"]
    for name in SUMMARY_METRICS:
        cols += [f"{name}_mean", f"{name}_se"]
    return cols


def write_summary(summaries: dict[str, dict[str, np.ndarray]], path) -> None:
    """One block of rows per algorithm, x-axis columns ``t`` and ``oracle_calls``."""
    header = _summary_header()
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for algo, s in summaries.items():
            for i in range(len(s["t"])):
                w.writerow([algo] + [format_value(c, s[c][i]) for c in header[1:]])


def write_gnuplot(summaries: dict[str, dict[str, np.ndarray]], path) -> None:
    """Whitespace-separated blocks (one gnuplot ``index`` per algorithm); NaN printed as ``nan``."""
    header = _summary_header()[1:]
    with open(Path(path), "w") as fh:
        fh.write("# columns: " + " ".join(f"{i + 1}:{c}" for i, c in enumerate(header)) + "\n")
        fh.write("# one block per algorithm, separated by two blank lines; use `index N`\n")
        fh.write("# example: plot 'summary.dat' index 0 using 2:($" + str(header.index("running_avg_mean") + 1)
                 + ") with lines\n")
        for b, (algo, s) in enumerate(summaries.items()):
            if b:
                fh.write("\n\n")
            fh.write(f"# index {b}: {algo}\n")
            for i in range(len(s["t"])):
                vals = []
                for c in header:
                    v = float(s[c][i])
                    vals.append("nan" if math.isnan(v) else (str(int(v)) if c in INT_COLUMNS else repr(v)))
                fh.write(" ".join(vals) + "\n")

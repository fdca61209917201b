"""CSV artifacts: headers, metadata comments and number formatting.

Files are comma-separated with LF endings. ``#`` lines before the header
carry ``key=value`` metadata. Floats are written with ``repr`` so they
round-trip exactly and the bytes depend only on the values.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .circuit import Trace
from .protocol import BellTestResult, ConditioningRun

CYCLES_FIELDS = ("cycle", "r_a_after_bell_ohm", "r_b_after_bell_ohm",
                 "r_a_after_food_ohm", "r_b_after_food_ohm")
PHASES_FIELDS = ("cycle", "phase", "r_a_ohm", "r_b_ohm")
BELL_TEST_FIELDS = ("r_a_ohm", "r_b_ohm", "threshold_ohm", "salivation")
TRACE_FIELDS = ("t_s", "v_drive_v", "i_a_a", "i_b_a", "r_a_ohm", "r_b_ohm", "w_a", "w_b")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def render_csv(fields: Sequence[str], rows: Iterable[Sequence], meta: Mapping[str, object] = {}
               ) -> str:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={fmt(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def cycles_csv(run: ConditioningRun, meta: Mapping[str, object]) -> str:
    meta = {**meta, "baseline_r_a_ohm": run.baseline_r_a, "baseline_r_b_ohm": run.baseline_r_b}
    rows = [(r.cycle_idx, r.r_a_after_bell, r.r_b_after_bell, r.r_a_after_food,
             r.r_b_after_food) for r in run.records]
    return render_csv(CYCLES_FIELDS, rows, meta)


def phases_csv(run: ConditioningRun, meta: Mapping[str, object]) -> str:
    """Long form: one row per read, starting with the baseline as cycle 0."""
    rows = [(0, "baseline", run.baseline_r_a, run.baseline_r_b)]
    for r in run.records:
        rows.append((r.cycle_idx, "bell", r.r_a_after_bell, r.r_b_after_bell))
        rows.append((r.cycle_idx, "food", r.r_a_after_food, r.r_b_after_food))
    if run.bell_test is not None:
        rows.append((len(run.records) + 1, "bell_test", run.bell_test.r_a, run.bell_test.r_b))
    return render_csv(PHASES_FIELDS, rows, meta)


def bell_test_csv(result: BellTestResult, threshold: float, meta: Mapping[str, object]) -> str:
    return render_csv(BELL_TEST_FIELDS,
                      [(result.r_a, result.r_b, float(threshold), result.salivation)], meta)


def trace_rows(trace: Trace, r_a: np.ndarray, r_b: np.ndarray, w_a: np.ndarray,
               w_b: np.ndarray):
    zeros = np.zeros(len(trace))
    i_a = trace.branch_currents.get("A", zeros)
    i_b = trace.branch_currents.get("B", zeros)
    for k in range(len(trace)):
        yield (trace.time[k], trace.drive[k], i_a[k], i_b[k], r_a[k], r_b[k], w_a[k], w_b[k])


def trace_csv(trace: Trace, r_a, r_b, w_a, w_b, meta: Mapping[str, object]) -> str:
    return render_csv(TRACE_FIELDS, trace_rows(trace, r_a, r_b, w_a, w_b), meta)


def read_csv(path: str | Path) -> tuple[dict[str, str], dict[str, list[str]]]:
    """Return (metadata, columns) of a file written by this module."""
    meta: dict[str, str] = {}
    body = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                k, sep, v = line[1:].strip().partition("=")
                if sep:
                    meta[k.strip()] = v.strip()
            elif line.strip():
                body.append(line)
    reader = csv.reader(body)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError(f"{path}: no header row") from None
    cols: dict[str, list[str]] = {h: [] for h in header}
    for row in reader:
        if len(row) != len(header):
            raise ValueError(f"{path}: row has {len(row)} fields, header has {len(header)}")
        for h, v in zip(header, row):
            cols[h].append(v)
    return meta, cols

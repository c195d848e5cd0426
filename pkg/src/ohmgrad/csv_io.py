"""Tabular result files. Every writer re-reads its output and checks the schema."""

from __future__ import annotations

import csv
import json
from pathlib import Path

SCHEMAS = {
    "steady_state": ("edge_index", "s", "v", "i"),
    "gradients": ("edge_index", "g_analytical", "g_two_phase", "g_limit", "beta"),
    "gep_sweep": ("beta", "estimate", "oracle", "abs_error"),
    "run": ("step", "loss", "accuracy"),
    "sweep_summary": ("estimator", "p_freeze", "mean_acc", "std_acc", "trials"),
    "landscape": ("q1", "q2", "loss"),
    "trajectory_coords": ("step", "q1", "q2"),
    "bias": ("edge_index", "predicted", "empirical", "std_error", "z", "analytical_shift",
             "analytical_std_error"),
    "verify": ("invariant", "max_residual", "tolerance", "passed"),
    "regression": ("network", "sigma", "estimator", "final_loss", "frobenius_error"),
}


class SchemaViolation(ValueError):
    pass


def _fmt(value) -> str:
    if value is None:
        return ""
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def validate_csv(path, schema: str) -> int:
    """Check header and field counts of ``path``; return the number of data rows."""
    columns = SCHEMAS[schema]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != columns:
            raise SchemaViolation(f"{path}: header {header} does not match {list(columns)}")
        n = 0
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(columns):
                raise SchemaViolation(f"{path}:{lineno}: {len(row)} fields, expected {len(columns)}")
            n += 1
    return n


def write_csv(path, schema: str, rows) -> Path:
    path = Path(path)
    columns = SCHEMAS[schema]
    count = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row[c] for c in columns]
            w.writerow([_fmt(v) for v in row])
            count += 1
    if validate_csv(path, schema) != count:
        raise SchemaViolation(f"{path}: row count changed on re-read")
    return path


def read_csv(path, schema: str) -> list[dict]:
    validate_csv(path, schema)
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(path) as fh:
        json.load(fh)
    return path


def steady_state_rows(state):
    for e, (s, v, i) in enumerate(zip(state.s, state.v, state.i)):
        yield e, float(s), float(v), float(i)


def gradient_rows(analytical, two_phase, limit, beta):
    for e, (a, t, l) in enumerate(zip(analytical, two_phase, limit)):
        yield e, float(a), float(t), float(l), float(beta)

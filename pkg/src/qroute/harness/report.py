"""Aggregation of RunRecord CSV files into mean ± σ summary tables."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..metrics import UNDEFINED, RunRecord

GROUP_KEYS = ("algorithm", "ansatz", "optimizer", "n", "penalty", "depth")
SUMMARY_FIELDS = ("energy", "approx_ratio", "m_feas", "m_len", "circuit_evals")


class SchemaError(ValueError):
    pass


def write_records(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RunRecord.columns())
        for r in records:
            w.writerow(r.row())


def read_records(path) -> list[RunRecord]:
    expected = RunRecord.columns()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        if missing:
            raise SchemaError(f"{path}: missing column {missing[0]!r}")
        if extra:
            raise SchemaError(f"{path}: unexpected column {extra[0]!r}")
        if header != expected:
            bad = next(h for h, e in zip(header, expected) if h != e)
            raise SchemaError(f"{path}: column {bad!r} is out of order")
        try:
            return [RunRecord.from_row(row) for row in reader]
        except (ValueError, TypeError) as exc:
            raise SchemaError(f"{path}: malformed row: {exc}") from None


def _mean_std(values) -> tuple[float, float] | None:
    v = np.array([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return None
    return float(v.mean()), float(v.std())


def summarize(records) -> list[dict]:
    """One row per group, in order of first appearance."""
    groups: dict[tuple, list] = {}
    for r in records:
        groups.setdefault(tuple(getattr(r, k) for k in GROUP_KEYS), []).append(r)
    rows = []
    for key, rs in groups.items():
        row = dict(zip(GROUP_KEYS, key))
        row["runs"] = len(rs)
        row["budget_exhausted"] = any(r.termination == "budget" for r in rs)
        for f in SUMMARY_FIELDS:
            row[f] = _mean_std(getattr(r, f) for r in rs)
        rows.append(row)
    return rows


def _fmt(ms, digits=4) -> str:
    if ms is None:
        return UNDEFINED
    return f"{ms[0]:.{digits}f} ± {ms[1]:.{digits}f}"


def summary_table(rows) -> list[list[str]]:
    header = list(GROUP_KEYS) + ["runs"] + list(SUMMARY_FIELDS)
    out = [header]
    for row in rows:
        cells = [str(row[k]) for k in GROUP_KEYS] + [str(row["runs"])]
        for f in SUMMARY_FIELDS:
            cells.append(_fmt(row[f], 1 if f == "circuit_evals" else 4))
        if row["budget_exhausted"]:
            cells[header.index("circuit_evals")] += "*"
        out.append(cells)
    return out


def render_text(table) -> str:
    widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_summary_csv(path, table) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(table)


def report(paths) -> tuple[list[list[str]], str]:
    records = []
    for p in paths:
        records.extend(read_records(Path(p)))
    table = summary_table(summarize(records))
    return table, render_text(table)

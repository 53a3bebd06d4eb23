"""CSV and JSON emission of study results."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .studies import StudyResult


def format_cell(value) -> str:
    """Text for one CSV cell; floats keep 17 significant digits so they round-trip."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def write_csv(rows, path: Path) -> Path:
    columns = list(rows[0].keys()) if rows else []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(row.get(k)) for k in columns])
    return path


def write_result(result: StudyResult, out_dir, fmt: str = "csv") -> list:
    """Write ``result`` under ``out_dir``; returns the created paths.

    CSV: one file per table plus ``<kind>_summary.csv``.  JSON: a single
    ``<kind>.json`` holding the summary, the tables and one object per run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {**result.summary, "partial": result.partial}
    if fmt == "json":
        path = out / f"{result.kind}.json"
        doc = {"study": result.kind, "summary": summary, "tables": result.tables,
               "runs": result.runs}
        path.write_text(json.dumps(_json_safe(doc), indent=1) + "\n")
        return [path]
    if fmt != "csv":
        raise ValueError(f"unknown output format {fmt!r}")
    paths = [write_csv(rows, out / f"{result.kind}_{name}.csv")
             for name, rows in result.tables.items()]
    paths.append(write_csv([{"key": k, "value": v} for k, v in summary.items()],
                           out / f"{result.kind}_summary.csv"))
    return paths

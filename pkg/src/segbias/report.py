"""Tabular report emission (CSV and Markdown).

The column grid is fixed: label, size, accuracy, precision, recall, iou, f1,
specificity, hd, assd. The percent view scales size and the counting metrics
by 100 with two decimals (hd/assd stay in pixels, two decimals); the raw view
keeps full precision. Undefined values render as empty cells, with per-row
exclusion counts appended as footnotes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

COLUMNS = (
    "label",
    "size",
    "accuracy",
    "precision",
    "recall",
    "iou",
    "f1",
    "specificity",
    "hd",
    "assd",
)
_PERCENT_COLUMNS = frozenset(
    {"size", "accuracy", "precision", "recall", "iou", "f1", "specificity"}
)


class TableFormat(Enum):
    CSV = "csv"
    MARKDOWN = "md"


@dataclass(frozen=True)
class ReportRow:
    label: str
    size: float | None = None
    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    iou: float | None = None
    f1: float | None = None
    specificity: float | None = None
    hd: float | None = None
    assd: float | None = None
    excluded: Mapping[str, int] = field(default_factory=dict)

    def cell(self, column: str) -> float | str | None:
        return getattr(self, column)


def _format_cell(column: str, value, percent: bool) -> str:
    if value is None:
        return ""
    if column == "label":
        return str(value)
    if percent:
        if column in _PERCENT_COLUMNS:
            return f"{value * 100:.2f}"
        return f"{value:.2f}"  # hd/assd stay in pixel units
    return repr(float(value))


def _footnotes(rows: Sequence[ReportRow]) -> list[str]:
    notes = []
    for row in rows:
        dropped = {k: v for k, v in sorted(row.excluded.items()) if v > 0}
        if dropped:
            detail = ", ".join(f"{k}={v}" for k, v in dropped.items())
            notes.append(f"{row.label}: undefined values excluded: {detail}")
    return notes


def emit_table(
    rows: Sequence[ReportRow],
    fmt: TableFormat = TableFormat.CSV,
    percent: bool = True,
    notes: Sequence[str] = (),
) -> str:
    """Render rows as CSV or Markdown text (deterministic bytes)."""
    grid = [
        [_format_cell(col, row.cell(col), percent) for col in COLUMNS] for row in rows
    ]
    notes = _footnotes(rows) + list(notes)
    if fmt is TableFormat.CSV:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(grid)
        for note in notes:
            buffer.write(f"# {note}\n")
        return buffer.getvalue()
    lines = [
        "| " + " | ".join(COLUMNS) + " |",
        "| " + " | ".join("---" for _ in COLUMNS) + " |",
    ]
    for cells in grid:
        lines.append("| " + " | ".join(cells) + " |")
    text = "\n".join(lines) + "\n"
    if notes:
        text += "\n" + "\n".join(f"*{note}*" for note in notes) + "\n"
    return text


def write_report(
    rows: Sequence[ReportRow],
    out_path,
    fmt: TableFormat = TableFormat.CSV,
    notes: Sequence[str] = (),
) -> None:
    """Write the formatted table plus a parallel full-precision raw CSV.

    The raw CSV lands next to ``out_path`` with a ``.raw.csv`` suffix so
    two-decimal rounding never hides information.
    """
    out_path = Path(out_path)
    out_path.write_text(emit_table(rows, fmt, percent=True, notes=notes), encoding="utf-8")
    raw_path = out_path.with_name(out_path.stem + ".raw.csv")
    raw_path.write_text(
        emit_table(rows, TableFormat.CSV, percent=False, notes=notes), encoding="utf-8"
    )

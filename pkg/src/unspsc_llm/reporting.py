"""Render accuracy matrices as markdown, CSV, or JSON documents."""

from __future__ import annotations

import csv
import io
import json

from .evaluation import REPORT_LEVELS, AccuracyMatrix, Cell, MatrixRow

FORMATS = ("markdown", "csv", "json")
FORMAT_EXTENSIONS = {"markdown": "md", "csv": "csv", "json": "json"}
NO_RESULTS_MARKER = "No results."

_HEADER_CELLS = ["Temperature"] + [f"Accuracy {level.label.capitalize()}" for level in REPORT_LEVELS]

_CSV_COLUMNS = ["template_id", "temperature", "n", "refusals", "unparseable"] + [
    f"{level.label}_{suffix}"
    for level in REPORT_LEVELS
    for suffix in ("correct", "total", "fraction")
]


class UnsupportedFormat(ValueError):
    pass


def format_temperature(temperature: float) -> str:
    if temperature == int(temperature):
        return str(int(temperature))
    return f"{temperature:.2f}"


def format_percent(fraction: float | None) -> str:
    if fraction is None:
        return "n/a"
    return f"{fraction * 100:.2f}%"


def render_report(matrices: list[AccuracyMatrix], fmt: str) -> str:
    if fmt == "markdown":
        return render_markdown(matrices)
    if fmt == "csv":
        return render_csv(matrices)
    if fmt == "json":
        return render_json(matrices)
    raise UnsupportedFormat(fmt)


def render_markdown(matrices: list[AccuracyMatrix]) -> str:
    if not matrices:
        return NO_RESULTS_MARKER + "\n"
    blocks = []
    for matrix in matrices:
        lines = [f"## {matrix.template_id}", ""]
        lines.append("| " + " | ".join(_HEADER_CELLS) + " |")
        lines.append("| " + " | ".join("---" for _ in _HEADER_CELLS) + " |")
        for row in matrix.rows:
            cells = [format_temperature(row.temperature)] + [
                format_percent(row.cells[level].fraction) for level in REPORT_LEVELS
            ]
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")
        lines.append("Replies without a code are scored incorrect at every level:")
        lines.append("")
        for row in matrix.rows:
            lines.append(
                f"- temperature {format_temperature(row.temperature)}: "
                f"n={row.n}, refusals={row.refusals}, unparseable={row.unparseable}"
            )
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def render_csv(matrices: list[AccuracyMatrix]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    if not matrices:
        writer.writerow(["note"])
        writer.writerow([NO_RESULTS_MARKER])
        return buffer.getvalue()
    writer.writerow(_CSV_COLUMNS)
    for matrix in matrices:
        for row in matrix.rows:
            out = [
                matrix.template_id,
                format_temperature(row.temperature),
                row.n,
                row.refusals,
                row.unparseable,
            ]
            for level in REPORT_LEVELS:
                cell = row.cells[level]
                fraction = cell.fraction
                out.extend([cell.correct, cell.total, "" if fraction is None else repr(fraction)])
            writer.writerow(out)
    return buffer.getvalue()


def read_report_csv(text: str) -> list[AccuracyMatrix]:
    """Parse a report CSV back into matrices (counts are authoritative)."""
    reader = csv.DictReader(io.StringIO(text))
    by_template: dict[str, list[MatrixRow]] = {}
    for record in reader:
        cells = {
            level: Cell(int(record[f"{level.label}_correct"]), int(record[f"{level.label}_total"]))
            for level in REPORT_LEVELS
        }
        by_template.setdefault(record["template_id"], []).append(
            MatrixRow(
                temperature=float(record["temperature"]),
                n=int(record["n"]),
                refusals=int(record["refusals"]),
                unparseable=int(record["unparseable"]),
                cells=cells,
            )
        )
    return [AccuracyMatrix(tid, tuple(rows)) for tid, rows in by_template.items()]


def matrix_to_dict(matrix: AccuracyMatrix) -> dict:
    return {
        "template_id": matrix.template_id,
        "rows": [
            {
                "temperature": row.temperature,
                "n": row.n,
                "refusals": row.refusals,
                "unparseable": row.unparseable,
                "levels": {
                    level.label: {
                        "correct": row.cells[level].correct,
                        "total": row.cells[level].total,
                        "fraction": row.cells[level].fraction,
                    }
                    for level in REPORT_LEVELS
                },
            }
            for row in matrix.rows
        ],
    }


def render_json(matrices: list[AccuracyMatrix]) -> str:
    document: dict = {"matrices": [matrix_to_dict(m) for m in matrices]}
    if not matrices:
        document["note"] = NO_RESULTS_MARKER
    return json.dumps(document, indent=2, sort_keys=True) + "\n"

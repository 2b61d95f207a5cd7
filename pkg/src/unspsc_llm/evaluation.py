"""Per-level scoring of predictions and aggregation into accuracy matrices.

Refusals and unparseable replies count as incorrect at every level in the
primary numbers; their tallies ride along so the exclusion variant can be
recomputed from any report.
"""

from __future__ import annotations

from dataclasses import dataclass

from .parsing import Outcome, ParsedPrediction
from .taxonomy import LEVELS, HierarchyLevel, UnspscCode, match_at, parse_code

#: Report column order, finest level first.
REPORT_LEVELS = (
    HierarchyLevel.COMMODITY,
    HierarchyLevel.CLASS,
    HierarchyLevel.FAMILY,
    HierarchyLevel.SEGMENT,
)


class ShapeMismatch(ValueError):
    pass


def score(prediction: ParsedPrediction, gold: UnspscCode) -> dict[HierarchyLevel, bool]:
    """Exact-match verdict at each level; no code means false everywhere."""
    if prediction.outcome is Outcome.CODE and prediction.code is not None:
        return {level: match_at(prediction.code, gold, level) for level in LEVELS}
    return {level: False for level in LEVELS}


@dataclass(frozen=True)
class ClassificationResult:
    record_id: str
    template_id: str
    temperature: float
    model: str
    prediction: ParsedPrediction
    gold: UnspscCode
    match: dict[HierarchyLevel, bool]
    error: str | None = None

    @classmethod
    def build(
        cls,
        record_id: str,
        template_id: str,
        temperature: float,
        model: str,
        prediction: ParsedPrediction,
        gold: UnspscCode,
        error: str | None = None,
    ) -> "ClassificationResult":
        return cls(
            record_id=record_id,
            template_id=template_id,
            temperature=float(temperature),
            model=model,
            prediction=prediction,
            gold=gold,
            match=score(prediction, gold),
            error=error,
        )


def result_to_dict(result: ClassificationResult) -> dict:
    prediction = result.prediction
    return {
        "record_id": result.record_id,
        "template_id": result.template_id,
        "temperature": result.temperature,
        "model": result.model,
        "gold": result.gold.digits,
        "prediction": {
            "outcome": prediction.outcome.value,
            "code": prediction.code.digits if prediction.code else None,
            "matched_span": list(prediction.matched_span) if prediction.matched_span else None,
            "raw_text": prediction.raw_text,
        },
        "match": {level.label: result.match[level] for level in LEVELS},
        "error": result.error,
    }


def result_from_dict(data: dict) -> ClassificationResult:
    pred = data["prediction"]
    span = pred.get("matched_span")
    prediction = ParsedPrediction(
        outcome=Outcome(pred["outcome"]),
        raw_text=pred["raw_text"],
        code=parse_code(pred["code"]) if pred.get("code") else None,
        matched_span=tuple(span) if span else None,
    )
    return ClassificationResult(
        record_id=data["record_id"],
        template_id=data["template_id"],
        temperature=float(data["temperature"]),
        model=data["model"],
        prediction=prediction,
        gold=parse_code(data["gold"]),
        match={level: bool(data["match"][level.label]) for level in LEVELS},
        error=data.get("error"),
    )


@dataclass(frozen=True)
class Cell:
    correct: int
    total: int

    @property
    def fraction(self) -> float | None:
        if self.total == 0:
            return None
        return self.correct / self.total


@dataclass(frozen=True)
class MatrixRow:
    temperature: float
    n: int
    refusals: int
    unparseable: int
    cells: dict[HierarchyLevel, Cell]


@dataclass(frozen=True)
class AccuracyMatrix:
    """Temperatures x levels accuracy grid for one template."""

    template_id: str
    rows: tuple[MatrixRow, ...]


def aggregate(results: list[ClassificationResult]) -> list[AccuracyMatrix]:
    """One matrix per template, rows ordered by temperature high to low."""
    groups: dict[str, dict[float, list[ClassificationResult]]] = {}
    for result in results:
        groups.setdefault(result.template_id, {}).setdefault(result.temperature, []).append(result)

    matrices = []
    for template_id in sorted(groups):
        rows = []
        for temperature in sorted(groups[template_id], reverse=True):
            bucket = groups[template_id][temperature]
            n = len(bucket)
            cells = {
                level: Cell(sum(1 for r in bucket if r.match[level]), n) for level in LEVELS
            }
            rows.append(
                MatrixRow(
                    temperature=temperature,
                    n=n,
                    refusals=sum(1 for r in bucket if r.prediction.outcome is Outcome.REFUSAL),
                    unparseable=sum(
                        1 for r in bucket if r.prediction.outcome is Outcome.UNPARSEABLE
                    ),
                    cells=cells,
                )
            )
        matrices.append(AccuracyMatrix(template_id=template_id, rows=tuple(rows)))
    return matrices


@dataclass(frozen=True)
class MatrixComparison:
    """Cell-wise fraction deltas (a minus b) plus which side wins each cell."""

    temperatures: tuple[float, ...]
    deltas: dict[tuple[float, HierarchyLevel], float | None]
    winners: dict[tuple[float, HierarchyLevel], str]


def compare_matrices(a: AccuracyMatrix, b: AccuracyMatrix) -> MatrixComparison:
    temps_a = tuple(row.temperature for row in a.rows)
    temps_b = tuple(row.temperature for row in b.rows)
    if temps_a != temps_b:
        raise ShapeMismatch(f"temperature rows differ: {temps_a} vs {temps_b}")
    rows_b = {row.temperature: row for row in b.rows}
    deltas: dict[tuple[float, HierarchyLevel], float | None] = {}
    winners: dict[tuple[float, HierarchyLevel], str] = {}
    for row_a in a.rows:
        row_b = rows_b[row_a.temperature]
        for level in LEVELS:
            fa = row_a.cells[level].fraction
            fb = row_b.cells[level].fraction
            cell = (row_a.temperature, level)
            if fa is None or fb is None:
                deltas[cell] = None
                winners[cell] = "n/a"
            else:
                deltas[cell] = fa - fb
                winners[cell] = "a" if fa > fb else "b" if fb > fa else "tie"
    return MatrixComparison(temperatures=temps_a, deltas=deltas, winners=winners)

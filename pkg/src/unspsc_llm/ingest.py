"""Purchase-order CSV loading, text cleaning, sampling, and code census."""

from __future__ import annotations

import csv
import io
import logging
import random
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .taxonomy import LEVELS, CodeError, HierarchyLevel, UnspscCode, parse_code, truncate

logger = logging.getLogger(__name__)


class SchemaColumnMissing(Exception):
    """A mapped column is absent from the file header."""


class EmptyFile(Exception):
    """The input file has no rows at all."""


@dataclass(frozen=True)
class DatasetSchema:
    """Column mapping for a purchase-order CSV.

    Defaults target the California purchase-order export. With
    ``has_header=False`` the column fields are 0-based indexes given as
    strings.
    """

    item_name: str = "Item Name"
    item_description: str | None = "Item Description"
    gold_code: str = "Normalized UNSPSC"
    record_id: str | None = None
    delimiter: str = ","
    quotechar: str = '"'
    has_header: bool = True

    def __post_init__(self) -> None:
        if not self.item_name or not self.gold_code:
            raise ValueError("item_name and gold_code columns must be mapped")
        mapped = [
            col
            for col in (self.record_id, self.item_name, self.item_description, self.gold_code)
            if col
        ]
        if len(set(mapped)) != len(mapped):
            raise ValueError(f"mapped columns must be distinct, got {mapped}")


@dataclass(frozen=True)
class PurchaseRecord:
    """One accepted item row."""

    record_id: str
    item_name: str
    item_description: str
    gold_code: UnspscCode
    source_row: int


class RejectReason(str, Enum):
    MISSING_NAME = "MissingName"
    INVALID_GOLD_CODE = "InvalidGoldCode"
    MALFORMED_ROW = "MalformedRow"


@dataclass
class RejectionReport:
    """Bookkeeping for rows dropped during loading."""

    rejections: list[tuple[int, RejectReason]] = field(default_factory=list)
    kept_count: int = 0

    @property
    def rejected_count(self) -> int:
        return len(self.rejections)

    @property
    def total_rows(self) -> int:
        return self.kept_count + self.rejected_count

    def counts(self) -> dict[RejectReason, int]:
        tally = {reason: 0 for reason in RejectReason}
        for _, reason in self.rejections:
            tally[reason] += 1
        return tally

    def add(self, source_row: int, reason: RejectReason) -> None:
        self.rejections.append((source_row, reason))


def clean_text(raw: str) -> str:
    """Normalize to NFC, replace control characters with spaces, collapse runs.

    Case and punctuation are preserved; the output feeds prompts verbatim.
    """
    text = unicodedata.normalize("NFC", raw)
    text = "".join(" " if unicodedata.category(ch) == "Cc" else ch for ch in text)
    return " ".join(text.split())


def _resolve_columns(schema: DatasetSchema, header: list[str] | None) -> dict[str, int]:
    names = {
        "item_name": schema.item_name,
        "item_description": schema.item_description,
        "gold_code": schema.gold_code,
        "record_id": schema.record_id,
    }
    indexes: dict[str, int] = {}
    for role, column in names.items():
        if column is None:
            continue
        if header is not None:
            if column not in header:
                raise SchemaColumnMissing(f"column {column!r} (for {role}) not in header")
            indexes[role] = header.index(column)
        else:
            try:
                indexes[role] = int(column)
            except ValueError:
                raise SchemaColumnMissing(
                    f"column for {role} must be a numeric index without a header, got {column!r}"
                ) from None
    return indexes


def load_dataset(
    path: str | Path, schema: DatasetSchema | None = None
) -> tuple[list[PurchaseRecord], RejectionReport]:
    """Load, clean, and validate a purchase-order CSV.

    Returns the accepted records in file order plus a report covering every
    rejected data row. Blank lines are ignored. Invalid UTF-8 byte sequences
    are replaced with U+FFFD and logged.
    """
    schema = schema or DatasetSchema()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        logger.warning("replacing invalid UTF-8 byte sequences in %s", path)
        text = raw.decode("utf-8", errors="replace")

    reader = csv.reader(
        io.StringIO(text, newline=""), delimiter=schema.delimiter, quotechar=schema.quotechar
    )
    rows = [row for row in reader if row]
    if not rows:
        raise EmptyFile(f"no rows in {path}")

    if schema.has_header:
        header, data_rows = rows[0], rows[1:]
        columns = _resolve_columns(schema, header)
    else:
        data_rows = rows
        columns = _resolve_columns(schema, None)

    needed = max(columns.values())
    records: list[PurchaseRecord] = []
    report = RejectionReport()
    seen_ids: set[str] = set()
    for source_row, row in enumerate(data_rows, start=1):
        if len(row) <= needed:
            report.add(source_row, RejectReason.MALFORMED_ROW)
            continue
        name = clean_text(row[columns["item_name"]])
        if not name:
            report.add(source_row, RejectReason.MISSING_NAME)
            continue
        try:
            gold = parse_code(row[columns["gold_code"]])
        except CodeError:
            report.add(source_row, RejectReason.INVALID_GOLD_CODE)
            continue
        if "item_description" in columns:
            description = clean_text(row[columns["item_description"]])
        else:
            description = ""
        if "record_id" in columns:
            record_id = clean_text(row[columns["record_id"]])
        else:
            record_id = str(source_row)
        if not record_id or record_id in seen_ids:
            report.add(source_row, RejectReason.MALFORMED_ROW)
            continue
        seen_ids.add(record_id)
        records.append(
            PurchaseRecord(
                record_id=record_id,
                item_name=name,
                item_description=description,
                gold_code=gold,
                source_row=source_row,
            )
        )
        report.kept_count += 1
    return records, report


def sample(records: list[PurchaseRecord], n: int, seed: int) -> list[PurchaseRecord]:
    """Seeded uniform sample without replacement, returned in source order."""
    if n < 0:
        raise ValueError("sample size must be >= 0")
    if n >= len(records):
        return list(records)
    chosen = random.Random(seed).sample(records, n)
    return sorted(chosen, key=lambda record: record.source_row)


def census(records: list[PurchaseRecord]) -> dict[HierarchyLevel, int]:
    """Count distinct gold codes at each hierarchy level."""
    return {
        level: len({truncate(record.gold_code, level).digits for record in records})
        for level in LEVELS
    }

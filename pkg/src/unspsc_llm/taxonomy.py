"""UNSPSC code arithmetic: parsing, level truncation, lineage, catalog lookup.

An UNSPSC code is eight decimal digits read as four two-digit pairs, one per
hierarchy level from segment (coarsest) down to commodity (finest). Zeroing
the pairs below a level yields that level's code, e.g. 12345678 becomes
12345600 at class level.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

logger = logging.getLogger(__name__)


class CodeError(ValueError):
    """Base class for UNSPSC code validation failures."""


class NotNumeric(CodeError):
    pass


class WrongLength(CodeError):
    pass


class ZeroSegment(CodeError):
    pass


class MalformedZeroStructure(CodeError):
    pass


class HierarchyLevel(IntEnum):
    """The four tree levels; the value is the significant digit width."""

    SEGMENT = 2
    FAMILY = 4
    CLASS = 6
    COMMODITY = 8

    @property
    def width(self) -> int:
        return self.value

    @property
    def label(self) -> str:
        return self.name.lower()


#: Coarse-to-fine traversal order.
LEVELS = (
    HierarchyLevel.SEGMENT,
    HierarchyLevel.FAMILY,
    HierarchyLevel.CLASS,
    HierarchyLevel.COMMODITY,
)


def _is_decimal(text: str) -> bool:
    return bool(text) and text.isascii() and text.isdigit()


@dataclass(frozen=True)
class UnspscCode:
    """A validated 8-digit UNSPSC code."""

    digits: str

    def __post_init__(self) -> None:
        d = self.digits
        if not _is_decimal(d):
            raise NotNumeric(f"code must be decimal digits, got {d!r}")
        if len(d) != 8:
            raise WrongLength(f"code must be 8 digits, got {len(d)}: {d!r}")
        if d[:2] == "00":
            raise ZeroSegment(f"segment pair must not be '00': {d!r}")
        seen_zero = False
        for pair in self.pairs():
            if pair == "00":
                seen_zero = True
            elif seen_zero:
                raise MalformedZeroStructure(f"nonzero pair below a zero pair in {d!r}")

    def pairs(self) -> tuple[str, str, str, str]:
        d = self.digits
        return d[0:2], d[2:4], d[4:6], d[6:8]

    def __str__(self) -> str:
        return self.digits


def parse_code(text: str) -> UnspscCode:
    """Parse ``text`` into a code, right-padding 2/4/6-digit input with zeros.

    Raises NotNumeric, WrongLength, ZeroSegment, or MalformedZeroStructure.
    """
    stripped = text.strip()
    if not _is_decimal(stripped):
        raise NotNumeric(f"code must be decimal digits, got {text!r}")
    if len(stripped) not in (2, 4, 6, 8):
        raise WrongLength(
            f"code must have 2, 4, 6, or 8 digits, got {len(stripped)}: {text!r}"
        )
    return UnspscCode(stripped.ljust(8, "0"))


def truncate(code: UnspscCode, level: HierarchyLevel) -> UnspscCode:
    """Zero every digit pair finer than ``level``."""
    return UnspscCode(code.digits[: level.width].ljust(8, "0"))


def level_of(code: UnspscCode) -> HierarchyLevel:
    """Return the finest level whose digit pair is nonzero."""
    pairs = code.pairs()
    for idx in range(3, -1, -1):
        if pairs[idx] != "00":
            return LEVELS[idx]
    raise AssertionError("unreachable: segment pair is never '00'")


def lineage(code: UnspscCode) -> list[UnspscCode]:
    """Return the code truncated to each level, coarse to fine."""
    return [truncate(code, level) for level in LEVELS]


def match_at(pred: UnspscCode, gold: UnspscCode, level: HierarchyLevel) -> bool:
    """True iff the two codes agree once truncated to ``level``."""
    return pred.digits[: level.width] == gold.digits[: level.width]


@dataclass
class TaxonomyCatalog:
    """Optional code-to-title lookup loaded from a ``code,title`` CSV.

    Real catalogs are imperfect: entries whose parent truncation is missing
    are kept but listed in ``orphans``.
    """

    source: Path
    titles: dict[UnspscCode, str] = field(default_factory=dict)
    orphans: list[UnspscCode] = field(default_factory=list)

    def title(self, code: UnspscCode) -> str | None:
        return self.titles.get(code)

    def count_at(self, level: HierarchyLevel) -> int:
        return sum(1 for code in self.titles if level_of(code) == level)

    def __len__(self) -> int:
        return len(self.titles)


def load_catalog(path: str | Path) -> TaxonomyCatalog:
    """Load a catalog CSV with header columns ``code`` and ``title``."""
    path = Path(path)
    catalog = TaxonomyCatalog(source=path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"code", "title"} <= set(reader.fieldnames):
            raise ValueError(f"catalog {path} must have 'code' and 'title' columns")
        for row in reader:
            try:
                code = parse_code(row["code"] or "")
            except CodeError as exc:
                logger.warning("skipping catalog row with bad code %r: %s", row["code"], exc)
                continue
            catalog.titles[code] = (row["title"] or "").strip()
    for code in catalog.titles:
        level = level_of(code)
        if level == HierarchyLevel.SEGMENT:
            continue
        parent = truncate(code, LEVELS[LEVELS.index(level) - 1])
        if parent not in catalog.titles:
            catalog.orphans.append(code)
    if catalog.orphans:
        logger.warning("catalog %s has %d entries with no parent", path, len(catalog.orphans))
    return catalog

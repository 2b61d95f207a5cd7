"""Turn free-text model replies into a code, a refusal, or an unparseable verdict."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .taxonomy import CodeError, UnspscCode, parse_code

DEFAULT_REFUSAL_PHRASES = (
    "insufficient information",
    "cannot determine",
    "unable to classify",
)

# ASCII digits only; Unicode digits are never part of a code.
_RUN_RE = re.compile(r"[0-9]+")
_DIGIT_RE = re.compile(r"[0-9]")
_SEPARATORS = " -"
_VALID_WIDTHS = frozenset({2, 4, 6, 8})


class Outcome(str, Enum):
    CODE = "code"
    REFUSAL = "refusal"
    UNPARSEABLE = "unparseable"


@dataclass(frozen=True)
class ParsedPrediction:
    outcome: Outcome
    raw_text: str
    code: UnspscCode | None = None
    matched_span: tuple[int, int] | None = None


def load_refusal_phrases(path: str | Path) -> tuple[str, ...]:
    """Read refusal phrases from a text file, one per line."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    phrases = tuple(line.strip().lower() for line in lines if line.strip())
    if not phrases:
        raise ValueError(f"no refusal phrases in {path}")
    return phrases


def _pair_aligned_digits(token: str) -> str | None:
    """Digits of ``token`` if every separator sits between 2-digit pairs."""
    digits: list[str] = []
    for ch in token:
        if ch in _SEPARATORS:
            if len(digits) % 2:
                return None
        else:
            digits.append(ch)
    return "".join(digits)


def _try_candidate(digits: str) -> UnspscCode | None:
    if len(digits) not in _VALID_WIDTHS:
        return None
    try:
        return parse_code(digits)
    except CodeError:
        return None


def extract_code(
    text: str, refusal_phrases: Sequence[str] = DEFAULT_REFUSAL_PHRASES
) -> ParsedPrediction:
    """Extract the first valid code from ``text``, total over all inputs.

    A reply counts as a refusal only when a refusal phrase occurs and the
    text holds no digits; hedged replies that still supply a code are scored
    as codes. Candidates are maximal digit runs, optionally chained across
    single hyphens/spaces at pair boundaries (e.g. "4321-2110"); at each
    position the chained form is tried before the bare run. Off-length runs
    are skipped, never repaired.
    """
    if _DIGIT_RE.search(text) is None:
        lowered = text.lower()
        if any(phrase in lowered for phrase in refusal_phrases):
            return ParsedPrediction(Outcome.REFUSAL, text)
        return ParsedPrediction(Outcome.UNPARSEABLE, text)

    runs = [match.span() for match in _RUN_RE.finditer(text)]
    for index, (start, end) in enumerate(runs):
        chain_end = end
        cursor = index
        while (
            cursor + 1 < len(runs)
            and runs[cursor + 1][0] == runs[cursor][1] + 1
            and text[runs[cursor][1]] in _SEPARATORS
        ):
            cursor += 1
            chain_end = runs[cursor][1]
        if chain_end > end:
            digits = _pair_aligned_digits(text[start:chain_end])
            if digits is not None:
                code = _try_candidate(digits)
                if code is not None:
                    return ParsedPrediction(
                        Outcome.CODE, text, code=code, matched_span=(start, chain_end)
                    )
        code = _try_candidate(text[start:end])
        if code is not None:
            return ParsedPrediction(Outcome.CODE, text, code=code, matched_span=(start, end))
    return ParsedPrediction(Outcome.UNPARSEABLE, text)

"""Column preprocessing before annotation.

Representative cells are deduplicated, a column's predominant entity type is
voted from a tagger, cells that disagree with it are flagged, and flagged cells
are sent to the LLM (one request per column) for spelling fixes and
abbreviation expansions. Corrections live in an overlay; the loaded table is
never modified.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence

from sta_agent.llm import LlmClient, LlmError, correct_cell_text
from sta_agent.llm.tasks import ABBREV, SPELL
from sta_agent.table import CellRef, Table

logger = logging.getLogger(__name__)

UNTYPED = "UNTYPED"


def dedup_representative_cells(cells: Sequence[str], limit: int) -> list[str]:
    """First ``limit`` distinct non-empty cells, in order of first occurrence."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    seen: set[str] = set()
    out: list[str] = []
    for cell in cells:
        if not cell or cell in seen:
            continue
        seen.add(cell)
        out.append(cell)
        if len(out) == limit:
            break
    return out


def first_cells(cells: Sequence[str], limit: int) -> list[str]:
    """First ``limit`` non-empty cells, duplicates kept (dedup switched off)."""
    return [c for c in cells if c][:limit]


# ---------------------------------------------------------------------------
# Entity-type tagging


class EntityTagger(Protocol):
    def tag(self, text: str) -> Optional[str]: ...


_DEFAULT_GAZETTEER: dict[str, list[str]] = {
    "PLACE": [
        "Paris", "London", "Rome", "Berlin", "Madrid", "Lisbon", "Vienna", "Tokyo", "Beijing",
        "Wuhan", "New York City", "Los Angeles", "Portugal", "England", "France", "Germany",
        "Spain", "Italy", "China", "Brazil", "Argentina", "United States",
    ],
    "PERSON": [
        "Ronaldo", "Cristiano Ronaldo", "David Beckham", "Lionel Messi", "Robert Baker",
        "Zinedine Zidane", "Pele",
    ],
    "ORG": ["Al-Nassr FC", "Inter Miami CF", "Real Madrid CF", "Manchester United F.C."],
}

_NUMBER = re.compile(r"^[+-]?\d+(?:[.,]\d+)*%?$")
_DATE = re.compile(
    r"^\d{4}-\d{2}-\d{2}$|^\d{1,2}/\d{1,2}/\d{2,4}$"
    r"|^\d{1,2} (?:jan|feb|mar|apr|may|jun|jul|aug|sep|oct|nov|dec)[a-z]* \d{4}$",
    re.IGNORECASE,
)
_ORG_SUFFIX = re.compile(r"\b(?:F\.?C\.?|Inc\.?|Ltd\.?|Corp\.?|University|Club|Company|GmbH|S\.A\.)$")


class GazetteerTagger:
    """Offline tagger: NUMBER and DATE by regex, ORG by suffix, the rest by gazetteer.

    Gazetteer lookups are case-insensitive. The JSON file format is
    ``{"<TAG>": ["surface form", ...], ...}``.
    """

    def __init__(self, gazetteer: Optional[Mapping[str, Sequence[str]]] = None):
        gazetteer = _DEFAULT_GAZETTEER if gazetteer is None else gazetteer
        self._index: dict[str, str] = {}
        for tag in sorted(gazetteer):
            for form in gazetteer[tag]:
                self._index.setdefault(form.casefold(), tag)

    @classmethod
    def from_file(cls, path: str | Path) -> "GazetteerTagger":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(payload.get("gazetteer", payload))

    def tag(self, text: str) -> Optional[str]:
        text = text.strip()
        if not text:
            return None
        if _NUMBER.match(text):
            return "NUMBER"
        if _DATE.match(text):
            return "DATE"
        hit = self._index.get(text.casefold())
        if hit is not None:
            return hit
        if _ORG_SUFFIX.search(text):
            return "ORG"
        return None


@dataclass(frozen=True)
class EntityTypeProfile:
    column: tuple[str, int]
    type_counts: dict[str, int]
    predominant: str


def profile_entity_types(
    rep_cells: Sequence[str],
    tagger: EntityTagger,
    column: tuple[str, int] = ("", 0),
) -> EntityTypeProfile:
    counts = Counter(tagger.tag(c) or UNTYPED for c in rep_cells)
    if not counts:
        return EntityTypeProfile(column, {}, UNTYPED)
    predominant = min(counts, key=lambda tag: (-counts[tag], tag))
    return EntityTypeProfile(column, dict(sorted(counts.items())), predominant)


def flag_inconsistent_cells(
    cells: Sequence[tuple[CellRef, str]],
    profile: EntityTypeProfile,
    tagger: EntityTagger,
) -> list[CellRef]:
    """Cells whose tag differs from the column's predominant type."""
    if profile.predominant == UNTYPED:
        return []
    return [ref for ref, text in cells if text and (tagger.tag(text) or UNTYPED) != profile.predominant]


# ---------------------------------------------------------------------------
# Corrections


class CorrectionKind(str, Enum):
    SPELL_FIX = "SpellFix"
    ABBREV_EXPANSION = "AbbrevExpansion"
    UNCHANGED = "Unchanged"


_KIND = {SPELL: CorrectionKind.SPELL_FIX, ABBREV: CorrectionKind.ABBREV_EXPANSION}


@dataclass(frozen=True)
class CellCorrection:
    cell: CellRef
    original: str
    corrected: str
    kind: CorrectionKind

    def __post_init__(self) -> None:
        if self.kind is CorrectionKind.UNCHANGED and self.corrected != self.original:
            raise ValueError("an unchanged correction must keep the original text")


def correct_cells(
    flagged: Sequence[tuple[CellRef, str]],
    column_header: str,
    sample_cells: Sequence[str],
    llm: LlmClient,
) -> list[CellCorrection]:
    """One correction per flagged cell; distinct texts go to the LLM in a single request."""
    if not flagged:
        return []
    texts = list(dict.fromkeys(text for _, text in flagged))
    try:
        answers = dict(zip(texts, correct_cell_text(column_header, sample_cells, texts, llm)))
    except LlmError as exc:
        logger.warning("cell correction failed for column %r: %s; cells left unchanged", column_header, exc)
        answers = {}
    out = []
    for ref, text in flagged:
        corrected, kind = answers.get(text, (text, "none"))
        if kind in _KIND and corrected != text:
            out.append(CellCorrection(ref, text, corrected, _KIND[kind]))
        else:
            out.append(CellCorrection(ref, text, text, CorrectionKind.UNCHANGED))
    return out


@dataclass
class TableView:
    """A table seen through a corrections overlay."""

    table: Table
    overlay: dict[CellRef, str] = field(default_factory=dict)

    def apply(self, corrections: Sequence[CellCorrection]) -> None:
        for c in corrections:
            if c.kind is not CorrectionKind.UNCHANGED:
                self.overlay[c.cell] = c.corrected

    def cell(self, row: int, col: int) -> str:
        ref = CellRef(self.table.table_id, row, col)
        return self.overlay.get(ref, self.table.rows[row][col])

    def column(self, col: int) -> list[str]:
        return [self.cell(r, col) for r in range(self.table.n_rows)]

    def row(self, row: int) -> list[str]:
        return [self.cell(row, c) for c in range(self.table.n_cols)]

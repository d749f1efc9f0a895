"""Table ingestion, SemTab target files and per-column situation classification."""

from __future__ import annotations

import csv
import io
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

_WS = re.compile(r"\s+")

# Placeholder headers carry no semantics ("col0", "Unnamed: 3", ...).
MEANINGLESS_HEADER_PATTERNS: tuple[re.Pattern[str], ...] = (
    re.compile(r"^col\d+$", re.IGNORECASE),
    re.compile(r"^column\d+$", re.IGNORECASE),
    re.compile(r"^unnamed.*$", re.IGNORECASE),
    re.compile(r"^field\d+$", re.IGNORECASE),
)


class TableLoadError(ValueError):
    """Raised when a CSV table cannot be ingested."""


def normalize_cell(text: str) -> str:
    """Trim and collapse internal whitespace; case is preserved."""
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class CellRef:
    table_id: str
    row: int
    col: int


@dataclass(frozen=True)
class Table:
    """A loaded table. ``rows`` holds data rows only; the header row is separate."""

    table_id: str
    headers: tuple[Optional[str], ...]
    rows: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        if not self.table_id:
            raise ValueError("table_id must be non-empty")
        width = len(self.headers)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} cells, expected {width}")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.headers)

    def column(self, col: int) -> list[str]:
        return [row[col] for row in self.rows]

    def cell(self, row: int, col: int) -> str:
        return self.rows[row][col]

    def contains(self, ref: CellRef) -> bool:
        return ref.table_id == self.table_id and 0 <= ref.row < self.n_rows and 0 <= ref.col < self.n_cols


def _byte_offset(lines: Sequence[str], n_lines: int) -> int:
    return sum(len(line.encode("utf-8")) for line in lines[:n_lines])


def parse_table(text: str, table_id: str, *, header: bool = True) -> Table:
    """Parse CSV text into a :class:`Table`.

    Rows are padded with empty strings up to the widest record. Blank lines are
    skipped. Malformed quoting raises :class:`TableLoadError` with the byte offset
    of the offending record.
    """
    lines = text.splitlines(keepends=True)
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    records: list[list[str]] = []
    while True:
        start_line = reader.line_num
        try:
            record = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            offset = _byte_offset(lines, start_line)
            raise TableLoadError(
                f"{table_id}: malformed CSV record at byte offset {offset} (line {start_line + 1}): {exc}"
            ) from exc
        if not record:
            continue
        records.append([normalize_cell(value) for value in record])

    n_cols = max((len(r) for r in records), default=0)
    if n_cols == 0:
        raise TableLoadError(f"{table_id}: zero columns")
    padded = [r + [""] * (n_cols - len(r)) for r in records]

    if header and padded:
        headers: tuple[Optional[str], ...] = tuple(h or None for h in padded[0])
        body = padded[1:]
    else:
        headers = (None,) * n_cols
        body = padded
    return Table(table_id=table_id, headers=headers, rows=tuple(tuple(r) for r in body))


def load_table(path: str | Path, table_id: Optional[str] = None, *, header: bool = True) -> Table:
    """Load a UTF-8 CSV file. ``table_id`` defaults to the file stem."""
    path = Path(path)
    table_id = table_id or path.stem
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise TableLoadError(f"{table_id}: cannot read {path}: {exc}") from exc
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise TableLoadError(f"{table_id}: invalid UTF-8 at byte offset {exc.start}") from exc
    return parse_table(text, table_id, header=header)


def load_tables(directory: str | Path, *, header: bool = True) -> dict[str, Table]:
    """Load every ``*.csv`` in ``directory`` keyed by file stem."""
    directory = Path(directory)
    if not directory.is_dir():
        raise TableLoadError(f"not a directory: {directory}")
    tables = {}
    for path in sorted(directory.glob("*.csv")):
        tables[path.stem] = load_table(path, path.stem, header=header)
    return tables


def table_to_csv(table: Table, *, header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow([h or "" for h in table.headers])
    writer.writerows(table.rows)
    return buf.getvalue()


def write_table(table: Table, path: str | Path, *, header: bool = True) -> None:
    Path(path).write_text(table_to_csv(table, header=header), encoding="utf-8")


# ---------------------------------------------------------------------------
# Situation classification


class ColumnSituation(str, Enum):
    """Which annotation workflow a column needs."""

    HEADERLESS_WITH_CELLS = "HeaderlessWithCells"
    HEADERS_WITH_EMPTY_CELLS = "HeadersWithEmptyCells"
    FULLY_MEANINGFUL = "FullyMeaningful"


def is_meaningful_header(header: Optional[str]) -> bool:
    if header is None:
        return False
    h = header.strip()
    if len(h) <= 1:
        return False
    return not any(p.match(h) for p in MEANINGLESS_HEADER_PATTERNS)


def classify_column(
    header: Optional[str],
    cells: Sequence[str],
    *,
    min_valid_cells: int = 3,
    empty_cell_fraction: float = 0.5,
) -> ColumnSituation:
    non_empty = sum(1 for c in cells if c.strip())
    meaningful = is_meaningful_header(header)
    if not meaningful and non_empty >= min_valid_cells:
        return ColumnSituation.HEADERLESS_WITH_CELLS
    fraction = non_empty / len(cells) if cells else 0.0
    if meaningful and fraction < empty_cell_fraction:
        return ColumnSituation.HEADERS_WITH_EMPTY_CELLS
    return ColumnSituation.FULLY_MEANINGFUL


@dataclass(frozen=True)
class TableSituation:
    """Per-column situation map for one table."""

    table_id: str
    columns: tuple[ColumnSituation, ...]

    def of(self, col: int) -> ColumnSituation:
        return self.columns[col]

    @property
    def overall(self) -> ColumnSituation:
        # Most common variant; ties resolved by declaration order.
        counts = Counter(self.columns)
        order = list(ColumnSituation)
        return max(order, key=lambda s: (counts[s], -order.index(s)))


def classify_table(table: Table, *, min_valid_cells: int = 3, empty_cell_fraction: float = 0.5) -> TableSituation:
    return TableSituation(
        table.table_id,
        tuple(
            classify_column(
                table.headers[c],
                table.column(c),
                min_valid_cells=min_valid_cells,
                empty_cell_fraction=empty_cell_fraction,
            )
            for c in range(table.n_cols)
        ),
    )


# ---------------------------------------------------------------------------
# Target files


@dataclass
class TargetSet:
    """CEA and CTA targets. ``None`` means no target file was given for that task
    (every candidate cell/column is annotated), an empty list means none."""

    cea_targets: Optional[list[CellRef]] = None
    cta_targets: Optional[list[tuple[str, int]]] = None
    warnings: list[str] = field(default_factory=list)

    def for_table(self, table_id: str) -> "TargetSet":
        return TargetSet(
            None if self.cea_targets is None else [r for r in self.cea_targets if r.table_id == table_id],
            None if self.cta_targets is None else [t for t in self.cta_targets if t[0] == table_id],
        )


def _read_rows(path: Path) -> Iterable[tuple[int, list[str]]]:
    with path.open(encoding="utf-8-sig", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if row and any(v.strip() for v in row):
                yield lineno, [v.strip() for v in row]


def load_targets(
    cea_path: Optional[str | Path],
    cta_path: Optional[str | Path],
    tables: Mapping[str, Table],
) -> TargetSet:
    """Read SemTab-style target CSVs.

    CEA rows are ``table_id,row,col`` and CTA rows ``table_id,col``; rows are
    0-based over data rows. References to unknown tables or out-of-range
    indices are skipped and reported in ``warnings``.
    """
    targets = TargetSet()
    seen_cea: set[CellRef] = set()
    seen_cta: set[tuple[str, int]] = set()

    if cea_path is not None:
        targets.cea_targets = []
        for lineno, row in _read_rows(Path(cea_path)):
            try:
                ref = CellRef(row[0], int(row[1]), int(row[2]))
            except (IndexError, ValueError):
                targets.warnings.append(f"{cea_path}:{lineno}: unparseable CEA target {row!r}")
                continue
            table = tables.get(ref.table_id)
            if table is None:
                targets.warnings.append(f"{cea_path}:{lineno}: unknown table {ref.table_id!r}")
            elif not table.contains(ref):
                targets.warnings.append(f"{cea_path}:{lineno}: cell ({ref.row},{ref.col}) outside {ref.table_id}")
            elif ref not in seen_cea:
                seen_cea.add(ref)
                targets.cea_targets.append(ref)

    if cta_path is not None:
        targets.cta_targets = []
        for lineno, row in _read_rows(Path(cta_path)):
            try:
                key = (row[0], int(row[1]))
            except (IndexError, ValueError):
                targets.warnings.append(f"{cta_path}:{lineno}: unparseable CTA target {row!r}")
                continue
            table = tables.get(key[0])
            if table is None:
                targets.warnings.append(f"{cta_path}:{lineno}: unknown table {key[0]!r}")
            elif not 0 <= key[1] < table.n_cols:
                targets.warnings.append(f"{cta_path}:{lineno}: column {key[1]} outside {key[0]}")
            elif key not in seen_cta:
                seen_cta.add(key)
                targets.cta_targets.append(key)

    for w in targets.warnings:
        logger.warning(w)
    return targets

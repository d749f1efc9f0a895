"""Per-table annotation: preprocessing, then a bounded tool-dispatch loop per column.

The router picks the next tool from the column's situation and progress:

* headerless column with enough cells: topic, linking, class lookup, rank, CTA
* meaningful header, (mostly) empty cells: CTA selection only, no CEA
* fully meaningful column: as the first case without the topic step

Columns of one table run sequentially because they share the edit-distance
annotation cache, whose scan order is part of the result.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from sta_agent.annotator.reuse import AnnotationCache, try_reuse
from sta_agent.annotator.scoring import MAX_LIST_LENGTH, ScoredClass, cta_scores
from sta_agent.config import RunConfig
from sta_agent.kg import CandidateClass, KgClient, KgFixtureMiss, KgUnavailable
from sta_agent.llm import LlmClient, detect_column_topic, link_entity_freeform, select_cea, select_cta
from sta_agent.preprocessing import (
    EntityTagger,
    TableView,
    correct_cells,
    dedup_representative_cells,
    first_cells,
    flag_inconsistent_cells,
    profile_entity_types,
)
from sta_agent.table import CellRef, ColumnSituation, Table, TargetSet, classify_table, is_meaningful_header

logger = logging.getLogger(__name__)


class Tool(str, Enum):
    COLUMN_TOPIC = "ColumnTopic"
    ENTITY_LINKING = "EntityLinking"
    CLASS_LOOKUP = "ClassLookup"
    CLASS_RANK = "ClassRank"
    CTA_SELECT = "CtaSelect"


class Provenance(str, Enum):
    LLM_SELECTED = "LlmSelected"
    REUSED = "ReusedViaLevenshtein"
    FALLBACK = "Fallback"


@dataclass(frozen=True)
class CeaAnnotation:
    cell: CellRef
    entity_uri: str
    provenance: Provenance


@dataclass(frozen=True)
class CtaAnnotation:
    column: tuple[str, int]
    class_uri: str
    score: float


@dataclass
class Deps:
    kg: KgClient
    llm: LlmClient
    tagger: EntityTagger


@dataclass
class TableTelemetry:
    table_id: str
    situations: dict[int, str] = field(default_factory=dict)
    tools: dict[int, list[str]] = field(default_factory=dict)
    working_headers: dict[int, str] = field(default_factory=dict)
    corrections: dict[int, dict[str, int]] = field(default_factory=dict)
    cells_processed: int = 0
    fresh_annotations: int = 0
    reused: int = 0
    abstained: int = 0
    fallbacks: int = 0
    short_circuits: int = 0
    cta_fallbacks: int = 0
    errors: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "table_id": self.table_id,
            "situations": {str(k): v for k, v in sorted(self.situations.items())},
            "tools": {str(k): v for k, v in sorted(self.tools.items())},
            "working_headers": {str(k): v for k, v in sorted(self.working_headers.items())},
            "corrections": {str(k): v for k, v in sorted(self.corrections.items())},
            "cells_processed": self.cells_processed,
            "fresh_annotations": self.fresh_annotations,
            "reused": self.reused,
            "abstained": self.abstained,
            "fallbacks": self.fallbacks,
            "short_circuits": self.short_circuits,
            "cta_fallbacks": self.cta_fallbacks,
            "errors": self.errors,
        }


@dataclass
class TableResult:
    cea: list[CeaAnnotation]
    cta: list[CtaAnnotation]
    telemetry: TableTelemetry


# ---------------------------------------------------------------------------
# Single cell


def annotate_cell(
    ref: CellRef,
    view: TableView,
    cache: AnnotationCache,
    deps: Deps,
    config: RunConfig,
    header: str,
    telemetry: Optional[TableTelemetry] = None,
) -> Optional[CeaAnnotation]:
    """Annotate one cell: reuse a near-identical earlier annotation, else look up and select.

    Returns ``None`` to abstain. Only fresh, non-abstained results enter the cache.
    """
    tel = telemetry if telemetry is not None else TableTelemetry(ref.table_id)
    text = view.cell(ref.row, ref.col)
    if not text:
        raise ValueError(f"cell {ref} is empty")
    tel.cells_processed += 1

    if config.lev_reuse:
        uri = try_reuse(text, cache)
        if uri is not None:
            tel.reused += 1
            return CeaAnnotation(ref, uri, Provenance.REUSED)

    tel.fresh_annotations += 1
    row_context = [v for c, v in enumerate(view.row(ref.row)) if c != ref.col and v]
    if config.kg_lookup:
        try:
            candidates = deps.kg.lookup_entities(text, config.cea_candidate_limit)
        except KgUnavailable as exc:
            tel.abstained += 1
            tel.errors.append({"cell": [ref.row, ref.col], "error": str(exc)})
            return None
        if not candidates:
            tel.abstained += 1
            return None
        choice = select_cea(text, row_context, header, candidates, deps.llm)
    else:
        choice = link_entity_freeform(text, row_context, header, deps.llm, config.kg.resource_namespace)

    if choice.short_circuit:
        tel.short_circuits += 1
    if choice.entity is None:
        tel.abstained += 1
        return None
    if choice.fallback:
        tel.fallbacks += 1
    cache.add(text, choice.entity.uri)
    return CeaAnnotation(ref, choice.entity.uri, Provenance.FALLBACK if choice.fallback else Provenance.LLM_SELECTED)


# ---------------------------------------------------------------------------
# Column CTA


def gather_class_lists(
    linked_cells: list[tuple[str, CeaAnnotation]],
    kg: KgClient,
    config: RunConfig,
) -> list[list[CandidateClass]]:
    """Ontology classes of the first annotated cells of a column.

    ``linked_cells`` holds ``(cell_text, annotation)`` in row order. With dedup
    on, a repeated cell text contributes once. Lists are cut to the ten ranks
    the scoring scale covers.
    """
    chosen: list[CeaAnnotation] = []
    seen: set[str] = set()
    for text, ann in linked_cells:
        if config.dedup:
            if text in seen:
                continue
            seen.add(text)
        chosen.append(ann)
        if len(chosen) == config.rep_cell_limit:
            break
    return [kg.entity_classes(ann.entity_uri, config.class_depth_m)[:MAX_LIST_LENGTH] for ann in chosen]


def choose_column_class(
    column: tuple[str, int],
    header: str,
    rep_cells: list[str],
    other_headers: list[str],
    scored: list[ScoredClass],
    deps: Deps,
    config: RunConfig,
    telemetry: Optional[TableTelemetry] = None,
) -> Optional[CtaAnnotation]:
    shortlist = scored[: config.cta_shortlist_limit]
    candidates = [CandidateClass(s.class_uri, s.label, rank) for rank, s in enumerate(shortlist, start=1)]
    choice = select_cta(header, rep_cells, other_headers, candidates, deps.llm, config.kg.ontology_namespace)
    if telemetry is not None and choice.fallback:
        telemetry.cta_fallbacks += 1
    if choice.cls is None:
        return None
    score = next((s.cta_score for s in shortlist if s.class_uri == choice.cls.uri), 0.0)
    return CtaAnnotation(column, choice.cls.uri, score)


def annotate_column_cta(
    column: tuple[str, int],
    header: str,
    rep_cells: list[str],
    other_headers: list[str],
    linked_cells: list[tuple[str, CeaAnnotation]],
    deps: Deps,
    config: RunConfig,
    telemetry: Optional[TableTelemetry] = None,
) -> Optional[CtaAnnotation]:
    """Class lookup, scoring and final choice for one column.

    Without linked cells (or with KG lookup off) there are no scored classes and
    the choice is made from the column name, its cells and the other column
    names alone.
    """
    scored: list[ScoredClass] = []
    if linked_cells and config.kg_lookup:
        scored = cta_scores(gather_class_lists(linked_cells, deps.kg, config))
    return choose_column_class(column, header, rep_cells, other_headers, scored, deps, config, telemetry)


# ---------------------------------------------------------------------------
# Table


@dataclass
class _Column:
    col: int
    situation: ColumnSituation
    header: str
    link_rows: list[int]
    emit_rows: set[int]
    wants_cta: bool
    rep_cells: list[str] = field(default_factory=list)
    topic_done: bool = False
    linked: bool = False
    linked_cells: list[tuple[str, CeaAnnotation]] = field(default_factory=list)
    class_lists: Optional[list] = None
    scored: Optional[list[ScoredClass]] = None
    cta_done: bool = False
    cta: Optional[CtaAnnotation] = None


def _next_tool(state: _Column, config: RunConfig) -> Optional[Tool]:
    empty_cells = state.situation is ColumnSituation.HEADERS_WITH_EMPTY_CELLS
    if state.situation is ColumnSituation.HEADERLESS_WITH_CELLS and config.topic_detection and not state.topic_done:
        return Tool.COLUMN_TOPIC
    if not empty_cells and state.link_rows and not state.linked:
        return Tool.ENTITY_LINKING
    if state.wants_cta:
        if not empty_cells and config.kg_lookup and state.linked_cells and state.class_lists is None:
            return Tool.CLASS_LOOKUP
        if state.class_lists is not None and state.scored is None:
            return Tool.CLASS_RANK
        if not state.cta_done:
            return Tool.CTA_SELECT
    return None


def _rep_rows(view: TableView, col: int, config: RunConfig) -> list[int]:
    """Rows holding the column's representative cells."""
    rows: list[int] = []
    seen: set[str] = set()
    for r, text in enumerate(view.column(col)):
        if not text:
            continue
        if config.dedup:
            if text in seen:
                continue
            seen.add(text)
        rows.append(r)
        if len(rows) == config.rep_cell_limit:
            break
    return rows


def _rep_cells(view: TableView, col: int, config: RunConfig) -> list[str]:
    cells = view.column(col)
    if config.dedup:
        return dedup_representative_cells(cells, config.rep_cell_limit)
    return first_cells(cells, config.rep_cell_limit)


def _preprocess_column(view: TableView, col: int, header: str, deps: Deps, config: RunConfig,
                       tel: TableTelemetry) -> None:
    table = view.table
    rep = _rep_cells(view, col, config)
    profile = profile_entity_types(rep, deps.tagger, (table.table_id, col))
    pairs = [(CellRef(table.table_id, r, col), text) for r, text in enumerate(table.column(col)) if text]
    flagged_refs = set(flag_inconsistent_cells(pairs, profile, deps.tagger))
    flagged = [(ref, text) for ref, text in pairs if ref in flagged_refs]
    corrections = correct_cells(flagged, header, rep, deps.llm)
    view.apply(corrections)
    tel.corrections[col] = {
        "flagged": len(flagged),
        "changed": sum(1 for c in corrections if c.corrected != c.original),
    }


def annotate_table(
    table: Table,
    targets: Optional[TargetSet],
    deps: Deps,
    config: RunConfig,
    cache: Optional[AnnotationCache] = None,
) -> TableResult:
    """Annotate one table. Per-column failures are recorded in telemetry and do
    not stop the other columns; a KG fixture miss aborts the run."""
    targets = targets.for_table(table.table_id) if targets is not None else TargetSet()
    situation = classify_table(
        table, min_valid_cells=config.min_valid_cells, empty_cell_fraction=config.empty_cell_fraction
    )
    view = TableView(table)
    cache = cache if cache is not None else AnnotationCache(config.threshold_factor_k)
    tel = TableTelemetry(table.table_id)

    if targets.cea_targets is None:
        cea_rows = {c: [r for r, v in enumerate(table.column(c)) if v] for c in range(table.n_cols)}
    else:
        cea_rows = {}
        for ref in targets.cea_targets:
            cea_rows.setdefault(ref.col, []).append(ref.row)
    cta_cols = set(range(table.n_cols)) if targets.cta_targets is None else {c for _, c in targets.cta_targets}

    headers: dict[int, str] = {}
    for c in range(table.n_cols):
        h = table.headers[c]
        headers[c] = h if h is not None else f"col{c}"

    cea_out: list[CeaAnnotation] = []
    cta_out: list[CtaAnnotation] = []
    for col in sorted(set(cea_rows) | cta_cols):
        sit = situation.of(col)
        tel.situations[col] = sit.value
        tel.tools[col] = []
        try:
            state = _run_column(col, sit, view, headers, cea_rows.get(col, []), col in cta_cols,
                                cache, deps, config, tel)
        except KgFixtureMiss:
            raise
        except Exception as exc:  # isolate: one bad column never aborts the table
            logger.exception("table %s column %d failed", table.table_id, col)
            tel.errors.append({"column": col, "error": f"{type(exc).__name__}: {exc}"})
            continue
        tel.working_headers[col] = state.header
        cea_out.extend(ann for _, ann in state.linked_cells if ann.cell.row in state.emit_rows)
        if state.cta is not None:
            cta_out.append(state.cta)

    cea_out.sort(key=lambda a: (a.cell.row, a.cell.col))
    cta_out.sort(key=lambda a: a.column[1])
    return TableResult(cea_out, cta_out, tel)


def _run_column(col: int, sit: ColumnSituation, view: TableView, headers: dict[int, str],
                target_rows: list[int], wants_cta: bool, cache: AnnotationCache, deps: Deps,
                config: RunConfig, tel: TableTelemetry) -> _Column:
    table = view.table
    emit_rows = set(target_rows)
    link_rows = set(target_rows)
    if sit is not ColumnSituation.HEADERS_WITH_EMPTY_CELLS:
        _preprocess_column(view, col, headers[col], deps, config, tel)
        if wants_cta:
            link_rows |= set(_rep_rows(view, col, config))
    state = _Column(col, sit, headers[col], sorted(r for r in link_rows if view.cell(r, col)), emit_rows, wants_cta)
    state.rep_cells = _rep_cells(view, col, config)

    def others() -> list[str]:
        return [h for c, h in sorted(headers.items()) if c != col and is_meaningful_header(h)]

    for _ in range(config.max_steps):
        tool = _next_tool(state, config)
        if tool is None:
            break
        tel.tools[col].append(tool.value)
        if tool is Tool.COLUMN_TOPIC:
            state.header = detect_column_topic(state.rep_cells, others(), deps.llm)
            headers[col] = state.header
            state.topic_done = True
        elif tool is Tool.ENTITY_LINKING:
            for row in state.link_rows:
                ann = annotate_cell(CellRef(table.table_id, row, col), view, cache, deps, config, state.header, tel)
                if ann is not None:
                    state.linked_cells.append((view.cell(row, col), ann))
            state.linked = True
        elif tool is Tool.CLASS_LOOKUP:
            state.class_lists = gather_class_lists(state.linked_cells, deps.kg, config)
        elif tool is Tool.CLASS_RANK:
            state.scored = cta_scores(state.class_lists)
        elif tool is Tool.CTA_SELECT:
            state.cta = choose_column_class(
                (table.table_id, col), state.header, state.rep_cells, others(), state.scored or [], deps, config, tel
            )
            state.cta_done = True
    else:
        if _next_tool(state, config) is not None:
            raise RuntimeError(f"step budget of {config.max_steps} exhausted")
    return state

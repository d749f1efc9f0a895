"""Task-shaped LLM operations with answer validation, one re-ask and a fallback."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from sta_agent.kg import DBPEDIA_ONTOLOGY, DBPEDIA_RESOURCE, CandidateClass, CandidateEntity, local_name
from sta_agent.llm import prompts
from sta_agent.llm.backend import LlmClient, LlmError, LlmRequest, LlmTask

logger = logging.getLogger(__name__)

FALLBACK_TOPIC = "Entity"

_TOPIC = re.compile(r"^[A-Za-z][A-Za-z0-9 '&/()-]{0,59}$")
_INDEX = re.compile(r"^(?:option\s*)?#?(\d+)$", re.IGNORECASE)
_LOCAL_CLASS = re.compile(r"^[A-Z][A-Za-z0-9_]*$")
_ABSTAIN = {"none", "null", "n/a", "no match"}


class _Invalid(Exception):
    pass


def _ask_validated(llm: LlmClient, task: LlmTask, prompt: str, parse, max_output: int = 32):
    """Ask, parse; on an unusable answer ask exactly once more. Raises ``_Invalid``."""
    answer = ""
    for attempt in range(2):
        text = prompt if attempt == 0 else prompts.reask(prompt, answer)
        try:
            answer = llm.ask(LlmRequest(task, text, max_output))
        except LlmError as exc:
            logger.warning("%s request failed: %s", task.value, exc)
            answer = ""
            continue
        try:
            return parse(answer)
        except _Invalid:
            logger.info("%s answer %r unusable (attempt %d)", task.value, answer, attempt + 1)
    raise _Invalid(answer)


def _clean(answer: str) -> str:
    return answer.strip().strip("\"'`").rstrip(".").strip()


# ---------------------------------------------------------------------------
# Column topic


def detect_column_topic(rep_cells: Sequence[str], table_context: Sequence[str], llm: LlmClient) -> str:
    """Infer a short topic to replace a meaningless column name."""
    if not rep_cells:
        raise ValueError("topic detection needs at least one representative cell")

    def parse(answer: str) -> str:
        topic = _clean(answer.splitlines()[0] if answer.strip() else "")
        if not _TOPIC.match(topic) or len(topic.split()) > 6:
            raise _Invalid(answer)
        return topic

    prompt = prompts.topic_prompt(rep_cells, table_context)
    try:
        return _ask_validated(llm, LlmTask.COLUMN_TOPIC, prompt, parse)
    except _Invalid:
        logger.warning("column topic unusable after re-ask; using %r", FALLBACK_TOPIC)
        return FALLBACK_TOPIC


# ---------------------------------------------------------------------------
# Option answers


def _parse_option(answer: str, uris: Sequence[str], allow_abstain: bool) -> Optional[int]:
    """Return a 0-based option index, ``None`` for abstain; raise ``_Invalid`` otherwise."""
    text = _clean(answer)
    m = _INDEX.match(text)
    if m:
        n = int(m.group(1))
        if n == 0 and allow_abstain:
            return None
        if 1 <= n <= len(uris):
            return n - 1
        raise _Invalid(answer)
    if allow_abstain and text.lower() in _ABSTAIN:
        return None
    bare = text.strip("<>")
    if bare in uris:
        return list(uris).index(bare)
    raise _Invalid(answer)


@dataclass(frozen=True)
class CeaChoice:
    """Outcome of entity selection. ``entity is None`` means abstain."""

    entity: Optional[CandidateEntity]
    fallback: bool = False
    short_circuit: bool = False


@dataclass(frozen=True)
class CtaChoice:
    cls: Optional[CandidateClass]
    fallback: bool = False
    short_circuit: bool = False


def select_cea(
    cell_text: str,
    row_context: Sequence[str],
    column_header: str,
    candidates: Sequence[CandidateEntity],
    llm: LlmClient,
) -> CeaChoice:
    """Pick one candidate entity for a cell, or abstain.

    A single candidate is returned without a model call. An unusable answer is
    re-asked once; after that the rank-1 candidate is returned, flagged.
    """
    if not candidates:
        raise ValueError("select_cea needs at least one candidate")
    if len(candidates) == 1:
        return CeaChoice(candidates[0], short_circuit=True)
    uris = [c.uri for c in candidates]
    prompt = prompts.cea_prompt(cell_text, row_context, column_header, [(c.label, c.uri) for c in candidates])
    try:
        index = _ask_validated(llm, LlmTask.CEA_SELECT, prompt, lambda a: _parse_option(a, uris, True))
    except _Invalid:
        logger.warning("CEA answer for %r unusable after re-ask; falling back to rank 1", cell_text)
        return CeaChoice(candidates[0], fallback=True)
    return CeaChoice(None if index is None else candidates[index])


def link_entity_freeform(
    cell_text: str,
    row_context: Sequence[str],
    column_header: str,
    llm: LlmClient,
    resource_namespace: str = DBPEDIA_RESOURCE,
) -> CeaChoice:
    """Entity linking from model knowledge alone (no lookup candidates)."""

    def parse(answer: str) -> Optional[str]:
        text = _clean(answer).strip("<>")
        if text.lower() in _ABSTAIN:
            return None
        if text.startswith(resource_namespace) and len(text) > len(resource_namespace):
            name = text[len(resource_namespace):]
        elif re.match(r"^[a-z][a-z0-9+.-]*:", text, re.IGNORECASE):
            raise _Invalid(answer)
        else:
            name = text.replace(" ", "_")
        if not name or re.search(r"[\s<>\"{}|\\^`]", name):
            raise _Invalid(answer)
        return resource_namespace + name

    prompt = prompts.cea_freeform_prompt(cell_text, row_context, column_header, resource_namespace)
    try:
        uri = _ask_validated(llm, LlmTask.CEA_SELECT, prompt, parse)
    except _Invalid:
        return CeaChoice(None, fallback=True)
    if uri is None:
        return CeaChoice(None)
    return CeaChoice(CandidateEntity(uri, local_name(uri).replace("_", " "), 1, cell_text))


def select_cta(
    column_header: str,
    rep_cells: Sequence[str],
    other_headers: Sequence[str],
    candidates: Sequence[CandidateClass],
    llm: LlmClient,
    namespace: str = DBPEDIA_ONTOLOGY,
) -> CtaChoice:
    """Pick the column class from ranked candidates, or name one freely when there are none.

    With candidates: one re-ask on an unusable answer, then rank 1 (flagged).
    Without: the answer must name a class in ``namespace``; one re-ask, then
    abstain.
    """
    if len(candidates) == 1:
        return CtaChoice(candidates[0], short_circuit=True)
    if candidates:
        uris = [c.uri for c in candidates]
        prompt = prompts.cta_prompt(column_header, rep_cells, other_headers, [(c.label, c.uri) for c in candidates])
        try:
            index = _ask_validated(llm, LlmTask.CTA_SELECT, prompt, lambda a: _parse_option(a, uris, False))
        except _Invalid:
            logger.warning("CTA answer for %r unusable after re-ask; falling back to rank 1", column_header)
            return CtaChoice(candidates[0], fallback=True)
        return CtaChoice(candidates[index])

    def parse(answer: str) -> str:
        text = _clean(answer).strip("<>")
        if text.startswith(namespace):
            name = text[len(namespace):]
        elif text.lower().startswith("dbo:") and namespace == DBPEDIA_ONTOLOGY:
            name = text[4:]
        else:
            name = text
        if not _LOCAL_CLASS.match(name):
            raise _Invalid(answer)
        return namespace + name

    prompt = prompts.cta_freeform_prompt(column_header, rep_cells, other_headers, namespace)
    try:
        uri = _ask_validated(llm, LlmTask.CTA_SELECT, prompt, parse)
    except _Invalid:
        logger.warning("free-form CTA answer for %r outside %s; abstaining", column_header, namespace)
        return CtaChoice(None, fallback=True)
    return CtaChoice(CandidateClass(uri, local_name(uri), 1))


# ---------------------------------------------------------------------------
# Cell correction

SPELL = "spell"
ABBREV = "abbrev"
NONE = "none"


def correct_cell_text(
    column_header: str,
    sample_cells: Sequence[str],
    texts: Sequence[str],
    llm: LlmClient,
) -> list[tuple[str, str]]:
    """Ask for spelling fixes / abbreviation expansions of ``texts`` in one request.

    Returns ``(corrected, kind)`` per input, ``kind`` in {spell, abbrev, none}.
    Raises :class:`LlmError` when no usable answer arrives.
    """
    if not texts:
        return []

    def parse(answer: str) -> list[tuple[str, str]]:
        try:
            payload = json.loads(answer)
        except json.JSONDecodeError as exc:
            raise _Invalid(answer) from exc
        if not isinstance(payload, dict):
            raise _Invalid(answer)
        out = []
        for i, original in enumerate(texts, start=1):
            item = payload.get(str(i))
            if isinstance(item, str):
                item = {"text": item, "kind": SPELL}
            if not isinstance(item, dict) or not isinstance(item.get("text"), str) or not item["text"].strip():
                out.append((original, NONE))
                continue
            kind = item.get("kind", SPELL)
            corrected = item["text"].strip()
            if kind not in (SPELL, ABBREV) or corrected == original:
                out.append((original, NONE))
            else:
                out.append((corrected, kind))
        return out

    prompt = prompts.correction_prompt(column_header, sample_cells, texts)
    try:
        return _ask_validated(llm, LlmTask.CELL_CORRECT, prompt, parse, max_output=32 * len(texts) + 16)
    except _Invalid as exc:
        raise LlmError(f"no usable correction answer: {exc}") from exc

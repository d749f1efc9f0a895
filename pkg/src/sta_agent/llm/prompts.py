"""Prompt builders.

Every prompt opens with a ``[Task vN]`` tag line, carries its context as
``Name: <json>`` field lines and lists candidates as numbered options, so the
answer can be a single option number. :func:`parse_prompt` reads the same
layout back (used by the stub backend).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

PROMPT_VERSION = "v1"

_TAG_LINE = re.compile(r"^\[(\w+) (v\d+)\]$")
_FIELD_LINE = re.compile(r"^([A-Z][A-Za-z ]*): (.*)$")
_OPTION_LINE = re.compile(r"^(\d+)\. (.*) <(\S+)>$")
_CHECK_LINE = re.compile(r"^(\d+)\. (\".*\")$")


def _j(value) -> str:
    return json.dumps(value, ensure_ascii=False)


def _options(options: Sequence[tuple[str, str]]) -> list[str]:
    return [f"{i}. {label} <{uri}>" for i, (label, uri) in enumerate(options, start=1)]


def topic_prompt(rep_cells: Sequence[str], other_headers: Sequence[str]) -> str:
    return "\n".join(
        [
            f"[ColumnTopic {PROMPT_VERSION}]",
            "The column below has no usable name. Infer what its cells are.",
            f"Cells: {_j(list(rep_cells))}",
            f"Other columns: {_j(list(other_headers))}",
            'Reply with a short noun phrase for the column topic (for example "City" or "Athlete"), nothing else.',
        ]
    )


def cea_prompt(
    cell: str,
    row_context: Sequence[str],
    column: str,
    options: Sequence[tuple[str, str]],
) -> str:
    return "\n".join(
        [
            f"[CeaSelect {PROMPT_VERSION}]",
            "Link the table cell to the knowledge-graph entity it denotes. Use the other cells of its row and the column topic to tell same-named entities apart.",
            f"Column: {_j(column)}",
            f"Cell: {_j(cell)}",
            f"Row: {_j(list(row_context))}",
            "Candidates:",
            *_options(options),
            "Answer with the number of the best candidate only. Answer 0 if none of them fits.",
        ]
    )


def cea_freeform_prompt(cell: str, row_context: Sequence[str], column: str, resource_namespace: str) -> str:
    return "\n".join(
        [
            f"[CeaSelect {PROMPT_VERSION}]",
            "Link the table cell to the knowledge-graph entity it denotes.",
            f"Column: {_j(column)}",
            f"Cell: {_j(cell)}",
            f"Row: {_j(list(row_context))}",
            f"Namespace: {_j(resource_namespace)}",
            "Answer with the entity's resource name in that namespace (for example Cristiano_Ronaldo), or its full URI. Answer NONE if it has no entity.",
        ]
    )


def cta_prompt(
    column: str,
    rep_cells: Sequence[str],
    other_headers: Sequence[str],
    options: Sequence[tuple[str, str]],
) -> str:
    return "\n".join(
        [
            f"[CtaSelect {PROMPT_VERSION}]",
            "Choose the ontology class that types every cell of the column. Prefer the class that is neither broader nor narrower than the column content; neighbouring columns are context.",
            f"Column: {_j(column)}",
            f"Cells: {_j(list(rep_cells))}",
            f"Other columns: {_j(list(other_headers))}",
            "Candidates:",
            *_options(options),
            "Answer with the number of the best candidate only.",
        ]
    )


def cta_freeform_prompt(
    column: str,
    rep_cells: Sequence[str],
    other_headers: Sequence[str],
    namespace: str,
) -> str:
    return "\n".join(
        [
            f"[CtaSelect {PROMPT_VERSION}]",
            "Choose the ontology class for the column. The cells may be empty; use the column name and the names of the other columns.",
            f"Column: {_j(column)}",
            f"Cells: {_j(list(rep_cells))}",
            f"Other columns: {_j(list(other_headers))}",
            f"Namespace: {_j(namespace)}",
            "Answer with one class of that ontology, as its local name (for example Person) or full URI, nothing else.",
        ]
    )


def correction_prompt(column: str, sample_cells: Sequence[str], to_check: Sequence[str]) -> str:
    return "\n".join(
        [
            f"[CellCorrect {PROMPT_VERSION}]",
            "Some cells of this column may be misspelled or abbreviated. Using the column context, fix spelling errors and expand abbreviations. Leave correct cells unchanged.",
            f"Column: {_j(column)}",
            f"Sample cells: {_j(list(sample_cells))}",
            "Cells to check:",
            *[f"{i}. {_j(text)}" for i, text in enumerate(to_check, start=1)],
            'Reply with a JSON object mapping each number to {"text": <corrected cell>, "kind": "spell" | "abbrev" | "none"}.',
        ]
    )


def reask(prompt: str, bad_answer: str) -> str:
    return f"{prompt}\nYour previous answer was not usable: {_j(bad_answer)}. Follow the answer format exactly."


@dataclass
class ParsedPrompt:
    task: str
    version: str
    fields: dict[str, object] = field(default_factory=dict)
    options: list[tuple[str, str]] = field(default_factory=list)  # (label, uri)
    to_check: list[str] = field(default_factory=list)
    reasked: bool = False

    def get(self, name: str, default=None):
        return self.fields.get(name, default)


def parse_prompt(prompt: str) -> Optional[ParsedPrompt]:
    lines = prompt.splitlines()
    if not lines:
        return None
    m = _TAG_LINE.match(lines[0])
    if m is None:
        return None
    parsed = ParsedPrompt(task=m.group(1), version=m.group(2))
    for line in lines[1:]:
        if line.startswith("Your previous answer was not usable"):
            parsed.reasked = True
            continue
        if (om := _OPTION_LINE.match(line)) is not None:
            parsed.options.append((om.group(2), om.group(3)))
            continue
        if (cm := _CHECK_LINE.match(line)) is not None:
            parsed.to_check.append(json.loads(cm.group(2)))
            continue
        if (fm := _FIELD_LINE.match(line)) is not None:
            try:
                parsed.fields[fm.group(1)] = json.loads(fm.group(2))
            except json.JSONDecodeError:
                continue
    return parsed

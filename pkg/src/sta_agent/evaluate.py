"""Precision / recall / F1 of system annotations against gold files."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping
from urllib.parse import unquote, urlsplit, urlunsplit

CEA = "CEA"
CTA = "CTA"
_KEY_WIDTH = {CEA: 3, CTA: 2}


class ScoreError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    task: str
    precision: float
    recall: float
    f1: float
    correct: int
    system: int
    target: int

    def as_dict(self) -> dict:
        return asdict(self)


def normalize_uri(uri: str) -> str:
    """Lower-case scheme and host, percent-decode the rest."""
    uri = uri.strip().strip("<>")
    parts = urlsplit(uri)
    if parts.scheme and parts.netloc:
        return urlunsplit(
            (parts.scheme.lower(), parts.netloc.lower(), unquote(parts.path), unquote(parts.query), unquote(parts.fragment))
        )
    return unquote(uri)


def metrics(task: str, correct: int, system: int, target: int) -> MetricsReport:
    precision = correct / system if system else 0.0
    recall = correct / target if target else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsReport(task, precision, recall, f1, correct, system, target)


def read_annotations(path: str | Path, task: str, *, multi: bool = False) -> dict[tuple, frozenset[str]]:
    """Read ``key..., uri`` rows. With ``multi``, the URI field may hold several
    whitespace-separated alternatives (gold files); otherwise exactly one."""
    width = _KEY_WIDTH[task]
    out: dict[tuple, frozenset[str]] = {}
    with Path(path).open(encoding="utf-8-sig", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not any(v.strip() for v in row):
                continue
            if len(row) < width + 1:
                raise ScoreError(f"{path}:{lineno}: expected {width + 1} fields, got {len(row)}")
            try:
                key = (row[0].strip(), *(int(v) for v in row[1:width]))
            except ValueError as exc:
                raise ScoreError(f"{path}:{lineno}: bad index in {row!r}") from exc
            uris = " ".join(row[width:]).split()
            if not uris:
                raise ScoreError(f"{path}:{lineno}: empty annotation")
            if not multi and len(uris) > 1:
                raise ScoreError(f"{path}:{lineno}: more than one annotation for {key}")
            if key in out:
                raise ScoreError(f"{path}:{lineno}: duplicate key {key}")
            out[key] = frozenset(normalize_uri(u) for u in uris)
    return out


def score_annotations(
    system: Mapping[tuple, frozenset[str]],
    gold: Mapping[tuple, frozenset[str]],
    task: str,
) -> MetricsReport:
    correct = sum(1 for key, uris in system.items() if key in gold and uris & gold[key])
    return metrics(task, correct, len(system), len(gold))


def score(system_file: str | Path, gold_file: str | Path, task: str) -> MetricsReport:
    task = task.upper()
    if task not in _KEY_WIDTH:
        raise ScoreError(f"unknown task {task!r}")
    return score_annotations(
        read_annotations(system_file, task),
        read_annotations(gold_file, task, multi=True),
        task,
    )

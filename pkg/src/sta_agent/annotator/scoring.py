"""Frequency-and-rank scoring of candidate ontology classes for a column."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from sta_agent.kg import CandidateClass

MAX_LIST_LENGTH = 10


@dataclass(frozen=True)
class ScoredClass:
    class_uri: str
    cta_score: float
    label: str = ""


def rank_score_tenths(rank: int) -> int:
    """Score of a class at 1-based ``rank``, in tenths: rank 1 -> 10, rank 10 -> 1."""
    if not 1 <= rank <= MAX_LIST_LENGTH:
        raise ValueError(f"rank must be in 1..{MAX_LIST_LENGTH}, got {rank}")
    return MAX_LIST_LENGTH + 1 - rank


def cta_scores(candidate_lists: Sequence[Sequence[CandidateClass]]) -> list[ScoredClass]:
    """Sum per-list rank scores ``(11 - r) / 10`` for every class.

    Each inner list is the rank-ordered class list of one annotated cell. The
    position in the list is the rank (the ``rank`` field is not trusted). Output
    is sorted by score descending, then by class URI ascending.

    Sums are kept in integer tenths so ties compare exactly.
    """
    totals: dict[str, int] = {}
    labels: dict[str, str] = {}
    for classes in candidate_lists:
        if len(classes) > MAX_LIST_LENGTH:
            raise ValueError(f"candidate list longer than {MAX_LIST_LENGTH}: {len(classes)}")
        for position, cls in enumerate(classes, start=1):
            totals[cls.uri] = totals.get(cls.uri, 0) + rank_score_tenths(position)
            labels.setdefault(cls.uri, cls.label)
    ordered = sorted(totals.items(), key=lambda item: (-item[1], item[0]))
    return [ScoredClass(uri, tenths / 10, labels[uri]) for uri, tenths in ordered]

"""Edit-distance keyed annotation reuse.

Before a cell goes through the full lookup + selection pipeline, earlier
annotations of the same table are scanned in insertion order. The first entry
whose distance to the cell is strictly below ``min(len(cell), len(entry)) * k``
donates its entity URI.
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from sta_agent.annotator.distance import levenshtein_below

DEFAULT_THRESHOLD_FACTOR = 0.2

_WS = re.compile(r"\s+")


def cache_key(text: str) -> str:
    """Case-fold and collapse whitespace before comparing cell strings."""
    return _WS.sub(" ", text).strip().casefold()


@dataclass(frozen=True)
class CacheEntry:
    text: str
    entity_uri: str


@dataclass
class AnnotationCache:
    threshold_factor: float = DEFAULT_THRESHOLD_FACTOR
    entries: list[CacheEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.threshold_factor > 0:
            raise ValueError(f"threshold factor must be > 0, got {self.threshold_factor}")
        # Exact rational k: 15 * 0.2 must be 3, not 3.0000000000000004.
        self._k = Fraction(str(self.threshold_factor))
        self._lock = threading.Lock()

    def distance_bound(self, len_a: int, len_b: int) -> int:
        """Smallest integer distance that is *not* below the threshold.

        For integer ``d``: ``d < min(len_a, len_b) * k``  iff  ``d < ceil(...)``.
        """
        return math.ceil(min(len_a, len_b) * self._k)

    def add(self, cell_text: str, entity_uri: str) -> None:
        if not entity_uri:
            raise ValueError("entity_uri must be non-empty")
        with self._lock:
            self.entries.append(CacheEntry(cache_key(cell_text), entity_uri))

    def __len__(self) -> int:
        return len(self.entries)

    def find(self, cell_text: str) -> Optional[CacheEntry]:
        key = cache_key(cell_text)
        with self._lock:
            entries = list(self.entries)
        for entry in entries:
            if levenshtein_below(key, entry.text, self.distance_bound(len(key), len(entry.text))):
                return entry
        return None


def try_reuse(cell_text: str, cache: AnnotationCache) -> Optional[str]:
    entry = cache.find(cell_text)
    return entry.entity_uri if entry is not None else None

"""Levenshtein edit distance over Unicode code points."""

from __future__ import annotations


def levenshtein(a: str, b: str) -> int:
    """Minimum number of single-character insertions, deletions and substitutions
    turning ``a`` into ``b``.

    Two-row dynamic programme, O(len(a) * len(b)) time, O(min) memory.
    """
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


def levenshtein_below(a: str, b: str, bound: float) -> bool:
    """Return ``levenshtein(a, b) < bound`` without always finishing the table.

    Stops as soon as every entry of a DP row reaches ``bound``: row minima never
    decrease, so the final distance cannot drop back under it.
    """
    if bound <= 0:
        return False
    if abs(len(a) - len(b)) >= bound:
        return False
    if a == b:
        return True
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a) < bound
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        row_min = i
        for j, cb in enumerate(b, start=1):
            value = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb))
            current.append(value)
            if value < row_min:
                row_min = value
        if row_min >= bound:
            return False
        previous = current
    return previous[-1] < bound

"""Ordered (tag, score) lists — the unit passed between scorers, the
re-ranker and the evaluator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator


@dataclass(frozen=True)
class RankedTags:
    """Tags ordered by descending score, ties broken by ascending tag id.

    Frequency-based scorers only emit non-negative scores; factorization
    scores may be negative, so sign is not enforced here.
    """

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        seen: set[int] = set()
        prev: tuple[float, int] | None = None
        for tag, score in self.entries:
            if tag in seen:
                raise ValueError(f"duplicate tag {tag}")
            seen.add(tag)
            key = (-score, tag)
            if prev is not None and key < prev:
                raise ValueError("entries are not sorted by (score desc, tag asc)")
            prev = key

    @classmethod
    def from_scores(cls, scored: Iterable[tuple[int, float]], limit: int | None = None) -> "RankedTags":
        """Sort (tag, score) pairs into ranking order, optionally truncated."""
        ordered = sorted(scored, key=lambda e: (-e[1], e[0]))
        if limit is not None:
            ordered = ordered[:limit]
        return cls(tuple((int(t), float(s)) for t, s in ordered))

    @classmethod
    def empty(cls) -> "RankedTags":
        return cls(())

    def tags(self) -> tuple[int, ...]:
        return tuple(t for t, _ in self.entries)

    def top(self, k: int) -> "RankedTags":
        if k < 0:
            raise ValueError(f"k must be >= 0, got {k}")
        return RankedTags(self.entries[:k])

    def score_of(self, tag: int) -> float | None:
        for t, s in self.entries:
            if t == tag:
                return s
        return None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[int, float]]:
        return iter(self.entries)

    def __getitem__(self, idx: int) -> tuple[int, float]:
        return self.entries[idx]

    def __bool__(self) -> bool:
        return bool(self.entries)


def as_ranked_tags(obj) -> RankedTags:
    """Coerce a RankedTags or an already-ordered (tag, score) sequence."""
    if isinstance(obj, RankedTags):
        return obj
    return RankedTags(tuple((int(t), float(s)) for t, s in obj))

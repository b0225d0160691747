"""Domain types shared across the package, plus permutation helpers.

Rankings are 1-based permutations over a window or list, matching the
``[i]`` identifiers the rerankers read and emit. Corpus ids only appear at
I/O boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence, TypeVar

T = TypeVar("T")


class CorankingError(Exception):
    """Base class for errors raised by this package."""


class InvalidPermutation(CorankingError, ValueError):
    """A ranking is not a permutation of ``1..n``."""


class InvalidParams(CorankingError, ValueError):
    """Window, step or strategy parameters are inconsistent."""


@dataclass(frozen=True)
class Query:
    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("query id must be non-empty")
        if not self.text:
            raise ValueError(f"query {self.id!r} has empty text")


@dataclass(frozen=True)
class Passage:
    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("passage id must be non-empty")


@dataclass(frozen=True)
class CandidateList:
    """A query with its passages in current ranked order."""

    query: Query
    passages: tuple[Passage, ...]

    def __post_init__(self) -> None:
        passages = tuple(self.passages)
        object.__setattr__(self, "passages", passages)
        seen: set[str] = set()
        for p in passages:
            if p.id in seen:
                raise ValueError(
                    f"duplicate passage id {p.id!r} in candidates for query {self.query.id!r}"
                )
            seen.add(p.id)

    def __len__(self) -> int:
        return len(self.passages)

    def __iter__(self) -> Iterator[Passage]:
        return iter(self.passages)

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.passages]

    def head(self, k: int) -> CandidateList:
        return CandidateList(self.query, self.passages[:k])

    def with_passages(self, passages: Iterable[Passage]) -> CandidateList:
        return CandidateList(self.query, tuple(passages))


def validate_ranking(perm: Sequence[int], n: int) -> str | None:
    """Diagnose ``perm`` as a permutation of ``1..n``.

    Returns ``None`` when valid, otherwise a human-readable description of
    the first violation found.
    """
    if len(perm) != n:
        return f"length {len(perm)} != {n}"
    seen: set[int] = set()
    for v in perm:
        if isinstance(v, bool) or not isinstance(v, int):
            return f"non-integer id {v!r}"
        if v < 1 or v > n:
            return f"{v} out of range [1, {n}]"
        if v in seen:
            return f"duplicate {v}"
        seen.add(v)
    return None


@dataclass(frozen=True)
class Ranking:
    """A validated 1-based permutation."""

    perm: tuple[int, ...]

    def __post_init__(self) -> None:
        perm = tuple(int(v) for v in self.perm)
        problem = validate_ranking(perm, len(perm))
        if problem is not None:
            raise InvalidPermutation(problem)
        object.__setattr__(self, "perm", perm)

    @classmethod
    def identity(cls, n: int) -> Ranking:
        return cls(tuple(range(1, n + 1)))

    def __len__(self) -> int:
        return len(self.perm)

    def inverse(self) -> Ranking:
        inv = [0] * len(self.perm)
        for k, v in enumerate(self.perm):
            inv[v - 1] = k + 1
        return Ranking(tuple(inv))

    def then(self, other: Ranking) -> Ranking:
        """Compose: applying the result equals applying ``self`` then ``other``."""
        if len(other) != len(self):
            raise InvalidPermutation(f"cannot compose sizes {len(self)} and {len(other)}")
        return Ranking(tuple(self.perm[v - 1] for v in other.perm))

    def to_string(self, sep: str = " ") -> str:
        return sep.join(f"[{v}]" for v in self.perm)


def apply_ranking(items: Sequence[T], ranking: Ranking | Sequence[int]) -> list[T]:
    """Reorder ``items`` so that ``output[k] == items[perm[k] - 1]``.

    Raises:
        InvalidPermutation: if ``ranking`` is not a permutation of
            ``1..len(items)``.
    """
    perm = ranking.perm if isinstance(ranking, Ranking) else tuple(ranking)
    problem = validate_ranking(perm, len(items))
    if problem is not None:
        raise InvalidPermutation(problem)
    return [items[v - 1] for v in perm]


@dataclass
class Qrels:
    """Graded relevance judgments; unjudged pairs have grade 0."""

    judgments: dict[str, dict[str, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for qid, docs in self.judgments.items():
            for pid, grade in docs.items():
                if grade < 0:
                    raise ValueError(f"negative grade {grade} for ({qid}, {pid})")

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[str, str, int]]) -> Qrels:
        judgments: dict[str, dict[str, int]] = {}
        for qid, pid, grade in triples:
            judgments.setdefault(qid, {})[pid] = int(grade)
        return cls(judgments)

    def grade(self, query_id: str, passage_id: str) -> int:
        return self.judgments.get(query_id, {}).get(passage_id, 0)

    def for_query(self, query_id: str) -> Mapping[str, int]:
        return self.judgments.get(query_id, {})

    def has_relevant(self, query_id: str) -> bool:
        return any(g > 0 for g in self.for_query(query_id).values())

    def __contains__(self, query_id: object) -> bool:
        return query_id in self.judgments

    @property
    def query_ids(self) -> list[str]:
        return list(self.judgments)


@dataclass(frozen=True)
class RunEntry:
    query_id: str
    passage_id: str
    rank: int
    score: float


def run_entries(query_id: str, passage_ids: Sequence[str]) -> list[RunEntry]:
    """Entries for one ranked list with synthetic scores ``K - rank + 1``."""
    k = len(passage_ids)
    return [
        RunEntry(query_id, pid, rank, float(k - rank + 1))
        for rank, pid in enumerate(passage_ids, start=1)
    ]

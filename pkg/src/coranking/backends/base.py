"""The reranker backend contract."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

from coranking.core import CorankingError, Passage, Query, Ranking


class BackendFailure(CorankingError, RuntimeError):
    """A backend could not produce a ranking.

    Attributes:
        kind: ``"transport"``, ``"timeout"``, ``"exhausted"`` or ``"scripted"``.
        raw: Raw response body, when one was received.
        query_id: Query being processed, filled in by callers.
        stage: Pipeline stage (``"slr"``, ``"poa"``, ``"llr"``), filled in by callers.
        partial: Rankings obtained before the failure (sampling only).
    """

    def __init__(
        self,
        message: str,
        kind: str = "transport",
        raw: str | None = None,
        query_id: str | None = None,
        stage: str | None = None,
        partial: list[Ranking] | None = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.kind = kind
        self.raw = raw
        self.query_id = query_id
        self.stage = stage
        self.partial = partial or []

    def with_context(self, query_id: str | None = None, stage: str | None = None) -> BackendFailure:
        if self.query_id is None and query_id is not None:
            self.query_id = query_id
        if self.stage is None and stage is not None:
            self.stage = stage
        return self

    def __str__(self) -> str:
        where = []
        if self.stage:
            where.append(f"stage={self.stage}")
        if self.query_id:
            where.append(f"query={self.query_id}")
        suffix = f" ({', '.join(where)})" if where else ""
        return f"{self.kind}: {self.message}{suffix}"


class SamplingUnsupported(CorankingError):
    pass


@dataclass(frozen=True)
class Capabilities:
    name: str
    max_window: int
    supports_sampling: bool


class RerankerBackend(ABC):
    """Maps a query and ``n`` passages to a permutation of ``1..n``.

    Small reranker, order adjuster and large reranker are all backends;
    they differ only in configuration.
    """

    name: str = "backend"
    max_window: int = 100

    @property
    def supports_sampling(self) -> bool:
        return False

    @property
    def capabilities(self) -> Capabilities:
        return Capabilities(self.name, self.max_window, self.supports_sampling)

    def check_window(self, passages: Sequence[Passage]) -> None:
        n = len(passages)
        if n < 1 or n > self.max_window:
            raise ValueError(f"{self.name}: window of {n} outside [1, {self.max_window}]")

    @abstractmethod
    def rerank(self, query: Query, passages: Sequence[Passage]) -> Ranking:
        """Return a valid ranking of ``passages``."""

    def _sample(self, query: Query, passages: Sequence[Passage], seed: int, index: int) -> Ranking:
        raise SamplingUnsupported(f"{self.name} cannot sample")

    def sample_rankings(
        self, query: Query, passages: Sequence[Passage], m: int, seed: int = 0
    ) -> list[Ranking]:
        """Draw ``m`` rankings (not necessarily distinct).

        Deterministic backends can only serve ``m == 1``, which returns
        :meth:`rerank`.
        """
        if m < 1:
            raise ValueError(f"sample count must be >= 1, got {m}")
        if not self.supports_sampling:
            if m == 1:
                return [self.rerank(query, passages)]
            raise SamplingUnsupported(f"{self.name} does not support sampling (m={m})")
        self.check_window(passages)
        samples: list[Ranking] = []
        for i in range(m):
            try:
                samples.append(self._sample(query, passages, seed, i))
            except BackendFailure as exc:
                exc.partial = samples
                raise exc.with_context(query_id=query.id)
        return samples

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r})"

"""Deterministic simulator backends.

All randomness is derived from a seed plus the call's content (query id,
passage ids, sample index), so a simulator returns identical output for
identical input regardless of call order or thread.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from coranking.backends.base import RerankerBackend
from coranking.core import CandidateList, Passage, Qrels, Query, Ranking, apply_ranking
from coranking.metrics import reward


def content_rng(seed: int, *parts: object) -> np.random.Generator:
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(repr(part).encode("utf-8"))
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


class IdentityBackend(RerankerBackend):
    name = "identity"

    def rerank(self, query: Query, passages: Sequence[Passage]) -> Ranking:
        self.check_window(passages)
        return Ranking.identity(len(passages))


class OracleBackend(RerankerBackend):
    """Sorts by qrels grade, ties kept in input order."""

    name = "oracle"

    def __init__(self, qrels: Qrels, max_window: int = 100) -> None:
        self.qrels = qrels
        self.max_window = max_window

    def rerank(self, query: Query, passages: Sequence[Passage]) -> Ranking:
        self.check_window(passages)
        grades = [self.qrels.grade(query.id, p.id) for p in passages]
        order = sorted(range(len(passages)), key=lambda i: -grades[i])
        return Ranking(tuple(i + 1 for i in order))


@dataclass(frozen=True)
class BiasModel:
    """Positional bias of a simulated reranker.

    ``penalties[i]`` is subtracted from the score of whatever passage sits at
    input position ``i`` (0-based); positions beyond the vector get none.
    """

    penalties: tuple[float, ...] = ()
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        object.__setattr__(self, "penalties", tuple(float(x) for x in self.penalties))

    @classmethod
    def mid_list(
        cls,
        n: int = 20,
        first: int = 8,
        last: int = 14,
        strength: float = 2.5,
        sigma: float = 0.0,
        seed: int = 0,
    ) -> BiasModel:
        """Flat penalty ``strength`` on input positions ``first..last`` inclusive."""
        penalties = tuple(strength if first <= i <= last else 0.0 for i in range(n))
        return cls(penalties, sigma, seed)

    def penalty(self, position: int) -> float:
        return self.penalties[position] if position < len(self.penalties) else 0.0


def biased_rerank(
    query: Query,
    passages: Sequence[Passage],
    grades: Sequence[float],
    bias: BiasModel,
    sample: object = None,
) -> Ranking:
    """Sort by ``grade - penalty(position) + noise``; ties by input position.

    ``sample`` keys an independent noise draw; ``None`` is the draw used by
    plain reranking.
    """
    n = len(passages)
    scores = np.array([grades[i] - bias.penalty(i) for i in range(n)], dtype=float)
    if bias.sigma > 0:
        rng = content_rng(bias.seed, "bias", query.id, [p.id for p in passages], sample)
        scores = scores + rng.normal(0.0, bias.sigma, size=n)
    order = sorted(range(n), key=lambda i: -scores[i])
    return Ranking(tuple(i + 1 for i in order))


class BiasedBackend(RerankerBackend):
    """Oracle with positional penalties and optional Gaussian score noise.

    With no penalties and ``sigma == 0`` it behaves exactly like
    :class:`OracleBackend`. Sampling is available when ``sigma > 0``.
    """

    name = "biased"

    def __init__(self, qrels: Qrels, bias: BiasModel | None = None, max_window: int = 100) -> None:
        self.qrels = qrels
        self.bias = bias or BiasModel()
        self.max_window = max_window

    @property
    def supports_sampling(self) -> bool:
        return self.bias.sigma > 0

    def _grades(self, query: Query, passages: Sequence[Passage]) -> list[int]:
        return [self.qrels.grade(query.id, p.id) for p in passages]

    def rerank(self, query: Query, passages: Sequence[Passage]) -> Ranking:
        self.check_window(passages)
        return biased_rerank(query, passages, self._grades(query, passages), self.bias)

    def _sample(self, query: Query, passages: Sequence[Passage], seed: int, index: int) -> Ranking:
        grades = self._grades(query, passages)
        return biased_rerank(query, passages, grades, self.bias, sample=(seed, index))


class RandomBackend(RerankerBackend):
    """Uniformly random permutations."""

    name = "random"

    def __init__(self, seed: int = 0, max_window: int = 100) -> None:
        self.seed = seed
        self.max_window = max_window

    @property
    def supports_sampling(self) -> bool:
        return True

    def _permutation(self, query: Query, passages: Sequence[Passage], tag: object) -> Ranking:
        rng = content_rng(self.seed, "random", query.id, [p.id for p in passages], tag)
        return Ranking(tuple(int(v) + 1 for v in rng.permutation(len(passages))))

    def rerank(self, query: Query, passages: Sequence[Passage]) -> Ranking:
        self.check_window(passages)
        return self._permutation(query, passages, None)

    def _sample(self, query: Query, passages: Sequence[Passage], seed: int, index: int) -> Ranking:
        return self._permutation(query, passages, (seed, index))


class BestOfSamplesAdjuster(RerankerBackend):
    """Order adjuster that keeps the sampled ordering the large reranker likes best.

    Each candidate ordering is scored by feeding it to ``llr`` and measuring
    NDCG@k of the output against ``qrels``. It stands in for a perfectly
    trained adjuster in desk-scale studies. When ``include_identity`` is set
    the unadjusted order competes too (and wins ties), so the adjuster never
    does worse than passing the list through.
    """

    name = "best-of"

    def __init__(
        self,
        sampler: RerankerBackend,
        llr: RerankerBackend,
        qrels: Qrels,
        m: int = 8,
        seed: int = 0,
        k: int = 10,
        include_identity: bool = True,
    ) -> None:
        self.sampler = sampler
        self.llr = llr
        self.qrels = qrels
        self.m = m
        self.seed = seed
        self.k = k
        self.include_identity = include_identity
        self.max_window = min(sampler.max_window, llr.max_window)

    def rerank(self, query: Query, passages: Sequence[Passage]) -> Ranking:
        self.check_window(passages)
        options = self.sampler.sample_rankings(query, passages, self.m, self.seed)
        if self.include_identity:
            options = [Ranking.identity(len(passages)), *options]
        best, best_value = options[0], -1.0
        for option in options:
            ordered = CandidateList(query, tuple(apply_ranking(passages, option)))
            value = reward(ordered, self.llr, self.qrels, self.k).value
            if value > best_value:
                best, best_value = option, value
        return best

"""NDCG@k and the downstream reward of a candidate ordering.

Gains are linear in the grade with a ``log2(rank + 1)`` discount, the
trec_eval ``ndcg_cut`` convention. The ideal DCG is taken over every judged
passage of the query, not only the retrieved ones.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence

from coranking.core import CandidateList, Qrels, Ranking, apply_ranking

if TYPE_CHECKING:
    from coranking.backends.base import RerankerBackend

logger = logging.getLogger(__name__)


def dcg_at_k(grades: Sequence[float], k: int) -> float:
    """Discounted cumulative gain of ``grades`` (in rank order) at cutoff ``k``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return sum(g / math.log2(i + 2) for i, g in enumerate(grades[:k]))


def ideal_dcg(qrels: Qrels, query_id: str, k: int) -> float:
    grades = sorted(qrels.for_query(query_id).values(), reverse=True)
    return dcg_at_k(grades, k)


@dataclass(frozen=True)
class NdcgResult:
    value: float
    degenerate: bool = False


def ndcg_detail(ranked_ids: Sequence[str], qrels: Qrels, query_id: str, k: int = 10) -> NdcgResult:
    """Like :func:`ndcg_at_k` but also reports whether the query was degenerate."""
    if not ranked_ids:
        raise ValueError("ranked ids must be non-empty")
    idcg = ideal_dcg(qrels, query_id, k)
    if idcg == 0:
        return NdcgResult(0.0, degenerate=True)
    dcg = dcg_at_k([qrels.grade(query_id, pid) for pid in ranked_ids], k)
    return NdcgResult(dcg / idcg)


def ndcg_at_k(ranked_ids: Sequence[str], qrels: Qrels, query_id: str, k: int = 10) -> float:
    """NDCG@k of a ranked id list; 0.0 for queries with no relevant judgments."""
    return ndcg_detail(ranked_ids, qrels, query_id, k).value


def is_perfect(value: float, tol: float = 1e-12) -> bool:
    return value >= 1.0 - tol


@dataclass
class MetricReport:
    """Per-query NDCG@k with its arithmetic mean."""

    k: int
    per_query: dict[str, float] = field(default_factory=dict)
    degenerate: list[str] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)

    @property
    def mean(self) -> float:
        if not self.per_query:
            return 0.0
        return sum(self.per_query.values()) / len(self.per_query)

    def to_tsv(self) -> str:
        lines = [f"{qid}\t{self.per_query[qid]:.6f}" for qid in sorted(self.per_query)]
        lines.append(f"mean\t{self.mean:.6f}")
        return "\n".join(lines) + "\n"


def evaluate_rankings(
    rankings: Mapping[str, Sequence[str]], qrels: Qrels, k: int = 10
) -> MetricReport:
    """Score ranked id lists keyed by query id.

    Queries missing from ``qrels`` are excluded from the mean and listed in
    ``excluded``.
    """
    report = MetricReport(k=k)
    for qid in sorted(rankings):
        if qid not in qrels:
            report.excluded.append(qid)
            continue
        result = ndcg_detail(rankings[qid], qrels, qid, k)
        if result.degenerate:
            report.degenerate.append(qid)
        report.per_query[qid] = result.value
    if report.excluded:
        logger.warning("%d run queries absent from qrels were excluded", len(report.excluded))
    return report


@dataclass(frozen=True)
class RewardResult:
    value: float
    llr_ranking: Ranking
    ordered_ids: tuple[str, ...]


def reward(
    candidates: CandidateList,
    llr: RerankerBackend,
    qrels: Qrels,
    k: int = 10,
) -> RewardResult:
    """Feed ``candidates`` (in their current order) to ``llr`` and score its output.

    The value measures how well the ordering suits the large reranker, not
    the ordering's own quality.
    """
    from coranking.backends.base import BackendFailure

    if len(candidates) < 1:
        raise ValueError("reward needs at least one candidate")
    try:
        ranking = llr.rerank(candidates.query, candidates.passages)
    except BackendFailure as exc:
        raise exc.with_context(query_id=candidates.query.id) from exc
    ordered = tuple(p.id for p in apply_ranking(candidates.passages, ranking))
    value = ndcg_at_k(ordered, qrels, candidates.query.id, k)
    return RewardResult(value, ranking, ordered)

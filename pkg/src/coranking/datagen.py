"""Training-data construction for the small reranker and the order adjuster.

Gold rankings for supervised fine-tuning come from iterating a teacher
reranker over a short candidate list and keeping the first iteration whose
ranking is perfect under the human labels. Preference pairs for DPO come
from sampling orderings of the small reranker's top-k, scoring each by how
well the large reranker ranks it, and filtering pairs by significance.
"""

from __future__ import annotations

import logging
import math
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from coranking.backends.base import BackendFailure, RerankerBackend
from coranking.core import CandidateList, Qrels, Ranking, apply_ranking
from coranking.metrics import RewardResult, is_perfect, ndcg_at_k, reward
from coranking.prompting import training_input
from coranking.windowing import run_pass

logger = logging.getLogger(__name__)

PERFECT_TOL = 1e-12


@dataclass(frozen=True)
class SftExample:
    qid: str
    input: str
    target: str
    passage_ids: tuple[str, ...]
    ranking: Ranking
    ndcg_of_target: float
    iterations_used: int

    def verify(self, qrels: Qrels, k: int = 10) -> None:
        ordered = apply_ranking(self.passage_ids, self.ranking)
        value = ndcg_at_k(ordered, qrels, self.qid, k)
        if not is_perfect(value, PERFECT_TOL):
            raise AssertionError(f"{self.qid}: target re-scores to NDCG {value}, not 1")

    def to_record(self) -> dict:
        return {
            "qid": self.qid,
            "input": self.input,
            "target": self.target,
            "iterations_used": self.iterations_used,
            "passage_ids": list(self.passage_ids),
        }


@dataclass
class HrcOutcome:
    qid: str
    example: SftExample | None = None
    reason: str | None = None
    ndcg_trace: list[float] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.example is not None


def hrc_build(
    candidates: CandidateList,
    teacher: RerankerBackend,
    qrels: Qrels,
    max_iterations: int = 5,
    k: int = 10,
) -> HrcOutcome:
    """Iteratively rerank ``candidates`` with ``teacher``; keep the first perfect ranking.

    Iteration ``i + 1`` reranks the output of iteration ``i``. The emitted
    target is expressed in the ids of the original candidate order, which is
    also the order used for the training input.
    """
    qid = candidates.query.id
    outcome = HrcOutcome(qid)
    if len(candidates) > teacher.max_window:
        outcome.reason = f"{len(candidates)} candidates exceed teacher window {teacher.max_window}"
        return outcome
    if not qrels.has_relevant(qid):
        outcome.reason = "no relevant judgments"
        return outcome

    original = candidates.passages
    composed = Ranking.identity(len(original))
    for iteration in range(1, max_iterations + 1):
        current = apply_ranking(original, composed)
        try:
            step = teacher.rerank(candidates.query, current)
        except BackendFailure as exc:
            outcome.reason = f"backend failure at iteration {iteration}: {exc}"
            return outcome
        composed = composed.then(step)
        ordered_ids = [p.id for p in apply_ranking(original, composed)]
        value = ndcg_at_k(ordered_ids, qrels, qid, k)
        outcome.ndcg_trace.append(value)
        if is_perfect(value, PERFECT_TOL):
            outcome.example = SftExample(
                qid=qid,
                input=training_input(candidates.query, original),
                target=composed.to_string(" "),
                passage_ids=tuple(p.id for p in original),
                ranking=composed,
                ndcg_of_target=value,
                iterations_used=iteration,
            )
            return outcome
    outcome.reason = f"no perfect ranking within {max_iterations} iterations"
    return outcome


def select_first_perfect(ndcg_trace: Sequence[float], tol: float = PERFECT_TOL) -> int | None:
    """1-based index of the first perfect iteration in a trace, or None."""
    for i, value in enumerate(ndcg_trace, start=1):
        if is_perfect(value, tol):
            return i
    return None


class RewardCache:
    """Thread-safe memo of rewards keyed by (reranker, query id, ordering)."""

    def __init__(self) -> None:
        self._data: dict[tuple[str, str, tuple[str, ...]], RewardResult] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._data)

    def get_or_compute(
        self, candidates: CandidateList, llr: RerankerBackend, qrels: Qrels, k: int = 10
    ) -> RewardResult:
        key = (llr.name, candidates.query.id, tuple(candidates.ids))
        with self._lock:
            hit = self._data.get(key)
            if hit is not None:
                self.hits += 1
                return hit
            self.misses += 1
        result = reward(candidates, llr, qrels, k)
        with self._lock:
            self._data.setdefault(key, result)
        return result


def s3_select(rewards: Sequence[float], baseline: float, mu: float) -> list[tuple[int, int]]:
    """Significance-aware selection of (winner, loser) sample indices.

    The winner is the first sample with the highest reward. A pair survives
    only if the winner's reward is 1, strictly beats ``baseline``, and
    exceeds the loser's reward by more than ``mu``.
    """
    if not rewards:
        return []
    best = max(rewards)
    winner = rewards.index(best)
    if not is_perfect(best, PERFECT_TOL) or not best > baseline:
        return []
    return [(winner, j) for j, r in enumerate(rewards) if j != winner and best - r > mu]


@dataclass(frozen=True)
class PreferencePair:
    qid: str
    input: str
    chosen: str
    rejected: str
    reward_chosen: float
    reward_rejected: float
    baseline: float

    def verify(self, mu: float) -> None:
        if not is_perfect(self.reward_chosen, PERFECT_TOL):
            raise AssertionError(f"{self.qid}: winner reward {self.reward_chosen} is not 1")
        if not self.reward_chosen > self.baseline:
            raise AssertionError(f"{self.qid}: winner does not beat baseline {self.baseline}")
        if not self.reward_chosen - self.reward_rejected > mu:
            raise AssertionError(f"{self.qid}: gap {self.reward_chosen - self.reward_rejected} <= {mu}")

    def to_record(self) -> dict:
        return {
            "qid": self.qid,
            "input": self.input,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "reward_chosen": self.reward_chosen,
            "reward_rejected": self.reward_rejected,
            "baseline": self.baseline,
        }


@dataclass
class S3Outcome:
    qid: str
    pairs: list[PreferencePair] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    baseline: float | None = None
    reason: str | None = None


def s3_build(
    candidates: CandidateList,
    slr: RerankerBackend,
    llr: RerankerBackend,
    qrels: Qrels,
    m: int = 8,
    mu: float = 0.4,
    seed: int = 0,
    top_k: int = 20,
    window: int = 20,
    step: int = 10,
    k: int = 10,
    cache: RewardCache | None = None,
) -> S3Outcome:
    """Build filtered preference pairs for one query.

    ``candidates`` is the first-stage list (typically 100 passages). The
    small reranker's sliding pass condenses it to ``top_k``; ``m`` sampled
    orderings of that condensed list are rewarded through ``llr`` and
    filtered with :func:`s3_select`. The baseline is the reward of the
    condensed list in the small reranker's own order.
    """
    qid = candidates.query.id
    outcome = S3Outcome(qid)
    if not qrels.has_relevant(qid):
        outcome.reason = "no relevant judgments"
        return outcome
    cache = cache if cache is not None else RewardCache()
    try:
        pre = run_pass(candidates, slr, window, step, stage="slr")
        if pre.error is not None:
            raise pre.error
        condensed = pre.candidates.head(top_k)
        baseline = cache.get_or_compute(condensed, llr, qrels, k).value
        samples = slr.sample_rankings(condensed.query, condensed.passages, m, seed)
        orderings = [condensed.with_passages(apply_ranking(condensed.passages, s)) for s in samples]
        rewards = [cache.get_or_compute(o, llr, qrels, k).value for o in orderings]
    except BackendFailure as exc:
        outcome.reason = f"backend failure: {exc}"
        logger.warning("skipping %s: %s", qid, exc)
        return outcome

    outcome.baseline = baseline
    outcome.rewards = rewards
    text = training_input(condensed.query, condensed.passages)
    for w, l in s3_select(rewards, baseline, mu):
        pair = PreferencePair(
            qid=qid,
            input=text,
            chosen=samples[w].to_string(" "),
            rejected=samples[l].to_string(" "),
            reward_chosen=rewards[w],
            reward_rejected=rewards[l],
            baseline=baseline,
        )
        pair.verify(mu)
        outcome.pairs.append(pair)
    return outcome


def dpo_loss(
    logp_policy_w: float,
    logp_policy_l: float,
    logp_ref_w: float,
    logp_ref_l: float,
    beta: float = 0.4,
) -> float:
    """DPO loss for one pair, ``-log sigmoid(beta * margin)``.

    ``margin`` is the policy's log-ratio gain on the winner minus its gain
    on the loser, both relative to the frozen reference. Evaluated as a
    softplus so large margins of either sign stay finite and accurate.
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    margin = (logp_policy_w - logp_ref_w) - (logp_policy_l - logp_ref_l)
    z = -beta * margin
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


@dataclass
class GenerationSummary:
    total: int = 0
    accepted: int = 0
    failed: int = 0
    items: int = 0
    rejections: Counter = field(default_factory=Counter)

    @property
    def rejected(self) -> int:
        return self.total - self.accepted

    @property
    def mean_items_per_query(self) -> float:
        return self.items / self.total if self.total else 0.0

    @property
    def systemic_failure(self) -> bool:
        return self.total > 0 and self.failed / self.total > 0.5

    def lines(self, item_name: str) -> list[str]:
        out = [
            f"queries\t{self.total}",
            f"accepted\t{self.accepted}",
            f"rejected\t{self.rejected}",
            f"failed\t{self.failed}",
            f"{item_name}\t{self.items}",
            f"{item_name}_per_query\t{self.mean_items_per_query:.3f}",
        ]
        out += [f"reason\t{reason}\t{n}" for reason, n in sorted(self.rejections.items())]
        return out


def _run_all(fn: Callable, items: Sequence, concurrency: int) -> list:
    if concurrency <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(fn, items))


def _reason_key(reason: str) -> str:
    return reason.split(":")[0]


def build_sft_dataset(
    lists: Sequence[CandidateList],
    teacher: RerankerBackend,
    qrels: Qrels,
    max_iterations: int = 5,
    k: int = 10,
    depth: int = 20,
    concurrency: int = 1,
) -> tuple[list[SftExample], GenerationSummary]:
    """Run :func:`hrc_build` on the top-``depth`` of every list."""
    outcomes = _run_all(
        lambda c: hrc_build(c.head(depth), teacher, qrels, max_iterations, k), lists, concurrency
    )
    summary = GenerationSummary(total=len(outcomes))
    examples = []
    for o in outcomes:
        if o.accepted:
            o.example.verify(qrels, k)
            examples.append(o.example)
            summary.accepted += 1
        else:
            summary.rejections[_reason_key(o.reason)] += 1
            if o.reason.startswith("backend failure"):
                summary.failed += 1
    summary.items = len(examples)
    return examples, summary


def build_dpo_dataset(
    lists: Sequence[CandidateList],
    slr: RerankerBackend,
    llr: RerankerBackend,
    qrels: Qrels,
    m: int = 8,
    mu: float = 0.4,
    seed: int = 0,
    top_k: int = 20,
    window: int = 20,
    step: int = 10,
    k: int = 10,
    concurrency: int = 1,
    cache: RewardCache | None = None,
) -> tuple[list[PreferencePair], GenerationSummary]:
    """Run :func:`s3_build` on every list, sharing one reward cache."""
    cache = cache if cache is not None else RewardCache()
    outcomes = _run_all(
        lambda c: s3_build(c, slr, llr, qrels, m, mu, seed, top_k, window, step, k, cache),
        lists,
        concurrency,
    )
    summary = GenerationSummary(total=len(outcomes))
    pairs: list[PreferencePair] = []
    for o in outcomes:
        if o.pairs:
            summary.accepted += 1
            pairs.extend(o.pairs)
        elif o.reason is not None:
            summary.rejections[_reason_key(o.reason)] += 1
            if o.reason.startswith("backend failure"):
                summary.failed += 1
        else:
            summary.rejections["no pair survived selection"] += 1
    summary.items = len(pairs)
    return pairs, summary

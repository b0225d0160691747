"""Ranking strategies, cost accounting and strategy comparison.

Four strategies are supported:

``single-window``
    One large-reranker call over the first ``window`` passages.
``llr-sliding``
    A full sliding-window pass of the large reranker.
``naive``
    Small-reranker sliding pass, then one large-reranker call over the top-k.
``coranking``
    Small-reranker sliding pass, one order-adjuster call over the top-k,
    then one large-reranker call over the same top-k.

Passages below the top-k keep the small reranker's order.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from coranking.backends.base import BackendFailure, RerankerBackend
from coranking.core import CandidateList, InvalidParams, Qrels
from coranking.metrics import ndcg_at_k
from coranking.validation import check_candidates, check_qrels, check_window_params
from coranking.windowing import WindowTrace, run_pass, run_window

logger = logging.getLogger(__name__)

STRATEGIES = ("single-window", "llr-sliding", "naive", "coranking")
STAGES = ("slr", "poa", "llr")
REQUIRED_BACKENDS = {
    "single-window": ("llr",),
    "llr-sliding": ("llr",),
    "naive": ("slr", "llr"),
    "coranking": ("slr", "poa", "llr"),
}


@dataclass(frozen=True)
class UnitCosts:
    """Modeled cost of one call per stage, in milliseconds.

    The default large/small ratio of 24 is the 72B/3B parameter ratio.
    """

    slr: float = 1.0
    poa: float = 1.0
    llr: float = 24.0

    def __post_init__(self) -> None:
        if min(self.slr, self.poa, self.llr) < 0:
            raise ValueError("unit costs must be >= 0")


@dataclass
class StrategySpec:
    kind: str = "coranking"
    top_k: int = 20
    window: int = 20
    step: int = 10
    slr: RerankerBackend | None = None
    poa: RerankerBackend | None = None
    llr: RerankerBackend | None = None
    lenient: bool = False

    def validate(self) -> None:
        if self.kind not in STRATEGIES:
            raise InvalidParams(f"unknown strategy {self.kind!r}; expected one of {STRATEGIES}")
        check_window_params(self.window, self.step, self.top_k)
        missing = [s for s in REQUIRED_BACKENDS[self.kind] if getattr(self, s) is None]
        if missing:
            raise InvalidParams(f"strategy {self.kind!r} needs backends: {', '.join(missing)}")


@dataclass
class CostReport:
    query_id: str
    slr_calls: int = 0
    poa_calls: int = 0
    llr_calls: int = 0
    stage_ms: dict[str, float] = field(default_factory=dict)
    modeled_ms: float = 0.0

    @property
    def total_calls(self) -> int:
        return self.slr_calls + self.poa_calls + self.llr_calls

    def add(self, stage: str, calls: int, ms: float) -> None:
        setattr(self, f"{stage}_calls", getattr(self, f"{stage}_calls") + calls)
        self.stage_ms[stage] = self.stage_ms.get(stage, 0.0) + ms


def latency_model(report: CostReport, costs: UnitCosts = UnitCosts()) -> float:
    """Modeled latency: calls per stage times the per-call cost, summed."""
    return report.slr_calls * costs.slr + report.poa_calls * costs.poa + report.llr_calls * costs.llr


@dataclass
class StrategyResult:
    ranked_ids: list[str]
    cost: CostReport
    candidates: CandidateList
    trace: list[WindowTrace] = field(default_factory=list)


def _single_window(
    candidates: CandidateList, backend: RerankerBackend, size: int, stage: str, cost: CostReport
) -> tuple[CandidateList, WindowTrace]:
    t0 = time.perf_counter()
    try:
        out, trace = run_window(candidates, backend, 0, size, stage)
    except BackendFailure as exc:
        raise exc.with_context(query_id=candidates.query.id, stage=stage)
    finally:
        cost.add(stage, 1, (time.perf_counter() - t0) * 1000.0)
    return out, trace


def _sliding(
    candidates: CandidateList, spec: StrategySpec, stage: str, cost: CostReport
) -> tuple[CandidateList, list[WindowTrace]]:
    t0 = time.perf_counter()
    result = run_pass(
        candidates, getattr(spec, stage), spec.window, spec.step, lenient=spec.lenient, stage=stage
    )
    cost.add(stage, result.calls, (time.perf_counter() - t0) * 1000.0)
    if result.error is not None:
        raise result.error
    return result.candidates, result.trace


def run_strategy(
    spec: StrategySpec, candidates: CandidateList, costs: UnitCosts = UnitCosts()
) -> StrategyResult:
    """Rank one candidate list with ``spec``; stages run strictly in sequence.

    Raises:
        BackendFailure: tagged with the failing stage and query id.
    """
    spec.validate()
    if len(candidates) < 1:
        raise ValueError(f"no candidates for query {candidates.query.id!r}")
    cost = CostReport(candidates.query.id)
    trace: list[WindowTrace] = []
    current = candidates
    head = min(spec.top_k, len(current))

    if spec.kind == "single-window":
        current, t = _single_window(current, spec.llr, min(spec.window, len(current)), "llr", cost)
        trace.append(t)
    elif spec.kind == "llr-sliding":
        current, ts = _sliding(current, spec, "llr", cost)
        trace.extend(ts)
    else:
        current, ts = _sliding(current, spec, "slr", cost)
        trace.extend(ts)
        if spec.kind == "coranking":
            current, t = _single_window(current, spec.poa, head, "poa", cost)
            trace.append(t)
        current, t = _single_window(current, spec.llr, head, "llr", cost)
        trace.append(t)

    cost.modeled_ms = latency_model(cost, costs)
    return StrategyResult(current.ids, cost, current, trace)


def _map(fn, items: Sequence[Any], concurrency: int) -> list[Any]:
    if concurrency <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(fn, items))


@dataclass
class StrategyRow:
    name: str
    mean_ndcg: float
    mean_slr_calls: float
    mean_poa_calls: float
    mean_llr_calls: float
    mean_modeled_ms: float
    queries: int
    excluded: int

    @property
    def mean_calls(self) -> float:
        return self.mean_slr_calls + self.mean_poa_calls + self.mean_llr_calls


@dataclass
class ComparisonReport:
    k: int
    rows: list[StrategyRow] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)

    _COLUMNS = ("strategy", "ndcg@{k}", "slr_calls", "poa_calls", "llr_calls", "calls", "modeled_ms", "queries", "excluded")

    def _cells(self, row: StrategyRow) -> list[str]:
        return [
            row.name,
            f"{row.mean_ndcg:.4f}",
            f"{row.mean_slr_calls:.2f}",
            f"{row.mean_poa_calls:.2f}",
            f"{row.mean_llr_calls:.2f}",
            f"{row.mean_calls:.2f}",
            f"{row.mean_modeled_ms:.2f}",
            str(row.queries),
            str(row.excluded),
        ]

    def header(self) -> list[str]:
        return [c.format(k=self.k) for c in self._COLUMNS]

    def to_tsv(self) -> str:
        lines = ["\t".join(self.header())]
        lines += ["\t".join(self._cells(r)) for r in self.rows]
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        head = self.header()
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        lines += ["| " + " | ".join(self._cells(r)) + " |" for r in self.rows]
        return "\n".join(lines) + "\n"

    def row(self, name: str) -> StrategyRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)


def compare_strategies(
    specs: Mapping[str, StrategySpec],
    dataset: Sequence[CandidateList],
    qrels: Qrels,
    k: int = 10,
    costs: UnitCosts = UnitCosts(),
    concurrency: int = 1,
    wall_clock: bool = False,
) -> ComparisonReport:
    """Run every strategy over the same candidate lists and tabulate.

    Queries whose run fails are excluded from that strategy's means and
    counted in ``excluded``. Per-query records carry modeled latency in
    ``ms``; wall-clock stage timings are added only when ``wall_clock`` is
    set, since they would make the output nondeterministic.
    """
    report = ComparisonReport(k=k)
    for name, spec in specs.items():
        spec.validate()

        def one(cands: CandidateList, spec: StrategySpec = spec) -> StrategyResult | BackendFailure:
            try:
                return run_strategy(spec, cands, costs)
            except BackendFailure as exc:
                logger.warning("%s failed on %s: %s", name, cands.query.id, exc)
                return exc

        results = _map(one, list(dataset), concurrency)
        ok = [(c, r) for c, r in zip(dataset, results) if isinstance(r, StrategyResult)]
        ndcgs = []
        for cands, res in ok:
            value = ndcg_at_k(res.ranked_ids, qrels, cands.query.id, k)
            ndcgs.append(value)
            record = {
                "qid": cands.query.id,
                "strategy": name,
                "ndcg": value,
                "slr_calls": res.cost.slr_calls,
                "poa_calls": res.cost.poa_calls,
                "llr_calls": res.cost.llr_calls,
                "ms": res.cost.modeled_ms,
            }
            if wall_clock:
                record["wall_ms"] = {s: round(v, 3) for s, v in res.cost.stage_ms.items()}
            report.records.append(record)
        n = len(ok)

        def mean(values: list[float]) -> float:
            return sum(values) / n if n else 0.0

        report.rows.append(
            StrategyRow(
                name=name,
                mean_ndcg=mean(ndcgs),
                mean_slr_calls=mean([r.cost.slr_calls for _, r in ok]),
                mean_poa_calls=mean([r.cost.poa_calls for _, r in ok]),
                mean_llr_calls=mean([r.cost.llr_calls for _, r in ok]),
                mean_modeled_ms=mean([r.cost.modeled_ms for _, r in ok]),
                queries=n,
                excluded=len(dataset) - n,
            )
        )
    return report


class CoRanker(BaseEstimator):
    """Estimator wrapper around :func:`run_strategy`.

    ``fit`` only validates the configuration; the backends are trained (or
    hosted) elsewhere. ``transform`` returns reordered candidate lists,
    ``predict`` the ranked passage ids, and ``score`` mean NDCG@k against
    qrels.

    Parameters
    ----------
    strategy : str
        One of ``single-window``, ``llr-sliding``, ``naive``, ``coranking``.
    slr, poa, llr : RerankerBackend
        Small reranker, order adjuster and large reranker.
    top_k, window, step : int
        Condensed list size and sliding-window geometry.
    lenient : bool
        Keep a failed window's order instead of aborting the query.
    unit_costs : UnitCosts, optional
        Per-call costs for the latency model.
    n_jobs : int
        Queries processed concurrently.
    k : int
        Metric cutoff used by ``score``.

    Examples
    --------
    >>> from coranking import CoRanker, OracleBackend
    >>> model = CoRanker(strategy="llr-sliding", llr=OracleBackend(qrels)).fit(lists)  # doctest: +SKIP
    >>> model.score(lists, qrels)  # doctest: +SKIP
    """

    def __init__(
        self,
        strategy: str = "coranking",
        slr: RerankerBackend | None = None,
        poa: RerankerBackend | None = None,
        llr: RerankerBackend | None = None,
        top_k: int = 20,
        window: int = 20,
        step: int = 10,
        lenient: bool = False,
        unit_costs: UnitCosts | None = None,
        n_jobs: int = 1,
        k: int = 10,
    ) -> None:
        self.strategy = strategy
        self.slr = slr
        self.poa = poa
        self.llr = llr
        self.top_k = top_k
        self.window = window
        self.step = step
        self.lenient = lenient
        self.unit_costs = unit_costs
        self.n_jobs = n_jobs
        self.k = k

    def _spec(self) -> StrategySpec:
        return StrategySpec(
            kind=self.strategy,
            top_k=self.top_k,
            window=self.window,
            step=self.step,
            slr=self.slr,
            poa=self.poa,
            llr=self.llr,
            lenient=self.lenient,
        )

    def fit(self, X: Any = None, y: Any = None) -> CoRanker:
        spec = self._spec()
        spec.validate()
        if X is not None:
            check_candidates(X)
        self.spec_ = spec
        self.costs_ = self.unit_costs or UnitCosts()
        return self

    def _run(self, X: Any) -> list[StrategyResult]:
        check_is_fitted(self, "spec_")
        items = check_candidates(X)
        results = _map(lambda c: run_strategy(self.spec_, c, self.costs_), items, self.n_jobs)
        self.cost_reports_ = [r.cost for r in results]
        return results

    def transform(self, X: Any) -> list[CandidateList]:
        return [r.candidates for r in self._run(X)]

    def fit_transform(self, X: Any, y: Any = None) -> list[CandidateList]:
        return self.fit(X, y).transform(X)

    def predict(self, X: Any) -> list[list[str]]:
        return [r.ranked_ids for r in self._run(X)]

    def score(self, X: Any, y: Any) -> float:
        """Mean NDCG@k of the predicted rankings against qrels ``y``."""
        qrels = check_qrels(y)
        items = check_candidates(X)
        predictions = self.predict(items)
        values = [ndcg_at_k(ids, qrels, c.query.id, self.k) for c, ids in zip(items, predictions)]
        return sum(values) / len(values)

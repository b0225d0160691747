"""Synthetic datasets and simulator line-ups for desk-scale studies.

Everything here is a pure function of its seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from coranking import io
from coranking.backends import BestOfSamplesAdjuster, BiasedBackend, BiasModel, RandomBackend, RerankerBackend
from coranking.core import CandidateList, Passage, Qrels, Query, RunEntry

_VOCAB = (
    "river bank loan interest rate flood climate model sensor robot arm torque "
    "policy market inflation soil erosion plate tectonic motor gear battery "
    "voltage protein virus vaccine trial court ruling election budget tax"
).split()


@dataclass
class Fixture:
    queries: list[Query]
    corpus: list[Passage]
    run: list[RunEntry]
    qrels: Qrels

    def candidate_lists(self, depth: int = 100) -> list[CandidateList]:
        lists, _ = io.build_candidate_lists(
            {q.id: q for q in self.queries}, {p.id: p for p in self.corpus}, self.run, depth
        )
        return lists

    def write(self, directory: str | Path) -> dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {
            "queries": d / "queries.tsv",
            "corpus": d / "corpus.jsonl",
            "run": d / "bm25.trec",
            "qrels": d / "qrels.txt",
        }
        io.write_queries(paths["queries"], self.queries)
        io.write_corpus(paths["corpus"], self.corpus)
        io.write_run(paths["run"], self.run, tag="bm25")
        io.write_qrels(paths["qrels"], self.qrels)
        return paths


def make_fixture(
    n_queries: int = 5,
    depth: int = 100,
    seed: int = 0,
    min_relevant: int = 3,
    max_relevant: int = 14,
    first_stage_noise: float = 1.5,
) -> Fixture:
    """Random queries with graded judgments and a noisy first-stage run.

    Each query gets between ``min_relevant`` and ``max_relevant`` relevant
    passages (grades 1 to 3). The first-stage score is the grade plus
    Gaussian noise, so relevant passages lean toward the top but are spread
    through the list.
    """
    rng = np.random.default_rng(seed)
    queries, corpus, run = [], [], []
    triples = []
    for qi in range(n_queries):
        qid = f"q{qi + 1}"
        words = rng.choice(_VOCAB, size=4, replace=False)
        queries.append(Query(qid, " ".join(words)))
        n_rel = int(rng.integers(min_relevant, max_relevant + 1))
        grades = np.zeros(depth, dtype=int)
        grades[:n_rel] = rng.integers(1, 4, size=n_rel)
        pids = [f"{qid}-d{j + 1}" for j in range(depth)]
        for pid, g in zip(pids, grades):
            text = " ".join(rng.choice(_VOCAB, size=int(rng.integers(8, 30))))
            corpus.append(Passage(pid, text))
            triples.append((qid, pid, int(g)))
        scores = grades + rng.normal(0.0, first_stage_noise, size=depth)
        order = np.argsort(-scores, kind="stable")
        for rank, j in enumerate(order, start=1):
            run.append(RunEntry(qid, pids[j], rank, float(depth - rank + 1)))
    return Fixture(queries, corpus, run, Qrels.from_triples(triples))


def simulation_backends(qrels: Qrels, seed: int = 0, m: int = 256) -> dict[str, RerankerBackend]:
    """The default simulator line-up.

    * slr: noisy oracle (decent but imperfect small reranker)
    * llr: oracle with a mid-list blind spot on input positions 8 to 14
    * poa: best-of-``m`` random orderings judged through that llr
    """
    slr = BiasedBackend(qrels, BiasModel((), sigma=0.75, seed=seed))
    slr.name = "sim-slr"
    llr = BiasedBackend(qrels, BiasModel.mid_list(20, 8, 14, strength=2.5, seed=seed))
    llr.name = "sim-llr"
    poa = BestOfSamplesAdjuster(RandomBackend(seed), llr, qrels, m=m, seed=seed)
    poa.name = "sim-poa"
    return {"slr": slr, "poa": poa, "llr": llr}

"""Readers and writers for the on-disk formats.

* queries: TSV ``qid<TAB>text``
* corpus: JSONL ``{"id": ..., "text": ...}``
* runs: 6-column TREC ``qid Q0 docid rank score tag``
* qrels: 4-column TREC ``qid 0 docid grade``
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from coranking.core import CandidateList, CorankingError, Passage, Qrels, Query, RunEntry, run_entries

logger = logging.getLogger(__name__)


class DataFormatError(CorankingError, ValueError):
    def __init__(self, path: str | Path, line: int | None, message: str) -> None:
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


def _lines(path: str | Path) -> Iterable[tuple[int, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if line.strip():
                yield lineno, line


def read_queries(path: str | Path) -> dict[str, Query]:
    queries: dict[str, Query] = {}
    for lineno, line in _lines(path):
        qid, sep, text = line.partition("\t")
        if not sep:
            raise DataFormatError(path, lineno, "expected 'qid<TAB>text'")
        if qid in queries:
            raise DataFormatError(path, lineno, f"duplicate query id {qid!r}")
        try:
            queries[qid] = Query(qid, text)
        except ValueError as exc:
            raise DataFormatError(path, lineno, str(exc)) from exc
    return queries


def write_queries(path: str | Path, queries: Iterable[Query]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for q in queries:
            fh.write(f"{q.id}\t{q.text}\n")


def read_corpus(path: str | Path) -> dict[str, Passage]:
    corpus: dict[str, Passage] = {}
    for lineno, line in _lines(path):
        try:
            obj = json.loads(line)
            pid = str(obj["id"])
            text = obj["text"]
        except (ValueError, KeyError, TypeError) as exc:
            raise DataFormatError(path, lineno, f"bad corpus record: {exc}") from exc
        if not isinstance(text, str):
            raise DataFormatError(path, lineno, "text must be a string")
        corpus[pid] = Passage(pid, text)
    return corpus


def write_corpus(path: str | Path, passages: Iterable[Passage]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for p in passages:
            fh.write(json.dumps({"id": p.id, "text": p.text}, ensure_ascii=False) + "\n")


def read_run(path: str | Path) -> list[RunEntry]:
    entries = []
    for lineno, line in _lines(path):
        parts = line.split()
        if len(parts) != 6:
            raise DataFormatError(path, lineno, f"expected 6 columns, got {len(parts)}")
        qid, _, pid, rank, score, _ = parts
        try:
            entries.append(RunEntry(qid, pid, int(rank), float(score)))
        except ValueError as exc:
            raise DataFormatError(path, lineno, str(exc)) from exc
    return entries


def format_run(entries: Iterable[RunEntry], tag: str = "coranking") -> str:
    return "".join(f"{e.query_id} Q0 {e.passage_id} {e.rank} {e.score!r} {tag}\n" for e in entries)


def write_run(path: str | Path, entries: Iterable[RunEntry], tag: str = "coranking") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_run(entries, tag))


def rankings_to_entries(rankings: Mapping[str, Sequence[str]]) -> list[RunEntry]:
    out: list[RunEntry] = []
    for qid, ids in rankings.items():
        out.extend(run_entries(qid, ids))
    return out


def group_run(entries: Iterable[RunEntry], order: str = "rank") -> dict[str, list[str]]:
    """Ranked passage ids per query.

    ``order="rank"`` sorts by score descending with ties broken by the rank
    column (first-stage input). ``order="trec_eval"`` sorts by score
    descending with ties broken by descending docid, as trec_eval does.
    """
    by_query: dict[str, list[RunEntry]] = {}
    for e in entries:
        by_query.setdefault(e.query_id, []).append(e)
    out = {}
    for qid, items in by_query.items():
        if order == "trec_eval":
            items = sorted(items, key=lambda e: (e.score, e.passage_id), reverse=True)
        else:
            items = sorted(items, key=lambda e: (-e.score, e.rank))
        out[qid] = [e.passage_id for e in items]
    return out


def read_qrels(path: str | Path) -> Qrels:
    triples = []
    for lineno, line in _lines(path):
        parts = line.split()
        if len(parts) != 4:
            raise DataFormatError(path, lineno, f"expected 4 columns, got {len(parts)}")
        qid, _, pid, grade = parts
        try:
            g = int(grade)
        except ValueError as exc:
            raise DataFormatError(path, lineno, f"grade {grade!r} is not an integer") from exc
        # trec_eval treats negative grades as non-relevant
        triples.append((qid, pid, max(g, 0)))
    return Qrels.from_triples(triples)


def write_qrels(path: str | Path, qrels: Qrels) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for qid, docs in qrels.judgments.items():
            for pid, grade in docs.items():
                fh.write(f"{qid} 0 {pid} {grade}\n")


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    return [json.loads(line) for _, line in _lines(path)]


@dataclass
class Dataset:
    """Candidate lists ready for reranking, with optional judgments."""

    lists: list[CandidateList]
    qrels: Qrels | None = None
    missing_passages: list[tuple[str, str]] = field(default_factory=list)

    @property
    def query_ids(self) -> list[str]:
        return [c.query.id for c in self.lists]


def build_candidate_lists(
    queries: Mapping[str, Query],
    corpus: Mapping[str, Passage],
    run: Iterable[RunEntry],
    depth: int = 100,
) -> tuple[list[CandidateList], list[tuple[str, str]]]:
    """Join a first-stage run with query and passage text.

    Lists keep the run's query order and are cut to ``depth``. Run entries
    whose passage is absent from the corpus are skipped and returned.
    """
    grouped = group_run(run, order="rank")
    lists, missing = [], []
    for qid, pids in grouped.items():
        if qid not in queries:
            logger.warning("run query %s has no text; skipped", qid)
            continue
        passages = []
        for pid in pids:
            if pid not in corpus:
                missing.append((qid, pid))
                continue
            passages.append(corpus[pid])
            if len(passages) == depth:
                break
        if passages:
            lists.append(CandidateList(queries[qid], tuple(passages)))
    if missing:
        logger.warning("%d run entries reference passages missing from the corpus", len(missing))
    return lists, missing


def load_dataset(
    queries_path: str | Path,
    corpus_path: str | Path,
    run_path: str | Path,
    qrels_path: str | Path | None = None,
    depth: int = 100,
) -> Dataset:
    lists, missing = build_candidate_lists(
        read_queries(queries_path), read_corpus(corpus_path), read_run(run_path), depth
    )
    qrels = read_qrels(qrels_path) if qrels_path else None
    return Dataset(lists, qrels, missing)

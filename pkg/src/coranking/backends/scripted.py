"""Replay of recorded window traces, for golden-file tests without a network."""

from __future__ import annotations

import json
import threading
from collections import defaultdict, deque
from pathlib import Path
from typing import Iterable, Sequence

from coranking.backends.base import BackendFailure, RerankerBackend
from coranking.core import Passage, Query, Ranking


class ScriptedBackend(RerankerBackend):
    """Returns recorded permutations in per-query call order.

    Records are the JSONL window-trace dicts written during a run. When
    ``stage`` is given, only records tagged with that stage are replayed.
    """

    name = "scripted"

    def __init__(self, records: Iterable[dict], stage: str | None = None, max_window: int = 100) -> None:
        self.stage = stage
        self.max_window = max_window
        self._queues: dict[str, deque[tuple[int, ...]]] = defaultdict(deque)
        self._lock = threading.Lock()
        for record in records:
            if stage is not None and record.get("stage") != stage:
                continue
            self._queues[str(record["query_id"])].append(tuple(record["perm"]))

    @classmethod
    def from_jsonl(cls, path: str | Path, stage: str | None = None) -> ScriptedBackend:
        with open(path, encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        return cls(records, stage=stage)

    def rerank(self, query: Query, passages: Sequence[Passage]) -> Ranking:
        self.check_window(passages)
        with self._lock:
            queue = self._queues.get(query.id)
            if not queue:
                raise BackendFailure("no recorded window left", kind="scripted", query_id=query.id)
            perm = queue.popleft()
        if len(perm) != len(passages):
            raise BackendFailure(
                f"recorded window has {len(perm)} ids, asked for {len(passages)}",
                kind="scripted",
                query_id=query.id,
            )
        return Ranking(perm)

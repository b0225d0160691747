"""Sliding-window schedules and their sequential execution.

The window moves from the tail of the list to the head. Each window sees
the list as left by the previous one, so windows of one pass can never run
in parallel.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from coranking.core import CandidateList, InvalidParams, Ranking, apply_ranking

if TYPE_CHECKING:
    from coranking.backends.base import BackendFailure, RerankerBackend

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowSchedule:
    n: int
    window: int
    step: int
    windows: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)

    @property
    def starts(self) -> list[int]:
        return [start for start, _ in self.windows]


def schedule(n: int, window: int = 20, step: int = 10) -> WindowSchedule:
    """Half-open ``(start, end)`` windows from the tail to the head.

    The last window is clamped to start at 0 so the head is always covered.

    Raises:
        InvalidParams: if ``step`` is outside ``[1, window]`` or ``n < 1``.
    """
    if n < 1:
        raise InvalidParams(f"list size must be >= 1, got {n}")
    if window < 1:
        raise InvalidParams(f"window must be >= 1, got {window}")
    if step < 1 or step > window:
        raise InvalidParams(f"step must be in [1, {window}], got {step}")
    if n <= window:
        return WindowSchedule(n, window, step, ((0, n),))
    windows = []
    start = n - window
    while start > 0:
        windows.append((start, start + window))
        start -= step
    windows.append((0, window))
    return WindowSchedule(n, window, step, tuple(windows))


@dataclass(frozen=True)
class WindowTrace:
    """One executed window, serialisable as a JSONL audit record."""

    query_id: str
    window_start: int
    window_end: int
    perm: tuple[int, ...]
    latency_ms: float
    stage: str | None = None
    failed: bool = False

    def to_record(self) -> dict:
        record = {
            "query_id": self.query_id,
            "window_start": self.window_start,
            "window_end": self.window_end,
            "perm": list(self.perm),
            "latency_ms": round(self.latency_ms, 3),
        }
        if self.stage is not None:
            record["stage"] = self.stage
        if self.failed:
            record["failed"] = True
        return record


@dataclass
class PassResult:
    candidates: CandidateList
    calls: int
    trace: list[WindowTrace] = field(default_factory=list)
    error: BackendFailure | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_window(
    candidates: CandidateList,
    backend: RerankerBackend,
    start: int,
    end: int,
    stage: str | None = None,
) -> tuple[CandidateList, WindowTrace]:
    """Rerank ``candidates[start:end]`` with one backend call; the rest stays put."""
    passages = list(candidates.passages)
    window = passages[start:end]
    t0 = time.perf_counter()
    ranking = backend.rerank(candidates.query, window)
    elapsed = (time.perf_counter() - t0) * 1000.0
    passages[start:end] = apply_ranking(window, ranking)
    trace = WindowTrace(candidates.query.id, start, end, ranking.perm, elapsed, stage)
    return candidates.with_passages(passages), trace


def run_pass(
    candidates: CandidateList,
    backend: RerankerBackend,
    window: int = 20,
    step: int = 10,
    lenient: bool = False,
    stage: str | None = None,
) -> PassResult:
    """Run one full sliding-window pass of ``backend`` over ``candidates``.

    A backend failure stops the pass and is returned in ``error`` together
    with the partially reordered list. With ``lenient=True`` the failed
    window keeps its order instead and the pass continues.
    """
    from coranking.backends.base import BackendFailure

    sched = schedule(len(candidates), window, step)
    current = candidates
    result = PassResult(current, calls=0)
    for start, end in sched:
        result.calls += 1
        try:
            current, trace = run_window(current, backend, start, end, stage)
        except BackendFailure as exc:
            exc = exc.with_context(query_id=candidates.query.id, stage=stage)
            if not lenient:
                result.candidates = current
                result.error = exc
                return result
            logger.warning("window [%d, %d) failed, keeping order: %s", start, end, exc)
            trace = WindowTrace(
                candidates.query.id,
                start,
                end,
                Ranking.identity(end - start).perm,
                0.0,
                stage,
                failed=True,
            )
        result.trace.append(trace)
    result.candidates = current
    return result

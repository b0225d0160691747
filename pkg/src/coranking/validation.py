"""Input coercion helpers for the estimator API."""

from __future__ import annotations

from typing import Any, Iterable, Mapping

from coranking.core import CandidateList, InvalidParams, Qrels


def check_candidates(X: Any) -> list[CandidateList]:
    """Coerce ``X`` to a non-empty list of candidate lists.

    Accepts a single :class:`CandidateList` or any iterable of them.
    """
    if isinstance(X, CandidateList):
        return [X]
    try:
        items = list(X)
    except TypeError:
        raise TypeError(f"expected CandidateList or an iterable of them, got {type(X).__name__}")
    for i, item in enumerate(items):
        if not isinstance(item, CandidateList):
            raise TypeError(f"element {i} is {type(item).__name__}, expected CandidateList")
        if len(item) < 1:
            raise ValueError(f"candidate list for query {item.query.id!r} is empty")
    if not items:
        raise ValueError("no candidate lists given")
    return items


def check_qrels(y: Any) -> Qrels:
    """Accept :class:`Qrels`, a nested ``{qid: {pid: grade}}`` mapping, or triples."""
    if isinstance(y, Qrels):
        return y
    if isinstance(y, Mapping):
        return Qrels({str(q): {str(p): int(g) for p, g in docs.items()} for q, docs in y.items()})
    if isinstance(y, Iterable):
        return Qrels.from_triples(y)
    raise TypeError(f"cannot interpret {type(y).__name__} as qrels")


def check_window_params(window: int, step: int, top_k: int | None = None) -> None:
    if not isinstance(window, int) or window < 1:
        raise InvalidParams(f"window must be a positive int, got {window!r}")
    if not isinstance(step, int) or not 1 <= step <= window:
        raise InvalidParams(f"step must be an int in [1, {window}], got {step!r}")
    if top_k is not None:
        if not isinstance(top_k, int) or top_k < 1:
            raise InvalidParams(f"top_k must be a positive int, got {top_k!r}")
        if top_k > window:
            raise InvalidParams(f"top_k={top_k} exceeds window={window}")

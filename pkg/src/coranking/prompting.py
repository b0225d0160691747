"""Listwise prompt rendering and tolerant parsing of ranked-id output."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from coranking.core import CorankingError, Passage, Query, Ranking, validate_ranking

_PLACEHOLDER = re.compile(r"\{(num|query|passages)\}")
_BRACKETED_ID = re.compile(r"\[(\d+)\]")

DEFAULT_MAX_WORDS = 300


class WindowTooLarge(CorankingError, ValueError):
    pass


def _load_default_template() -> str:
    return resources.files("coranking").joinpath("templates/listwise.txt").read_text("utf-8")


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt with ``{num}``, ``{query}`` and ``{passages}`` placeholders.

    ``{passages}`` expands to one ``[i] text`` line per passage.
    """

    text: str = field(default_factory=_load_default_template)
    passage_format: str = "[{i}] {passage}"
    passage_separator: str = "\n"
    max_passages: int = 100
    max_words: int | None = DEFAULT_MAX_WORDS

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> PromptTemplate:
        text = Path(path).read_text("utf-8")
        if "{passages}" not in text:
            raise ValueError(f"{path}: template lacks a {{passages}} marker")
        return cls(text=text, **kwargs)


DEFAULT_TEMPLATE = PromptTemplate()


def clean_passage(text: str, max_words: int | None = DEFAULT_MAX_WORDS) -> str:
    """Collapse whitespace (one identifier line per passage) and truncate."""
    words = text.split()
    if max_words is not None:
        words = words[:max_words]
    return " ".join(words)


def render_prompt(
    query: Query, passages: Sequence[Passage], template: PromptTemplate = DEFAULT_TEMPLATE
) -> str:
    """Render the single user message for one window.

    Substitution is one regex pass, so braces inside query or passage text
    are never re-expanded.
    """
    n = len(passages)
    if n < 1:
        raise ValueError("cannot render a prompt without passages")
    if n > template.max_passages:
        raise WindowTooLarge(f"{n} passages exceed the template maximum {template.max_passages}")
    block = template.passage_separator.join(
        template.passage_format.format(i=i, passage=clean_passage(p.text, template.max_words))
        for i, p in enumerate(passages, start=1)
    )
    values = {"num": str(n), "query": query.text, "passages": block}
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template.text)


def training_input(query: Query, passages: Sequence[Passage], max_words: int | None = None) -> str:
    """Concatenate the query and ``[i]``-tagged passages into one training input."""
    parts = [query.text]
    for i, p in enumerate(passages, start=1):
        parts.append(f"[{i}]")
        parts.append(clean_passage(p.text, max_words))
    return " ".join(parts)


@dataclass(frozen=True)
class ParseReport:
    raw: str
    extracted: tuple[int, ...]
    duplicates: int
    out_of_range: int
    missing: int
    ranking: Ranking
    fallback: bool = False

    @property
    def repaired(self) -> bool:
        return bool(self.duplicates or self.out_of_range or self.missing)


def parse_ranking(raw: str | bytes, n: int) -> ParseReport:
    """Extract a permutation of ``1..n`` from free-form model output.

    Bracketed integers are read left to right, so both ``[4] > [2]`` and
    ``[4] [2]`` work. Repeats keep their first occurrence, ids outside
    ``[1, n]`` are dropped, and missing ids are appended in ascending order.
    Output without any usable id falls back to the identity.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", errors="replace")
    extracted = tuple(int(m) for m in _BRACKETED_ID.findall(raw))
    seen: set[int] = set()
    order: list[int] = []
    duplicates = out_of_range = 0
    for v in extracted:
        if v < 1 or v > n:
            out_of_range += 1
        elif v in seen:
            duplicates += 1
        else:
            seen.add(v)
            order.append(v)
    missing = [v for v in range(1, n + 1) if v not in seen]
    order.extend(missing)
    assert validate_ranking(order, n) is None
    return ParseReport(
        raw=raw,
        extracted=extracted,
        duplicates=duplicates,
        out_of_range=out_of_range,
        missing=len(missing),
        ranking=Ranking(tuple(order)),
        fallback=not seen and n > 0,
    )


def format_ranking(ranking: Ranking, sep: str = " > ") -> str:
    return ranking.to_string(sep)

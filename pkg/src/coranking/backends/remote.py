"""Backend for OpenAI-compatible ``/chat/completions`` endpoints."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import httpx

from coranking.backends.base import BackendFailure, RerankerBackend
from coranking.core import Passage, Query, Ranking
from coranking.prompting import DEFAULT_TEMPLATE, PromptTemplate, parse_ranking, render_prompt

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class EndpointConfig:
    """Connection and decoding settings for one model endpoint.

    ``temperature`` is used for plain reranking (one request per window).
    ``sampling_temperature`` is used by :meth:`RemoteBackend.sample_rankings`;
    sampling is disabled when it is 0.
    """

    base_url: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    sampling_temperature: float = 0.7
    max_tokens: int = 512
    timeout: float = 60.0
    max_attempts: int = 3
    backoff: float = 1.0
    max_in_flight: int = 4
    max_window: int = 100

    def __post_init__(self) -> None:
        if self.temperature < 0 or self.sampling_temperature < 0:
            raise ValueError("temperatures must be >= 0")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


class RemoteBackend(RerankerBackend):
    """Renders the listwise prompt, calls the endpoint, repairs the answer.

    Requests are bounded to ``max_in_flight`` at a time per backend and
    retried with exponential backoff on transport errors, timeouts, 429 and
    5xx responses.
    """

    def __init__(
        self,
        config: EndpointConfig,
        template: PromptTemplate = DEFAULT_TEMPLATE,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        name: str | None = None,
    ) -> None:
        self.config = config
        self.template = template
        self.name = name or config.model
        self.max_window = min(config.max_window, template.max_passages)
        self._client = client or httpx.Client(timeout=config.timeout)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._lock = threading.Lock()
        self.requests = 0
        self.repairs = 0

    @property
    def supports_sampling(self) -> bool:
        return self.config.sampling_temperature > 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "").strip()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: str, temperature: float, seed: int | None = None) -> str:
        """Send one user message and return the text of the first choice."""
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": self.config.max_tokens,
        }
        if seed is not None:
            payload["seed"] = seed
        last: BackendFailure | None = None
        for attempt in range(1, self.config.max_attempts + 1):
            if attempt > 1:
                self._sleep(self.config.backoff * 2 ** (attempt - 2))
            with self._slots:
                with self._lock:
                    self.requests += 1
                try:
                    resp = self._client.post(
                        url, json=payload, headers=self._headers(), timeout=self.config.timeout
                    )
                except httpx.TimeoutException as exc:
                    last = BackendFailure(f"timed out: {exc}", kind="timeout")
                    continue
                except httpx.TransportError as exc:
                    last = BackendFailure(f"transport error: {exc}", kind="transport")
                    continue
            if resp.status_code in RETRYABLE_STATUS:
                last = BackendFailure(f"HTTP {resp.status_code}", kind="transport", raw=resp.text)
                logger.info("attempt %d got HTTP %d, retrying", attempt, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise BackendFailure(f"HTTP {resp.status_code}", kind="transport", raw=resp.text)
            try:
                return resp.json()["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError):
                last = BackendFailure("malformed response envelope", kind="transport", raw=resp.text)
        assert last is not None
        raise BackendFailure(
            f"gave up after {self.config.max_attempts} attempts ({last.message})",
            kind="timeout" if last.kind == "timeout" else "exhausted",
            raw=last.raw,
        )

    def _ask(self, query: Query, passages: Sequence[Passage], temperature: float, seed: int | None) -> Ranking:
        self.check_window(passages)
        prompt = render_prompt(query, passages, self.template)
        try:
            text = self.complete(prompt, temperature, seed)
        except BackendFailure as exc:
            raise exc.with_context(query_id=query.id)
        report = parse_ranking(text, len(passages))
        if report.repaired or report.fallback:
            with self._lock:
                self.repairs += 1
            logger.debug(
                "repaired output for %s: dup=%d oor=%d missing=%d fallback=%s",
                query.id,
                report.duplicates,
                report.out_of_range,
                report.missing,
                report.fallback,
            )
        return report.ranking

    def rerank(self, query: Query, passages: Sequence[Passage]) -> Ranking:
        return self._ask(query, passages, self.config.temperature, None)

    def _sample(self, query: Query, passages: Sequence[Passage], seed: int, index: int) -> Ranking:
        return self._ask(query, passages, self.config.sampling_temperature, seed + index)

"""Chat-completion backends and cached, bounded-concurrency batch execution.

Two backends share one interface: an OpenAI-compatible HTTP client with
retry/backoff, and a deterministic offline mock that replays (optionally
corrupted) gold codes for testing the whole pipeline without a network.
"""

from __future__ import annotations

import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import requests

from .cache import CacheEntry, ResponseCache, utc_now_iso
from .ingest import PurchaseRecord
from .prompts import Message, PromptTemplate, prompt_digest, render
from .taxonomy import LEVELS, HierarchyLevel, UnspscCode, level_of

logger = logging.getLogger(__name__)

DEFAULT_MAX_OUTPUT_TOKENS = 64
DEFAULT_TIMEOUT_S = 60.0
DEFAULT_MAX_ATTEMPTS = 5
DEFAULT_BACKOFF_BASE_S = 1.0

REFUSAL_SENTENCE = (
    "There is insufficient information to determine an appropriate UNSPSC code."
)


class LlmError(Exception):
    pass


class AuthFailed(LlmError):
    pass


class RateLimited(LlmError):
    pass


class Timeout(LlmError):
    pass


class TransportError(LlmError):
    pass


class BackendError(LlmError):
    pass


class UnknownRecordId(KeyError):
    pass


@dataclass(frozen=True)
class LlmRequest:
    model: str
    messages: tuple[Message, ...]
    temperature: float
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be nonempty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    finish_reason: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: float
    backend_id: str


class Backend(Protocol):
    backend_id: str

    def complete(self, request: LlmRequest, record_id: str | None = None) -> LlmResponse: ...


@dataclass(frozen=True)
class MockOracleConfig:
    """Gold lookup plus per-level corruption and refusal probabilities."""

    gold: Mapping[str, UnspscCode]
    corruption_rate_per_level: Mapping[HierarchyLevel, float] = field(default_factory=dict)
    refusal_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        rates = [self.refusal_rate, *self.corruption_rate_per_level.values()]
        if any(not 0.0 <= rate <= 1.0 for rate in rates):
            raise ValueError("probabilities must be in [0, 1]")


def _different_pair(rng: random.Random, current: str) -> str:
    # Nonzero replacement keeps the emitted code structurally valid.
    candidates = [f"{value:02d}" for value in range(1, 100)]
    if current in candidates:
        candidates.remove(current)
    return rng.choice(candidates)


def mock_complete(record_id: str, config: MockOracleConfig) -> str:
    """Deterministic reply for ``record_id``: refusal or (corrupted) gold code.

    The RNG is derived from (seed, record_id) alone, so output is identical
    across runs, orderings, and parallelism. Corruption only touches digit
    pairs that are significant in the gold code, replaces a pair with a
    different nonzero pair, and leaves coarser pairs untouched.
    """
    try:
        gold = config.gold[record_id]
    except KeyError:
        raise UnknownRecordId(record_id) from None
    rng = random.Random(f"{config.seed}:{record_id}")
    if rng.random() < config.refusal_rate:
        return REFUSAL_SENTENCE
    pairs = list(gold.pairs())
    deepest = level_of(gold)
    for index, level in enumerate(LEVELS):
        if level > deepest:
            break
        draw = rng.random()
        if draw < config.corruption_rate_per_level.get(level, 0.0):
            pairs[index] = _different_pair(rng, pairs[index])
    return "".join(pairs)


class MockBackend:
    """Offline backend replaying the oracle; byte-deterministic."""

    backend_id = "mock"

    def __init__(self, config: MockOracleConfig):
        self.config = config

    def complete(self, request: LlmRequest, record_id: str | None = None) -> LlmResponse:
        if record_id is None:
            raise UnknownRecordId("mock backend requires a record_id")
        text = mock_complete(record_id, self.config)
        prompt_chars = sum(len(m.content) for m in request.messages)
        return LlmResponse(
            text=text,
            finish_reason="stop",
            prompt_tokens=prompt_chars // 4,
            completion_tokens=max(1, len(text) // 4),
            latency_ms=0.0,
            backend_id=self.backend_id,
        )


class OpenAiBackend:
    """OpenAI-compatible chat-completions client.

    Up to ``max_attempts`` tries with full-jitter exponential backoff;
    only throttle (429) and 5xx statuses are retried, plus transport-level
    timeouts and connection failures. Auth rejections fail immediately.
    Azure-style endpoints work by setting ``auth_header`` to e.g. ``api-key``.
    """

    backend_id = "openai"

    def __init__(
        self,
        endpoint: str,
        api_key: str,
        auth_header: str = "Authorization",
        timeout_s: float = DEFAULT_TIMEOUT_S,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base_s: float = DEFAULT_BACKOFF_BASE_S,
        session: requests.Session | None = None,
        sleep=time.sleep,
    ):
        if not endpoint:
            raise ValueError("endpoint is required")
        if not api_key:
            raise ValueError("api key is required")
        self.endpoint = endpoint
        self.api_key = api_key
        self.auth_header = auth_header
        self.timeout_s = timeout_s
        self.max_attempts = max_attempts
        self.backoff_base_s = backoff_base_s
        self._session = session or requests.Session()
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        if self.auth_header.lower() == "authorization":
            return {"Authorization": f"Bearer {self.api_key}"}
        return {self.auth_header: self.api_key}

    def complete(self, request: LlmRequest, record_id: str | None = None) -> LlmResponse:
        body = {
            "model": request.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        last_error: LlmError = BackendError("no attempts made")
        for attempt in range(self.max_attempts):
            if attempt:
                delay = random.uniform(0.0, self.backoff_base_s * 2 ** (attempt - 1))
                self._sleep(delay)
            started = time.monotonic()
            try:
                response = self._session.post(
                    self.endpoint, json=body, headers=self._headers(), timeout=self.timeout_s
                )
            except requests.exceptions.Timeout:
                last_error = Timeout(f"no response within {self.timeout_s}s")
                logger.warning("attempt %d timed out", attempt + 1)
                continue
            except requests.exceptions.RequestException as exc:
                last_error = TransportError(str(exc))
                logger.warning("attempt %d failed in transport: %s", attempt + 1, exc)
                continue
            latency_ms = (time.monotonic() - started) * 1000.0
            status = response.status_code
            if status in (401, 403):
                raise AuthFailed(f"credential rejected (HTTP {status})")
            if status == 429:
                last_error = RateLimited("throttled (HTTP 429)")
                logger.warning("attempt %d throttled", attempt + 1)
                continue
            if status >= 500:
                last_error = BackendError(f"server error (HTTP {status})")
                logger.warning("attempt %d got HTTP %d", attempt + 1, status)
                continue
            if status >= 400:
                raise BackendError(f"request rejected (HTTP {status}): {response.text[:200]}")
            return self._parse(response, latency_ms)
        raise last_error

    def _parse(self, response, latency_ms: float) -> LlmResponse:
        try:
            payload = response.json()
            choice = payload["choices"][0]
            text = choice["message"]["content"] or ""
            finish_reason = choice.get("finish_reason") or "stop"
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion payload: {exc}") from exc
        usage = payload.get("usage") or {}
        return LlmResponse(
            text=text,
            finish_reason=finish_reason,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=latency_ms,
            backend_id=self.backend_id,
        )


def complete(request: LlmRequest, backend: Backend, record_id: str | None = None) -> LlmResponse:
    """Run one request against the configured backend."""
    return backend.complete(request, record_id=record_id)


@dataclass(frozen=True)
class RawResult:
    """Per-record outcome of a batch; errors are data, not exceptions."""

    record_id: str
    response: LlmResponse | None = None
    error: str | None = None


def _response_from_entry(entry: CacheEntry) -> LlmResponse:
    return LlmResponse(
        text=entry.response_text,
        finish_reason=entry.finish_reason,
        prompt_tokens=entry.prompt_tokens,
        completion_tokens=entry.completion_tokens,
        latency_ms=0.0,
        backend_id=entry.backend_id,
    )


def classify_batch(
    records: Sequence[PurchaseRecord],
    template: PromptTemplate,
    temperature: float,
    model: str,
    backend: Backend,
    cache: ResponseCache | None = None,
    parallelism: int = 1,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> list[RawResult]:
    """Classify every record, consulting the cache before any backend call.

    At most ``parallelism`` requests are in flight; output order always
    matches input order; one record's failure never aborts the batch.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    prepared = []
    for record in records:
        rendered = render(template, record)
        request = LlmRequest(
            model=model,
            messages=rendered.messages,
            temperature=float(temperature),
            max_output_tokens=max_output_tokens,
        )
        key = prompt_digest(rendered, model, float(temperature))
        prepared.append((record, request, key))

    def run_one(item) -> RawResult:
        record, request, key = item
        if cache is not None:
            entry = cache.get(key)
            if entry is not None:
                return RawResult(record.record_id, response=_response_from_entry(entry))
        try:
            response = backend.complete(request, record_id=record.record_id)
        except LlmError as exc:
            logger.warning("record %s failed: %s", record.record_id, exc)
            return RawResult(record.record_id, error=f"{type(exc).__name__}: {exc}")
        if cache is not None:
            cache.put(
                CacheEntry(
                    key=key,
                    response_text=response.text,
                    finish_reason=response.finish_reason,
                    prompt_tokens=response.prompt_tokens,
                    completion_tokens=response.completion_tokens,
                    backend_id=response.backend_id,
                    created_at=utc_now_iso(),
                )
            )
        return RawResult(record.record_id, response=response)

    if parallelism == 1 or len(prepared) <= 1:
        return [run_one(item) for item in prepared]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(run_one, prepared))

"""Chat-completion providers: remote HTTP, seeded mock, and record/replay cache."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol

import httpx

from phishvote.errors import AuthFailure, CacheMiss, IoFailure, ProviderError, ProviderUnavailable
from phishvote.vote import Label

log = logging.getLogger(__name__)


class ProviderKind(enum.Enum):
    REMOTE_HTTP = "http"
    MOCK = "mock"
    REPLAY = "replay"


@dataclass(frozen=True)
class ModelId:
    name: str
    provider_kind: ProviderKind = ProviderKind.MOCK

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ChatRequest:
    model: ModelId
    prompt_text: str
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def __post_init__(self):
        if not self.prompt_text:
            raise ValueError("prompt_text must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    latency: float = 0.0  # seconds
    from_cache: bool = False


class Provider(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def prompt_hash(prompt_text: str) -> str:
    return hashlib.sha256(prompt_text.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------- mock


@dataclass(frozen=True)
class MockBehavior:
    per_class_accuracy: float = 1.0
    abstain_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("per_class_accuracy", "abstain_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def probabilities(self) -> tuple[float, float, float]:
        """(correct, abstain, wrong), normalized to sum to 1."""
        weights = (self.per_class_accuracy, self.abstain_rate, 1.0 - self.per_class_accuracy)
        total = sum(weights)
        return tuple(w / total for w in weights)


_URL_LINE = re.compile(r"^\s*(\d+)\.\s+(\S.*?)\s*$")


def _unit_draw(*parts: object) -> float:
    digest = hashlib.sha256("|".join(map(str, parts)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


class MockProvider:
    """Answers batch prompts for URLs it knows the truth of.

    Every numbered prompt line whose text is a URL in ``truths`` receives an
    answer; other lines (instructions, exemplars) are ignored. Each answer is
    drawn from a hash of ``(seed, prompt hash, url)``, so the response is a
    pure function of the behavior and the prompt.
    """

    def __init__(self, behavior: MockBehavior, truths: Mapping[str, Label]):
        self.behavior = behavior
        self.truths = dict(truths)

    def answer(self, url: str, truth: Label, phash: str) -> Label | None:
        p_correct, p_abstain, _ = self.behavior.probabilities()
        u = _unit_draw(self.behavior.seed, phash, url)
        if u < p_correct:
            return truth
        if u < p_correct + p_abstain:
            return None
        return truth.flipped()

    def complete(self, request: ChatRequest) -> ChatResponse:
        start = time.perf_counter()
        phash = prompt_hash(request.prompt_text)
        lines = []
        for raw in request.prompt_text.splitlines():
            m = _URL_LINE.match(raw)
            if m is None or m.group(2) not in self.truths:
                continue
            k, url = int(m.group(1)), m.group(2)
            label = self.answer(url, self.truths[url], phash)
            if label is None:
                lines.append(f"{k}. unsure, cannot tell")
            else:
                lines.append(f"{k}. {label.value}")
        return ChatResponse("\n".join(lines), time.perf_counter() - start, False)


# ------------------------------------------------------------------ record/replay


class ResponseCache:
    """Append-only JSON Lines store keyed by (model name, prompt hash).

    Each line: ``{model, prompt_hash, prompt_text, response_text, recorded_at}``.
    When a key was recorded more than once the latest record wins.
    """

    def __init__(self, path: str | Path, clock: Callable[[], datetime] | None = None):
        self.path = Path(path)
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._lock = threading.Lock()
        self._records: dict[tuple[str, str], dict[str, Any]] = {}
        self._torn_tail = False
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        try:
            text = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read cache {self.path}: {exc}") from exc
        self._torn_tail = bool(text) and not text.endswith("\n")
        lines = text.splitlines()
        for n, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                self._records[(rec["model"], rec["prompt_hash"])] = rec
            except (json.JSONDecodeError, KeyError, TypeError):
                # A torn final line from an interrupted run is expected; skip it.
                log.warning("skipping unreadable cache line %d in %s", n, self.path)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._records

    def records(self) -> list[dict[str, Any]]:
        return list(self._records.values())

    def get(self, model: str, prompt_text: str) -> str | None:
        rec = self._records.get((model, prompt_hash(prompt_text)))
        return None if rec is None else rec["response_text"]

    def record(self, request: ChatRequest, response: ChatResponse) -> bool:
        """Append a record; returns False when the identical pair is already stored."""
        key = (request.model.name, prompt_hash(request.prompt_text))
        with self._lock:
            existing = self._records.get(key)
            if existing is not None and existing["response_text"] == response.text:
                return False
            rec = {
                "model": key[0],
                "prompt_hash": key[1],
                "prompt_text": request.prompt_text,
                "response_text": response.text,
                "recorded_at": self._clock().isoformat(),
            }
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    if self._torn_tail:
                        fh.write("\n")
                        self._torn_tail = False
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            except OSError as exc:
                raise IoFailure(f"cannot write cache {self.path}: {exc}") from exc
            self._records[key] = rec
            return True

    def compact(self) -> int:
        """Rewrite the file with one line per key; returns the lines dropped."""
        with self._lock:
            try:
                before = sum(1 for line in self.path.read_text(encoding="utf-8").splitlines() if line.strip())
            except FileNotFoundError:
                before = 0
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            with tmp.open("w", encoding="utf-8") as fh:
                for rec in self._records.values():
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            tmp.replace(self.path)
            self._torn_tail = False
            return before - len(self._records)


def record(request: ChatRequest, response: ChatResponse, store: ResponseCache) -> None:
    store.record(request, response)


class ReplayProvider:
    """Serves recorded responses.

    With ``inner`` unset the provider is strict and raises :class:`CacheMiss`
    on unknown prompts; otherwise misses fall through to ``inner`` and are
    recorded.
    """

    def __init__(self, cache: ResponseCache, inner: Provider | None = None):
        self.cache = cache
        self.inner = inner

    def complete(self, request: ChatRequest) -> ChatResponse:
        text = self.cache.get(request.model.name, request.prompt_text)
        if text is not None:
            return ChatResponse(text, 0.0, True)
        if self.inner is None:
            raise CacheMiss(f"no recorded response for model {request.model.name!r} "
                            f"prompt {prompt_hash(request.prompt_text)[:12]}")
        response = self.inner.complete(request)
        self.cache.record(request, response)
        return response


# ------------------------------------------------------------------- remote http


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_backoff: float = 1.0  # seconds
    backoff_multiplier: float = 2.0
    max_backoff: float = 60.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")
        if self.backoff_multiplier < 1:
            raise ValueError("backoff_multiplier must be >= 1")

    def delay(self, attempt: int) -> float:
        """Sleep before retry number ``attempt`` (1-based)."""
        return min(self.base_backoff * self.backoff_multiplier ** (attempt - 1), self.max_backoff)


class TokenBucket:
    """At most ``rate`` acquisitions per second with bursts up to ``burst``."""

    def __init__(self, rate: float, burst: int = 1, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rate <= 0 or burst < 1:
            raise ValueError("rate must be positive and burst >= 1")
        self.rate = rate
        self.burst = burst
        self._clock = clock
        self._sleep = sleep
        self._tokens = float(burst)
        self._stamp = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.burst, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


class _OpenAIAdapter:
    def build(self, request: ChatRequest, model: str, api_key: str) -> tuple[dict, dict]:
        body = {
            "model": model,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        return {"Authorization": f"Bearer {api_key}"}, body

    def extract(self, payload: dict) -> str:
        return payload["choices"][0]["message"].get("content") or ""


class _GeminiAdapter:
    def build(self, request: ChatRequest, model: str, api_key: str) -> tuple[dict, dict]:
        body = {
            "contents": [{"role": "user", "parts": [{"text": request.prompt_text}]}],
            "generationConfig": {"temperature": request.temperature, "maxOutputTokens": request.max_output_tokens},
        }
        return {"x-goog-api-key": api_key}, body

    def extract(self, payload: dict) -> str:
        candidates = payload.get("candidates") or []
        if not candidates:
            return ""
        parts = candidates[0].get("content", {}).get("parts", [])
        return "".join(p.get("text", "") for p in parts)


ADAPTERS = {"openai": _OpenAIAdapter, "gemini": _GeminiAdapter}


class HttpProvider:
    """Vendor chat-completion endpoint behind retry, rate limit and a concurrency cap.

    ``adapter`` is ``"openai"`` (any OpenAI-compatible ``/chat/completions``
    endpoint) or ``"gemini"`` (``:generateContent``). The API key is read from
    the environment variable ``api_key_env`` at request time.
    """

    def __init__(self, endpoint: str, model: str, api_key_env: str, adapter: str = "openai",
                 retry: RetryPolicy | None = None, limiter: TokenBucket | None = None,
                 max_concurrency: int = 4, timeout: float = 120.0, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        if adapter not in ADAPTERS:
            raise ValueError(f"unknown adapter {adapter!r}; choose from {sorted(ADAPTERS)}")
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.adapter = ADAPTERS[adapter]()
        self.retry = retry or RetryPolicy()
        self.limiter = limiter
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep

    def _api_key(self) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise AuthFailure(f"environment variable {self.api_key_env} is not set")
        return key

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers, body = self.adapter.build(request, self.model, self._api_key())
        last_error = "no attempt made"
        with self._slots:
            for attempt in range(1, self.retry.max_attempts + 1):
                if self.limiter is not None:
                    self.limiter.acquire()
                start = time.perf_counter()
                retry_after = None
                try:
                    resp = self._client.post(self.endpoint, headers=headers, json=body)
                except (httpx.TimeoutException, httpx.TransportError) as exc:
                    last_error = f"{type(exc).__name__}: {exc}"
                else:
                    if resp.status_code in (401, 403):
                        raise AuthFailure(f"{self.endpoint} rejected credentials ({resp.status_code})")
                    if resp.status_code == 429 or resp.status_code >= 500:
                        last_error = f"HTTP {resp.status_code}"
                        retry_after = _retry_after(resp)
                    elif resp.status_code >= 400:
                        raise ProviderError(f"{self.endpoint} returned HTTP {resp.status_code}: {resp.text[:200]}")
                    else:
                        try:
                            text = self.adapter.extract(resp.json())
                        except (ValueError, KeyError, IndexError, TypeError) as exc:
                            raise ProviderError(f"unexpected response shape from {self.endpoint}: {exc}") from exc
                        return ChatResponse(text, time.perf_counter() - start, False)
                if attempt < self.retry.max_attempts:
                    delay = self.retry.delay(attempt)
                    if retry_after is not None:
                        delay = min(max(delay, retry_after), self.retry.max_backoff)
                    log.warning("%s attempt %d failed (%s); retrying in %.1fs", self.model, attempt, last_error, delay)
                    self._sleep(delay)
        raise ProviderUnavailable(f"{self.model}: giving up after {self.retry.max_attempts} attempts ({last_error})")


def _retry_after(resp: httpx.Response) -> float | None:
    value = resp.headers.get("retry-after")
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None

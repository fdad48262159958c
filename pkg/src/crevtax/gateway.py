"""Uniform access to chat-completion backends.

Three backends share a single interface: a remote HTTP endpoint speaking
the common chat-completions wire shape, a deterministic scripted mock, and
a replay mode that serves exclusively from a persistent response cache.
Every completion is cached by a request fingerprint so interrupted runs
resume without repeating work.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

logger = logging.getLogger(__name__)

API_KEY_ENV_VAR = "CREVTAX_API_KEY"

#: Default bound on concurrently in-flight remote requests.
DEFAULT_MAX_IN_FLIGHT = 4

_RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class GatewayError(Exception):
    """Base class for completion backend failures."""


class AuthMissing(GatewayError):
    """No API key was available for a remote backend."""


class ExhaustedRetries(GatewayError):
    """A remote request kept failing after every permitted retry."""


class MalformedEndpointReply(GatewayError):
    """The endpoint answered with something other than a completion."""


class CacheMiss(GatewayError):
    """A replay-only backend was asked for an uncached prompt."""


class MockScriptMiss(GatewayError):
    """A scripted mock had no entry for a prompt and no default."""


@dataclass(frozen=True)
class ModelConfig:
    """Connection and decoding parameters for a remote model."""

    endpoint_url: str
    model_id: str
    temperature: float = 0.0
    max_tokens: int = 64
    stop_sequences: tuple[str, ...] = ("$",)
    request_timeout: float = 60.0
    max_retries: int = 3

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


@dataclass(frozen=True)
class CompletionRecord:
    """One cached completion, keyed by its request fingerprint."""

    request_hash: str
    raw_response: str
    latency: float
    token_usage: dict[str, int] | None = None
    timestamp: str | None = None

    def as_dict(self) -> dict[str, object]:
        return {
            "request_hash": self.request_hash,
            "raw_response": self.raw_response,
            "latency": self.latency,
            "token_usage": self.token_usage,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CompletionRecord":
        return cls(
            request_hash=str(data["request_hash"]),
            raw_response=str(data["raw_response"]),
            latency=float(data.get("latency", 0.0)),
            token_usage=data.get("token_usage"),
            timestamp=data.get("timestamp"),
        )


def request_fingerprint(
    model_id: str,
    system_text: str,
    user_text: str,
    temperature: float,
    max_tokens: int,
    stop_sequences: tuple[str, ...],
) -> str:
    """Deterministic digest of everything that determines a completion."""
    payload = json.dumps(
        {
            "model": model_id,
            "system": system_text,
            "user": user_text,
            "temperature": temperature,
            "max_tokens": max_tokens,
            "stop": list(stop_sequences),
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class CacheStats:
    entries: int = 0
    hits: int = 0
    misses: int = 0
    total_latency: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {
            "entries": self.entries,
            "hits": self.hits,
            "misses": self.misses,
            "total_latency": self.total_latency,
        }


class ResponseCache:
    """Append-only completion cache, optionally persisted as JSON Lines.

    Safe for concurrent use; writes are serialized by a lock. With a path,
    existing records are loaded eagerly and new records are appended and
    flushed immediately so interrupted runs lose nothing.
    """

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path is not None else None
        self._records: dict[str, CompletionRecord] = {}
        self._lock = threading.Lock()
        self._stats = CacheStats()
        if self._path is not None and self._path.exists():
            with self._path.open(encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    record = CompletionRecord.from_dict(json.loads(line))
                    self._records[record.request_hash] = record
        self._stats.entries = len(self._records)

    @property
    def path(self) -> Path | None:
        return self._path

    def get(self, request_hash: str) -> CompletionRecord | None:
        with self._lock:
            record = self._records.get(request_hash)
            if record is None:
                self._stats.misses += 1
            else:
                self._stats.hits += 1
            return record

    def put(self, record: CompletionRecord) -> None:
        with self._lock:
            if record.request_hash in self._records:
                return
            self._records[record.request_hash] = record
            self._stats.entries = len(self._records)
            self._stats.total_latency += record.latency
            if self._path is not None:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with self._path.open("a", encoding="utf-8") as handle:
                    handle.write(json.dumps(record.as_dict(), sort_keys=True))
                    handle.write("\n")

    def stats(self) -> CacheStats:
        with self._lock:
            return CacheStats(**self._stats.as_dict())

    def __len__(self) -> int:
        return len(self._records)


class Backend(Protocol):
    """What the gateway needs from a completion backend."""

    model_id: str
    deterministic: bool

    def decoding_params(self) -> tuple[float, int, tuple[str, ...]]: ...

    def complete_raw(self, system_text: str, user_text: str) -> tuple[str, dict | None]: ...


class HttpBackend:
    """Remote chat-completion endpoint with retry and backoff.

    Speaks the common chat-completions request/response shape (messages in,
    ``choices[0].message.content`` out) with bearer-token auth taken from
    the ``CREVTAX_API_KEY`` environment variable. Transient failures
    (HTTP 429/5xx, timeouts, connection errors) are retried with
    exponential backoff plus jitter up to ``config.max_retries`` times.
    """

    deterministic = False

    def __init__(self, config: ModelConfig, session=None):
        self.config = config
        self.model_id = config.model_id
        self._session = session

    def decoding_params(self) -> tuple[float, int, tuple[str, ...]]:
        return (
            self.config.temperature,
            self.config.max_tokens,
            self.config.stop_sequences,
        )

    def _get_session(self):
        if self._session is None:
            import requests

            self._session = requests.Session()
        return self._session

    def complete_raw(self, system_text: str, user_text: str) -> tuple[str, dict | None]:
        import requests

        api_key = os.environ.get(API_KEY_ENV_VAR)
        if not api_key:
            raise AuthMissing(
                f"set {API_KEY_ENV_VAR} to authenticate against "
                f"{self.config.endpoint_url}"
            )
        body = {
            "model": self.config.model_id,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "stop": list(self.config.stop_sequences),
        }
        headers = {
            "Authorization": f"Bearer {api_key}",
            "Content-Type": "application/json",
        }
        session = self._get_session()
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt > 0:
                delay = 0.5 * (2 ** (attempt - 1)) + random.uniform(0, 0.25)
                logger.info(
                    "retrying request (attempt %d/%d) in %.2fs",
                    attempt + 1,
                    self.config.max_retries + 1,
                    delay,
                )
                time.sleep(delay)
            try:
                response = session.post(
                    self.config.endpoint_url,
                    json=body,
                    headers=headers,
                    timeout=self.config.request_timeout,
                )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = exc
                continue
            if response.status_code in _RETRYABLE_STATUS:
                last_error = GatewayError(
                    f"HTTP {response.status_code} from {self.config.endpoint_url}"
                )
                continue
            if response.status_code in (401, 403):
                raise AuthMissing(
                    f"endpoint rejected credentials (HTTP {response.status_code})"
                )
            if response.status_code != 200:
                raise GatewayError(
                    f"HTTP {response.status_code} from {self.config.endpoint_url}: "
                    f"{response.text[:500]}"
                )
            return self._extract(response)
        raise ExhaustedRetries(
            f"gave up after {self.config.max_retries + 1} attempts: {last_error}"
        )

    @staticmethod
    def _extract(response) -> tuple[str, dict | None]:
        try:
            data = response.json()
        except ValueError as exc:
            raise MalformedEndpointReply(f"response is not JSON: {exc}") from exc
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedEndpointReply(
                f"missing choices[0].message.content: {json.dumps(data)[:500]}"
            ) from exc
        if not isinstance(content, str):
            raise MalformedEndpointReply("completion content is not text")
        usage = data.get("usage") if isinstance(data.get("usage"), dict) else None
        return content, usage


#: Script entry: (substrings that must all appear in the user text, response).
ScriptEntry = tuple[tuple[str, ...], str]


class MockBackend:
    """Deterministic scripted backend for tests and offline runs.

    Responses are selected, in order of preference, by: a ``responder``
    callable, the first script entry whose substrings all occur in the
    user text, then the default response. Lookups must be total over the
    corpus being classified; otherwise :class:`MockScriptMiss` is raised.
    """

    deterministic = True

    def __init__(
        self,
        script: dict[str, str] | list[ScriptEntry] | None = None,
        default: str | None = None,
        responder: Callable[[str, str], str] | None = None,
        model_id: str = "mock",
    ):
        self.model_id = model_id
        self.default = default
        self.responder = responder
        self.entries: list[ScriptEntry] = []
        if isinstance(script, dict):
            # Longest keys first so the most specific entry wins.
            for key in sorted(script, key=lambda k: (-len(k), k)):
                self.entries.append(((key,), script[key]))
        elif script:
            self.entries = [(tuple(needles), response) for needles, response in script]
        self.calls = 0
        self._lock = threading.Lock()

    def decoding_params(self) -> tuple[float, int, tuple[str, ...]]:
        return (0.0, 0, ("$",))

    def complete_raw(self, system_text: str, user_text: str) -> tuple[str, dict | None]:
        with self._lock:
            self.calls += 1
        if self.responder is not None:
            return self.responder(system_text, user_text), None
        for needles, response in self.entries:
            if all(needle in user_text for needle in needles):
                return response, None
        if self.default is not None:
            return self.default, None
        raise MockScriptMiss(
            f"no script entry matches prompt starting {user_text[:80]!r}"
        )


class ReplayBackend:
    """Serves only from the cache; any uncached prompt is an error."""

    deterministic = True

    def __init__(self, model_id: str = "mock"):
        self.model_id = model_id

    def decoding_params(self) -> tuple[float, int, tuple[str, ...]]:
        return (0.0, 0, ("$",))

    def complete_raw(self, system_text: str, user_text: str) -> tuple[str, dict | None]:
        raise CacheMiss(
            f"prompt not in cache (replay mode): {user_text[:80]!r}"
        )


class LlmGateway:
    """Cache-fronted completion access shared by all workers.

    ``complete`` may be called concurrently; cache writes are serialized
    and a semaphore bounds the number of in-flight backend requests.
    """

    def __init__(
        self,
        backend: Backend,
        cache: ResponseCache | None = None,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    ):
        self.backend = backend
        self.cache = cache if cache is not None else ResponseCache()
        self._semaphore = threading.Semaphore(max_in_flight)

    @property
    def deterministic(self) -> bool:
        return self.backend.deterministic

    @property
    def model_id(self) -> str:
        return self.backend.model_id

    def fingerprint(self, system_text: str, user_text: str) -> str:
        temperature, max_tokens, stop = self.backend.decoding_params()
        return request_fingerprint(
            self.backend.model_id,
            system_text,
            user_text,
            temperature,
            max_tokens,
            stop,
        )

    def complete(self, system_text: str, user_text: str) -> str:
        """Return the completion for a prompt pair, consulting the cache.

        A cache hit never touches the backend. On a miss the backend is
        queried (with the in-flight bound applied) and the result stored.

        Raises:
            GatewayError: Whatever the backend raises; replay mode raises
                CacheMiss instead of going anywhere.
        """
        request_hash = self.fingerprint(system_text, user_text)
        record = self.cache.get(request_hash)
        if record is not None:
            return record.raw_response
        with self._semaphore:
            started = time.perf_counter()
            raw_response, token_usage = self.backend.complete_raw(
                system_text, user_text
            )
            latency = time.perf_counter() - started
        timestamp = None
        if not self.backend.deterministic:
            timestamp = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.cache.put(
            CompletionRecord(
                request_hash=request_hash,
                raw_response=raw_response,
                latency=latency,
                token_usage=token_usage,
                timestamp=timestamp,
            )
        )
        return raw_response

    def cache_stats(self) -> dict[str, float]:
        return self.cache.stats().as_dict()

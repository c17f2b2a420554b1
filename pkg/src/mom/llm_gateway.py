"""Chat-completion backends: an OpenAI-compatible HTTP client with retry and
a deterministic scripted mock used by all offline tests and golden runs."""

from __future__ import annotations

import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import httpx
import yaml

from .errors import (
    AuthError,
    BackendError,
    ConfigError,
    TransportError,
    UnmatchedRequestError,
)

API_KEY_ENV = "MOM_API_KEY"


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 1.0
    max_tokens: int = 2048
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    params: SamplingParams = SamplingParams()
    n_samples: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not self.system or not self.user:
            raise ValueError("system and user messages must be non-empty")


@dataclass(frozen=True)
class ChatSample:
    text: str
    backend_id: str
    token_logprobs: tuple | None = None
    latency_ms: int = 0

    def __post_init__(self):
        if self.token_logprobs is not None and any(lp > 0 for lp in self.token_logprobs):
            raise ValueError("token logprobs must be <= 0")


def _retrying(fn: Callable, retry_cap: int, backoff_base_s: float, rng: random.Random,
              sleep: Callable[[float], None] = time.sleep):
    """Run fn with up to retry_cap retries on TransportError, jittered
    exponential backoff between attempts. Total attempts <= 1 + retry_cap."""
    last_exc = None
    for attempt in range(1 + retry_cap):
        try:
            return fn()
        except TransportError as exc:
            last_exc = exc
            if attempt < retry_cap:
                sleep(backoff_base_s * (2 ** attempt) * (0.5 + rng.random()))
    raise last_exc


def complete(req: ChatRequest, backend) -> list:
    """Uniform entry point: delegate to the backend handle."""
    return backend.complete(req)


# ---------------------------------------------------------------------------
# Scripted mock backend
# ---------------------------------------------------------------------------

_MATCHER_PREFIXES = ("exact:", "contains:", "regex:")


@dataclass
class TraceEntry:
    matcher: str
    response: str
    repeatable: bool = False
    # injected transient failures to serve before the response (retry testing)
    fail_times: int = 0
    consumed: bool = field(default=False, init=False)

    def matches(self, user_text: str) -> bool:
        if self.matcher.startswith("exact:"):
            return user_text == self.matcher[len("exact:"):]
        if self.matcher.startswith("contains:"):
            return self.matcher[len("contains:"):] in user_text
        if self.matcher.startswith("regex:"):
            return re.search(self.matcher[len("regex:"):], user_text) is not None
        raise ConfigError(f"unknown matcher prefix in {self.matcher!r}")


class MockBackend:
    """Deterministic backend answering from an ordered trace of
    (request-matcher, response) entries. Entries are consumed in order;
    repeatable entries may serve any number of samples."""

    backend_id = "mock"

    def __init__(self, entries: Sequence[TraceEntry], retry_cap: int = 3):
        if not entries:
            raise ConfigError("mock trace must be non-empty")
        for e in entries:
            if not e.matcher.startswith(_MATCHER_PREFIXES):
                raise ConfigError(f"matcher must start with one of {_MATCHER_PREFIXES}: {e.matcher!r}")
        self._entries = list(entries)
        self._retry_cap = retry_cap
        self._lock = threading.Lock()
        self._rng = random.Random(0)

    def _next_match(self, user_text: str) -> TraceEntry:
        for entry in self._entries:
            if (entry.repeatable or not entry.consumed) and entry.matches(user_text):
                return entry
        if any(e.matches(user_text) for e in self._entries):
            raise ConfigError(f"mock trace exhausted for request: {user_text[:80]!r}")
        raise UnmatchedRequestError(user_text[:80])

    def _serve_one(self, req: ChatRequest) -> ChatSample:
        entry = self._next_match(req.user)
        if entry.fail_times > 0:
            entry.fail_times -= 1
            raise TransportError("injected transient failure")
        if not entry.repeatable:
            entry.consumed = True
        return ChatSample(text=entry.response, backend_id=self.backend_id)

    def complete(self, req: ChatRequest) -> list:
        with self._lock:
            samples = []
            for _ in range(req.n_samples):
                samples.append(
                    _retrying(lambda: self._serve_one(req), self._retry_cap,
                              backoff_base_s=0.0, rng=self._rng, sleep=lambda s: None)
                )
            return samples


def mock_from_trace(trace: Sequence, retry_cap: int = 3) -> MockBackend:
    """Build a mock from (matcher, response) pairs, dicts, or TraceEntry."""
    if not trace:
        raise ConfigError("mock trace must be non-empty")
    entries = []
    for item in trace:
        if isinstance(item, TraceEntry):
            entries.append(item)
        elif isinstance(item, dict):
            entries.append(TraceEntry(
                matcher=item["matcher"],
                response=item["response"],
                repeatable=bool(item.get("repeatable", False)),
                fail_times=int(item.get("fail_times", 0)),
            ))
        else:
            matcher, response = item
            entries.append(TraceEntry(matcher=matcher, response=response))
    return MockBackend(entries, retry_cap=retry_cap)


def mock_from_script(responses: Sequence[str], retry_cap: int = 3) -> MockBackend:
    """A mock that answers any request with the scripted texts, in order."""
    return mock_from_trace([("contains:", r) for r in responses], retry_cap=retry_cap)


def load_trace_file(path: str | Path) -> MockBackend:
    """Load a mock trace from a YAML or JSON file: a list of entry objects."""
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text)
    if not isinstance(data, list):
        raise ConfigError("trace file must contain a list of entries")
    return mock_from_trace(data)


# ---------------------------------------------------------------------------
# HTTP backend (OpenAI-compatible chat completions)
# ---------------------------------------------------------------------------


@dataclass
class HttpBackendConfig:
    url: str
    model: str
    retry_cap: int = 3
    timeout_s: float = 60.0
    backoff_base_s: float = 0.5
    api_key: str | None = None


class HttpBackend:
    """OpenAI-compatible chat-completions client with jittered exponential
    backoff on transient failures. 4xx-class semantic errors never retry."""

    def __init__(self, cfg: HttpBackendConfig, transport: httpx.BaseTransport | None = None):
        self._cfg = cfg
        self.backend_id = cfg.model
        key = cfg.api_key if cfg.api_key is not None else os.environ.get(API_KEY_ENV, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(headers=headers, timeout=cfg.timeout_s, transport=transport)
        self._rng = random.Random()

    def _post_once(self, body: dict) -> dict:
        try:
            resp = self._client.post(self._cfg.url, json=body)
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"authentication failed ({resp.status_code})")
        if 400 <= resp.status_code < 500:
            raise BackendError(resp.status_code, resp.text)
        if resp.status_code >= 500:
            raise TransportError(f"server error {resp.status_code}")
        return resp.json()

    def complete(self, req: ChatRequest) -> list:
        body = {
            "model": self._cfg.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_tokens,
            "n": req.n_samples,
            "logprobs": True,
        }
        if req.params.seed is not None:
            body["seed"] = req.params.seed
        start = time.monotonic()
        data = _retrying(lambda: self._post_once(body), self._cfg.retry_cap,
                         self._cfg.backoff_base_s, self._rng)
        latency_ms = int((time.monotonic() - start) * 1000)
        choices = data.get("choices", [])
        if len(choices) != req.n_samples:
            raise BackendError(200, f"expected {req.n_samples} choices, got {len(choices)}")
        samples = []
        for choice in choices:
            text = choice.get("message", {}).get("content")
            if not isinstance(text, str):
                raise BackendError(200, f"malformed choice: {json.dumps(choice)[:200]}")
            logprobs = None
            lp = choice.get("logprobs")
            if isinstance(lp, dict) and isinstance(lp.get("content"), list):
                logprobs = tuple(tok.get("logprob", 0.0) for tok in lp["content"])
            samples.append(ChatSample(
                text=text,
                backend_id=self.backend_id,
                token_logprobs=logprobs,
                latency_ms=latency_ms,
            ))
        return samples

"""Uniform chat-with-image interface over multiple HTTP backends.

Every provider exposes send(request) -> ChatResponse. Token counts are
taken verbatim from the provider's usage metadata, never recomputed
locally, so provider-side accounting quirks stay visible in the data.
Latency is wall-clock around the successful transport call.

Transient failures (HTTP 429/5xx, timeouts) are retried with
exponential backoff (base 1 s, factor 2, jitter +-20%); auth failures
are never retried. Consecutive transport calls through one provider
are spaced at least min_request_interval apart. The clock, sleep, and
jitter RNG are injectable so both contracts are testable without
waiting.

API keys come from environment variables only, never from config files.
"""

from __future__ import annotations

import base64
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import httpx

from .errors import (
    AuthError,
    ConfigError,
    MalformedResponseError,
    ProviderError,
    RetriesExhaustedError,
    ScriptKeyError,
    TransientProviderError,
)

PROVIDER_KINDS = ("openai-compatible", "anthropic", "gemini", "scripted")

BACKOFF_BASE_S = 1.0
BACKOFF_FACTOR = 2.0
BACKOFF_JITTER = 0.2

_DEFAULT_ENDPOINTS = {
    "openai-compatible": "https://api.openai.com/v1",
    "anthropic": "https://api.anthropic.com",
    "gemini": "https://generativelanguage.googleapis.com",
}


@dataclass(frozen=True)
class ChatRequest:
    """One chat turn: text, optional system text, optional image.

    image is (bytes, media_type). tags carry opaque routing identity
    (the scripted backend keys on tags frame_id/stage); HTTP backends
    ignore them.
    """

    user_text: str
    system_text: str | None = None
    image: tuple[bytes, str] | None = None
    max_output_tokens: int = 2048
    temperature: float | None = None
    tags: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    input_tokens: int
    output_tokens: int
    latency_s: float
    provider_metadata: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ProviderConfig:
    kind: str
    model_name: str
    endpoint: str = ""
    api_key_env: str = ""
    price_in: float = 0.0  # dollars per million input tokens
    price_out: float = 0.0  # dollars per million output tokens
    max_retries: int = 3
    min_request_interval: float = 0.0
    script_path: str = ""  # scripted kind only
    call_log_path: str = ""  # scripted kind only

    def __post_init__(self):
        if self.kind not in PROVIDER_KINDS:
            raise ConfigError(f"unknown provider kind {self.kind!r}")
        if self.price_in < 0 or self.price_out < 0:
            raise ConfigError("prices must be >= 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")


def estimate_cost(
    input_tokens: int, output_tokens: int, config: ProviderConfig
) -> float:
    """Cents for one call at the configured per-million-token prices."""
    return (
        100.0
        * (input_tokens * config.price_in + output_tokens * config.price_out)
        / 1_000_000.0
    )


def _validate_request(request: ChatRequest):
    if not request.user_text:
        raise ValueError("user_text must be non-empty")
    if request.image is not None and not request.image[0]:
        raise ValueError("image bytes must be non-empty when an image is attached")
    if request.temperature is not None and not 0.0 <= request.temperature <= 2.0:
        raise ValueError(f"temperature {request.temperature} outside [0, 2]")


def _dig(payload, path: str):
    """Walk 'a.b.0.c' through dicts/lists; raises naming the path."""
    node = payload
    for part in path.split("."):
        try:
            if isinstance(node, list):
                node = node[int(part)]
            else:
                node = node[part]
        except (KeyError, IndexError, TypeError, ValueError):
            raise MalformedResponseError(path) from None
    return node


class Provider:
    """Shared throttle/retry machinery; subclasses implement _attempt."""

    def __init__(
        self,
        config: ProviderConfig,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.config = config
        self._clock = clock
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._lock = threading.Lock()
        self._last_call: float | None = None

    def send(self, request: ChatRequest) -> ChatResponse:
        _validate_request(request)
        last_error: Exception | None = None
        attempts = self.config.max_retries + 1
        for attempt in range(attempts):
            self._throttle()
            started = self._clock()
            try:
                response = self._attempt(request)
            except TransientProviderError as exc:
                last_error = exc
                if attempt < attempts - 1:
                    self._sleep(self._backoff_delay(attempt))
                continue
            latency = self._clock() - started
            return ChatResponse(
                text=response.text,
                input_tokens=response.input_tokens,
                output_tokens=response.output_tokens,
                latency_s=latency if response.latency_s is None else response.latency_s,
                provider_metadata=response.provider_metadata,
            )
        raise RetriesExhaustedError(attempts, last_error)

    def _attempt(self, request: ChatRequest) -> "_AttemptResult":
        raise NotImplementedError

    def _throttle(self):
        interval = self.config.min_request_interval
        with self._lock:
            if interval > 0 and self._last_call is not None:
                wait = interval - (self._clock() - self._last_call)
                if wait > 0:
                    self._sleep(wait)
            self._last_call = self._clock()

    def _backoff_delay(self, attempt: int) -> float:
        jitter = 1.0 + self._rng.uniform(-BACKOFF_JITTER, BACKOFF_JITTER)
        return BACKOFF_BASE_S * (BACKOFF_FACTOR**attempt) * jitter


@dataclass(frozen=True)
class _AttemptResult:
    text: str
    input_tokens: int
    output_tokens: int
    provider_metadata: Mapping[str, str] = field(default_factory=dict)
    # None means "measure around the transport call"; the scripted
    # backend pins 0.0 so runs stay deterministic.
    latency_s: float | None = None


class HttpProvider(Provider):
    """Base for REST backends; subclasses build/parse provider payloads."""

    def __init__(self, config: ProviderConfig, transport=None, **kwargs):
        super().__init__(config, **kwargs)
        self._client = httpx.Client(transport=transport, timeout=120.0)

    def close(self):
        self._client.close()

    def _api_key(self) -> str:
        env = self.config.api_key_env
        if not env:
            raise AuthError(f"{self.config.kind} provider needs api_key_env")
        key = os.environ.get(env)
        if not key:
            raise AuthError(f"environment variable {env} is not set")
        return key

    def _endpoint(self) -> str:
        return (self.config.endpoint or _DEFAULT_ENDPOINTS[self.config.kind]).rstrip(
            "/"
        )

    def _attempt(self, request: ChatRequest) -> _AttemptResult:
        url, headers, body = self._build(request, self._api_key())
        try:
            response = self._client.post(url, headers=headers, json=body)
        except httpx.TimeoutException as exc:
            raise TransientProviderError(f"timeout: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransientProviderError(f"transport: {exc}") from exc
        if response.status_code in (401, 403):
            raise AuthError(
                f"HTTP {response.status_code} from {self.config.kind}: "
                f"{response.text[:200]}"
            )
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientProviderError(
                f"HTTP {response.status_code}: {response.text[:200]}"
            )
        if response.status_code != 200:
            raise ProviderError(
                f"HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            payload = response.json()
        except json.JSONDecodeError as exc:
            raise MalformedResponseError("body") from exc
        return self._parse(payload)

    def _build(self, request: ChatRequest, key: str):
        raise NotImplementedError

    def _parse(self, payload) -> _AttemptResult:
        raise NotImplementedError


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


class OpenAICompatibleProvider(HttpProvider):
    def _build(self, request: ChatRequest, key: str):
        content: list[dict] = [{"type": "text", "text": request.user_text}]
        if request.image is not None:
            data, media_type = request.image
            content.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:{media_type};base64,{_b64(data)}"},
                }
            )
        messages: list[dict] = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": content})
        body = {
            "model": self.config.model_name,
            "messages": messages,
            "max_tokens": request.max_output_tokens,
        }
        if request.temperature is not None:
            body["temperature"] = request.temperature
        headers = {"Authorization": f"Bearer {key}"}
        return f"{self._endpoint()}/chat/completions", headers, body

    def _parse(self, payload) -> _AttemptResult:
        text = _dig(payload, "choices.0.message.content")
        if not isinstance(text, str):
            raise MalformedResponseError("choices.0.message.content")
        return _AttemptResult(
            text=text,
            input_tokens=int(_dig(payload, "usage.prompt_tokens")),
            output_tokens=int(_dig(payload, "usage.completion_tokens")),
        )


class AnthropicProvider(HttpProvider):
    def _build(self, request: ChatRequest, key: str):
        content: list[dict] = []
        if request.image is not None:
            data, media_type = request.image
            content.append(
                {
                    "type": "image",
                    "source": {
                        "type": "base64",
                        "media_type": media_type,
                        "data": _b64(data),
                    },
                }
            )
        content.append({"type": "text", "text": request.user_text})
        body = {
            "model": self.config.model_name,
            "max_tokens": request.max_output_tokens,
            "messages": [{"role": "user", "content": content}],
        }
        if request.system_text:
            body["system"] = request.system_text
        if request.temperature is not None:
            body["temperature"] = request.temperature
        headers = {"x-api-key": key, "anthropic-version": "2023-06-01"}
        return f"{self._endpoint()}/v1/messages", headers, body

    def _parse(self, payload) -> _AttemptResult:
        blocks = _dig(payload, "content")
        if not isinstance(blocks, list):
            raise MalformedResponseError("content")
        text = "".join(
            b.get("text", "")
            for b in blocks
            if isinstance(b, dict) and b.get("type") == "text"
        )
        return _AttemptResult(
            text=text,
            input_tokens=int(_dig(payload, "usage.input_tokens")),
            output_tokens=int(_dig(payload, "usage.output_tokens")),
        )


class GeminiProvider(HttpProvider):
    def _build(self, request: ChatRequest, key: str):
        parts: list[dict] = []
        if request.image is not None:
            data, media_type = request.image
            parts.append(
                {"inline_data": {"mime_type": media_type, "data": _b64(data)}}
            )
        parts.append({"text": request.user_text})
        body: dict = {
            "contents": [{"role": "user", "parts": parts}],
            "generationConfig": {"maxOutputTokens": request.max_output_tokens},
        }
        if request.temperature is not None:
            body["generationConfig"]["temperature"] = request.temperature
        if request.system_text:
            body["systemInstruction"] = {"parts": [{"text": request.system_text}]}
        url = (
            f"{self._endpoint()}/v1beta/models/"
            f"{self.config.model_name}:generateContent"
        )
        headers = {"x-goog-api-key": key}
        return url, headers, body

    def _parse(self, payload) -> _AttemptResult:
        parts = _dig(payload, "candidates.0.content.parts")
        if not isinstance(parts, list):
            raise MalformedResponseError("candidates.0.content.parts")
        text = "".join(p.get("text", "") for p in parts if isinstance(p, dict))
        return _AttemptResult(
            text=text,
            input_tokens=int(_dig(payload, "usageMetadata.promptTokenCount")),
            output_tokens=int(_dig(payload, "usageMetadata.candidatesTokenCount")),
        )


@dataclass(frozen=True)
class ScriptEntry:
    text: str
    input_tokens: int = 0
    output_tokens: int = 0
    fail_times: int = 0  # raise a transient error this many times first


class ScriptedProvider(Provider):
    """Deterministic test double keyed by (frame_id, stage) tags.

    Calls are appended to an in-memory log and, when configured, to a
    JSONL call-log file so separate processes can audit call counts.
    """

    def __init__(
        self,
        config: ProviderConfig,
        script: Mapping[tuple[str, int], ScriptEntry] | None = None,
        **kwargs,
    ):
        super().__init__(config, **kwargs)
        if script is None:
            if not config.script_path:
                raise ConfigError("scripted provider needs script_path or a script")
            script = load_script(config.script_path)
        self._script = dict(script)
        self._failures_left = {
            key: entry.fail_times for key, entry in self._script.items()
        }
        self.calls: list[tuple[str, int]] = []
        self._log_lock = threading.Lock()

    def _attempt(self, request: ChatRequest) -> _AttemptResult:
        frame_id = request.tags.get("frame_id", "")
        stage = int(request.tags.get("stage", "0"))
        key = (frame_id, stage)
        self._record(key)
        entry = self._script.get(key)
        if entry is None:
            raise ScriptKeyError(key)
        with self._log_lock:
            should_fail = self._failures_left[key] > 0
            if should_fail:
                self._failures_left[key] -= 1
        if should_fail:
            raise TransientProviderError(f"scripted failure for {key!r}")
        return _AttemptResult(
            text=entry.text,
            input_tokens=entry.input_tokens,
            output_tokens=entry.output_tokens,
            latency_s=0.0,
        )

    def _record(self, key: tuple[str, int]):
        with self._log_lock:
            self.calls.append(key)
            if self.config.call_log_path:
                with open(self.config.call_log_path, "a", encoding="utf-8") as f:
                    f.write(json.dumps({"frame_id": key[0], "stage": key[1]}) + "\n")


def script_key(frame_id: str, stage: int) -> str:
    return f"{frame_id}:{stage}"


def load_script(path) -> dict[tuple[str, int], ScriptEntry]:
    """Script file: {"frame_id:stage": {"text": ..., "input_tokens": ...,
    "output_tokens": ..., "fail_times": ...}, ...}"""
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    script = {}
    for key, value in raw.items():
        frame_id, sep, stage = key.rpartition(":")
        if not sep or not stage.isdigit():
            raise ConfigError(f"script key {key!r} is not 'frame_id:stage'")
        script[(frame_id, int(stage))] = ScriptEntry(
            text=value["text"],
            input_tokens=int(value.get("input_tokens", 0)),
            output_tokens=int(value.get("output_tokens", 0)),
            fail_times=int(value.get("fail_times", 0)),
        )
    return script


def dump_script(script: Mapping[tuple[str, int], ScriptEntry], path):
    raw = {
        script_key(fid, stage): {
            "text": e.text,
            "input_tokens": e.input_tokens,
            "output_tokens": e.output_tokens,
            "fail_times": e.fail_times,
        }
        for (fid, stage), e in script.items()
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(raw, f, indent=2)


_PROVIDER_CLASSES = {
    "openai-compatible": OpenAICompatibleProvider,
    "anthropic": AnthropicProvider,
    "gemini": GeminiProvider,
    "scripted": ScriptedProvider,
}


def make_provider(config: ProviderConfig, **kwargs) -> Provider:
    return _PROVIDER_CLASSES[config.kind](config, **kwargs)

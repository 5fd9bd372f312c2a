"""Model-inference providers: a remote chat-completions client and a scripted mock.

Both tracks of an evaluation share one provider instance, so base-vs-RAG
differences are attributable to the pipeline rather than to the model. The
mock provider is a pure substring lookup with optional latency injection,
which keeps runner and profiler tests deterministic.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, IngestionError, ProtocolError, ProviderError

log = logging.getLogger(__name__)

ENV_API_BASE = "OMNIBENCH_API_BASE"
ENV_API_KEY = "OMNIBENCH_API_KEY"

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 256
DEFAULT_TIMEOUT_S = 120.0
MAX_RETRIES = 3  # total attempts <= 4
BACKOFF_BASE_S = 0.5
BACKOFF_CAP_S = 8.0


@dataclass(frozen=True)
class GenerationRequest:
    user_prompt: str
    system_prompt: str = ""
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = DEFAULT_TEMPERATURE
    model_id: str = ""

    def __post_init__(self):
        if not self.user_prompt:
            raise ValueError("user_prompt must be non-empty")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be nonnegative, got {self.temperature}")


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    provider_latency_hint: float | None = None


class MockProvider:
    """Deterministic scripted provider.

    The script maps prompt substrings to responses; the longest matching key
    wins (ties broken lexicographically). ``_default`` is the fallback
    response and ``_delay_ms`` injects a fixed per-call delay through the
    supplied sleeper, so fake clocks observe it.
    """

    kind = "mock"

    def __init__(self, script: dict[str, str], sleeper=None):
        self.default = script.get("_default", "")
        self.delay_ms = int(script.get("_delay_ms", 0))
        self.script = {k: v for k, v in script.items() if not k.startswith("_")}
        self.sleeper = sleeper if sleeper is not None else time.sleep
        self.call_count = 0

    @classmethod
    def from_file(cls, path: str | Path, sleeper=None) -> "MockProvider":
        path = Path(path)
        if not path.is_file():
            raise IngestionError(f"mock script not found: {path}")
        try:
            script = json.loads(path.read_text(encoding="utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise IngestionError(f"mock script {path} is not valid JSON: {exc}") from exc
        if not isinstance(script, dict):
            raise IngestionError(f"mock script {path} must be a JSON object")
        return cls(script, sleeper=sleeper)

    def describe(self) -> str:
        return f"mock:{len(self.script)}keys"

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        self.call_count += 1
        if self.delay_ms > 0:
            self.sleeper(self.delay_ms / 1000.0)
        matches = [k for k in self.script if k in req.user_prompt]
        if matches:
            best = sorted(matches, key=lambda k: (-len(k), k))[0]
            text = self.script[best]
        else:
            text = self.default
        return GenerationResponse(text=text)


class RemoteChatProvider:
    """Client for an OpenAI-compatible ``/v1/chat/completions`` endpoint.

    429/5xx/timeouts are retried with capped exponential backoff (at most 4
    total attempts); other 4xx are fatal immediately.
    """

    kind = "remote"

    def __init__(
        self,
        model: str,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        max_retries: int = MAX_RETRIES,
        sleeper=None,
    ):
        import os

        if not model:
            raise ConfigError("remote provider requires a model name")
        self.model = model
        self.base_url = (base_url or os.environ.get(ENV_API_BASE, "")).rstrip("/")
        if not self.base_url:
            raise ConfigError(f"remote provider needs a base URL (flag/config or {ENV_API_BASE})")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.sleeper = sleeper if sleeper is not None else time.sleep

    def describe(self) -> str:
        return f"remote:{self.model}@{self.base_url}"

    def _attempt(self, req: GenerationRequest) -> GenerationResponse:
        import requests

        messages = []
        if req.system_prompt:
            messages.append({"role": "system", "content": req.system_prompt})
        messages.append({"role": "user", "content": req.user_prompt})
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        started = time.monotonic()
        try:
            resp = requests.post(
                f"{self.base_url}/v1/chat/completions",
                json={
                    "model": req.model_id or self.model,
                    "messages": messages,
                    "temperature": req.temperature,
                    "max_tokens": req.max_tokens,
                },
                headers=headers,
                timeout=self.timeout_s,
            )
        except requests.Timeout as exc:
            raise ProviderError(f"chat completion timed out after {self.timeout_s}s", retryable=True) from exc
        except requests.RequestException as exc:
            raise ProviderError(f"chat completion transport failure: {exc}", retryable=True) from exc
        elapsed = time.monotonic() - started
        if resp.status_code in (401, 403):
            raise ProviderError(
                f"authentication failed (HTTP {resp.status_code}); set {ENV_API_KEY} or pass an API key",
                status=resp.status_code,
                retryable=False,
            )
        if resp.status_code != 200:
            retryable = resp.status_code == 429 or resp.status_code >= 500
            raise ProviderError(
                f"chat completion returned HTTP {resp.status_code}: {resp.text[:200]}",
                status=resp.status_code,
                retryable=retryable,
            )
        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
            usage = payload.get("usage") or {}
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed chat completion response: {exc}") from exc
        if text is None:
            text = ""
        if text == "":
            log.warning("provider returned an empty completion")
        return GenerationResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0) or 0),
            completion_tokens=int(usage.get("completion_tokens", 0) or 0),
            provider_latency_hint=elapsed,
        )

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        attempts = self.max_retries + 1
        for attempt in range(attempts):
            try:
                return self._attempt(req)
            except ProviderError as exc:
                if not exc.retryable or attempt == attempts - 1:
                    raise
                delay = min(BACKOFF_BASE_S * (2**attempt), BACKOFF_CAP_S)
                log.warning("retryable provider error (%s); retrying in %.1fs [attempt %d/%d]", exc, delay, attempt + 1, attempts)
                self.sleeper(delay)
        raise AssertionError("unreachable")

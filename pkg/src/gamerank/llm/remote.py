"""Chat-completion client for an OpenAI-compatible HTTP endpoint."""

from __future__ import annotations

import logging
import os
import time
from typing import Callable

import httpx

from .base import CompletionRequest, ProviderError

log = logging.getLogger(__name__)

API_KEY_ENV = "LLM_API_KEY"


class RemoteProvider:
    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        backoff_cap: float = 30.0,
        timeout: float = 60.0,
        sleep: Callable[[float], None] = time.sleep,
        client: httpx.Client | None = None,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.endpoint = endpoint
        self.model_name = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.timeout = timeout
        self._sleep = sleep
        self._client = client or httpx.Client(timeout=timeout)
        self.attempts_made = 0

    def _payload(self, request: CompletionRequest) -> dict:
        return {
            "model": self.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
            "seed": request.seed,
        }

    def _attempt(self, request: CompletionRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(self.endpoint, json=self._payload(request), headers=headers, timeout=self.timeout)
        except httpx.TimeoutException as exc:
            raise ProviderError("timeout", str(exc)) from None
        except httpx.HTTPError as exc:
            raise ProviderError("network", str(exc)) from None

        if resp.status_code == 429:
            raise ProviderError("rate_limited", f"HTTP 429: {resp.text[:200]}")
        if resp.status_code in (408, 504):
            raise ProviderError("timeout", f"HTTP {resp.status_code}")
        if resp.status_code >= 500:
            raise ProviderError("network", f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            # auth and request errors will not succeed on retry
            raise ProviderError("network", f"HTTP {resp.status_code}: {resp.text[:200]}", retryable=False)
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise ProviderError("malformed_response", resp.text[:200]) from None
        if not isinstance(content, str):
            raise ProviderError("malformed_response", "completion content is not text")
        return content

    def complete(self, request: CompletionRequest) -> str:
        last: ProviderError | None = None
        for attempt in range(1, self.max_attempts + 1):
            self.attempts_made += 1
            try:
                return self._attempt(request)
            except ProviderError as exc:
                if not exc.retryable:
                    raise
                last = exc
                if attempt < self.max_attempts:
                    delay = min(self.backoff_cap, self.backoff_base * 2 ** (attempt - 1))
                    log.warning("attempt %d failed (%s); retrying in %.1fs", attempt, exc, delay)
                    self._sleep(delay)
        raise ProviderError("exhausted_retries", f"{self.max_attempts} attempts; last: {last}")

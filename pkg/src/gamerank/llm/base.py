from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, TypeVar

ERROR_CLASSES = ("network", "rate_limited", "timeout", "malformed_response", "exhausted_retries")
RETRYABLE = frozenset({"network", "rate_limited", "timeout"})

DEFAULT_MAX_IN_FLIGHT = 8


class ProviderError(RuntimeError):
    def __init__(self, error_class: str, detail: str = "", retryable: bool | None = None):
        if error_class not in ERROR_CLASSES:
            raise ValueError(f"unknown provider error class {error_class!r}")
        self.error_class = error_class
        self.detail = detail
        self.retryable = error_class in RETRYABLE if retryable is None else retryable
        super().__init__(f"{error_class}: {detail}" if detail else error_class)


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_output_tokens: int = 1024
    temperature: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be nonempty")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")


class Provider(Protocol):
    model_name: str

    def complete(self, request: CompletionRequest) -> str: ...


def derive_seed(seed: int, stream: str) -> int:
    """Stable per-stream sub-seed; identical across processes and platforms."""
    digest = hashlib.sha256(f"{seed}:{stream}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


T = TypeVar("T")
R = TypeVar("R")


def bounded_map(fn: Callable[[T], R], items: Iterable[T], max_in_flight: int = DEFAULT_MAX_IN_FLIGHT) -> list[R]:
    """Apply ``fn`` with at most ``max_in_flight`` concurrent calls; results keep input order."""
    items = list(items)
    if max_in_flight <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(fn, items))

"""Aggregate in-game text and downsample it to fit a prompt token budget."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Sequence

from .data import TextElement

DEFAULT_MAX_PROMPT_TOKENS = 6000

TokenEstimator = Callable[[str], int]


def estimate_tokens(text: str) -> int:
    """Rough token count: one token per four characters, rounded up."""
    return math.ceil(len(text) / 4)


ESTIMATORS: dict[str, TokenEstimator] = {"chars4": estimate_tokens}


def register_estimator(name: str, fn: TokenEstimator) -> None:
    ESTIMATORS[name] = fn


@dataclass(frozen=True)
class TokenBudget:
    max_tokens: int = DEFAULT_MAX_PROMPT_TOKENS
    estimator: str = "chars4"

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown token estimator {self.estimator!r}")

    def estimate(self, text: str) -> int:
        return ESTIMATORS[self.estimator](text)


def aggregate(elements: Sequence[TextElement]) -> str:
    return "\n".join(e.content for e in elements)


def _truncate(element: TextElement, budget: TokenBudget) -> TextElement:
    # longest prefix whose estimate fits; estimators are assumed monotone in length
    lo, hi = 0, len(element.content)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if budget.estimate(element.content[:mid]) <= budget.max_tokens:
            lo = mid
        else:
            hi = mid - 1
    return TextElement(element.content[: max(lo, 1)], element.kind)


def sample_under_budget(
    elements: Sequence[TextElement], budget: TokenBudget, seed: int
) -> list[TextElement]:
    """Randomly keep whole elements until nothing else fits, preserving input order.

    Elements are drawn uniformly without replacement; a drawn element is kept
    when the aggregate of the kept set (in original order) still fits. If no
    element fits on its own, the first drawn element is truncated instead.
    """
    elements = list(elements)
    if budget.estimate(aggregate(elements)) <= budget.max_tokens:
        return elements

    order = list(range(len(elements)))
    random.Random(seed).shuffle(order)
    chosen: list[int] = []
    for idx in order:
        trial = sorted(chosen + [idx])
        if budget.estimate(aggregate([elements[i] for i in trial])) <= budget.max_tokens:
            chosen = trial
    if not chosen:
        return [_truncate(elements[order[0]], budget)]
    return [elements[i] for i in chosen]

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gamerank.data import TextElement
from gamerank.sampling import (
    TokenBudget,
    aggregate,
    estimate_tokens,
    register_estimator,
    sample_under_budget,
)


def test_estimate_is_ceiling_of_quarter_length():
    assert estimate_tokens("") == 0
    assert estimate_tokens("abcd") == 1
    assert estimate_tokens("abcde") == 2


def test_fitting_input_is_returned_unchanged():
    els = [TextElement("short"), TextElement("also short")]
    assert sample_under_budget(els, TokenBudget(100), seed=1) == els


def test_separator_counts_toward_budget():
    # three 15-char elements: 4 tokens alone, 8 for two ("15+1+15" = 31 chars), 12 for three
    els = [TextElement("a" * 15), TextElement("b" * 15), TextElement("c" * 15)]
    kept = sample_under_budget(els, TokenBudget(8), seed=0)
    assert len(kept) == 2
    assert estimate_tokens(aggregate(kept)) <= 8


def test_single_oversized_element_is_truncated():
    big = TextElement("x" * 1000, "background")
    out = sample_under_budget([big], TokenBudget(10), seed=0)
    assert len(out) == 1
    assert out[0].content == "x" * 40
    assert out[0].kind == "background"


def test_custom_estimator():
    register_estimator("words", lambda s: len(s.split()))
    budget = TokenBudget(3, "words")
    out = sample_under_budget([TextElement("a b"), TextElement("c d"), TextElement("e")], budget, seed=2)
    assert sum(len(e.content.split()) for e in out) <= 3


def test_unknown_estimator_rejected():
    with pytest.raises(ValueError):
        TokenBudget(10, "nope")


elements = st.lists(
    st.text(alphabet="abcdefgh ", min_size=1, max_size=60).map(TextElement), min_size=1, max_size=25
)


def _is_ordered_subsequence(sub, seq):
    it = iter(seq)
    return all(any(x == y for y in it) for x in sub)


def _truncated(out, els):
    return len(out) == 1 and out[0] not in els


@given(elements, st.integers(1, 80), st.integers(0, 2**32))
@settings(max_examples=200)
def test_sample_fits_is_ordered_subset_and_deterministic(els, max_tokens, seed):
    budget = TokenBudget(max_tokens)
    out = sample_under_budget(els, budget, seed)
    assert out == sample_under_budget(els, budget, seed)
    assert out
    assert budget.estimate(aggregate(out)) <= max_tokens
    if _truncated(out, els):
        assert any(e.content.startswith(out[0].content) for e in els)
    else:
        assert _is_ordered_subsequence(out, els)


@given(elements, st.integers(1, 80), st.integers(0, 2**32))
@settings(max_examples=200)
def test_sample_is_maximal(els, max_tokens, seed):
    """Adding back any unused element would overflow the budget."""
    budget = TokenBudget(max_tokens)
    out = sample_under_budget(els, budget, seed)
    if _truncated(out, els):
        return
    unused = list(els)
    for e in out:
        unused.remove(e)
    for extra in unused:
        assert budget.estimate(aggregate(out + [extra])) > max_tokens

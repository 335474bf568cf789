"""User play-history context and personalized ranking strategies."""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from . import prompts
from .data import Corpus, GameProfile, PlayHistory, dumps_record, read_jsonl
from .llm import CompletionRequest, Provider, ProviderError, bounded_map, derive_seed

log = logging.getLogger(__name__)

ID_PLACEHOLDER = "[a played game]"


class EmptyContextError(ValueError):
    pass


class EmptyCompletionError(RuntimeError):
    pass


@dataclass(frozen=True)
class UserStrategy:
    user_id: str
    strategy_text: str
    source_history_length: int

    def __post_init__(self):
        if not self.strategy_text.strip():
            raise ValueError("strategy text must be nonempty")


def _fmt_seconds(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{x:g}"


def build_history_context(history: PlayHistory, profiles: Mapping[str, GameProfile]) -> str:
    """One block per profiled history entry, game ids replaced by ``game_<n>``."""
    blocks = []
    for entry in history.entries:
        profile = profiles.get(entry.game_id)
        if profile is None:
            log.warning("no profile for %s in history of %s; skipped", entry.game_id, history.user_id)
            continue
        n = len(blocks) + 1
        blocks.append(
            f"game_{n}: {profile.to_json()}\n"
            f"sessions: {entry.sessions}, playtime_seconds: {_fmt_seconds(entry.playtime_seconds)}"
        )
    if not blocks:
        raise EmptyContextError(f"no profiled history entries for {history.user_id}")
    return "\n\n".join(blocks)


def build_strategy_prompt(context: str) -> str:
    return prompts.load_template(prompts.STRATEGY).render(user_play_history_str=context)


def scrub_ids(text: str, ids: Iterable[str]) -> str:
    ids = sorted({i for i in ids if i in text}, key=len, reverse=True)
    if not ids:
        return text
    pattern = re.compile(r"(?<![\w-])(" + "|".join(map(re.escape, ids)) + r")(?![\w-])")
    return pattern.sub(ID_PLACEHOLDER, text)


def generate_strategy(
    history: PlayHistory,
    profiles: Mapping[str, GameProfile],
    provider: Provider,
    seed: int = 0,
    forbidden_ids: Iterable[str] = (),
) -> UserStrategy:
    context = build_history_context(history, profiles)
    raw = provider.complete(
        CompletionRequest(build_strategy_prompt(context), seed=derive_seed(seed, f"strategy:{history.user_id}"))
    )
    text = scrub_ids(raw, {e.game_id for e in history.entries} | set(forbidden_ids)).strip()
    if not text:
        raise EmptyCompletionError(f"empty strategy completion for {history.user_id}")
    return UserStrategy(history.user_id, text, history.history_length)


def context_fingerprint(context: str) -> str:
    return hashlib.sha256(context.encode("utf-8")).hexdigest()


class StrategyStore:
    """Line-delimited cache of strategies keyed by (user id, context fingerprint)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[tuple[str, str], str] = {}
        if self.path.exists():
            for _, rec in read_jsonl(self.path):
                self._entries[(rec["user_id"], rec["fingerprint"])] = rec["strategy_text"]

    def get(self, user_id: str, fingerprint: str) -> str | None:
        return self._entries.get((user_id, fingerprint))

    def latest(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for (user, _), text in self._entries.items():
            out[user] = text
        return out

    def append(self, records: list[dict]) -> None:
        if not records:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            for rec in records:
                fh.write(dumps_record(rec) + "\n")
                self._entries[(rec["user_id"], rec["fingerprint"])] = rec["strategy_text"]


@dataclass
class StrategyBatchResult:
    strategies: dict[str, UserStrategy]
    skipped: list[str]
    failures: dict[str, str]
    provider_calls: int = 0
    provider_failures: set[str] = field(default_factory=set)


def strategize_corpus(
    corpus: Corpus,
    profiles: Mapping[str, GameProfile],
    provider: Provider,
    store: StrategyStore | None = None,
    seed: int = 0,
    max_in_flight: int = 8,
) -> StrategyBatchResult:
    """Strategies for every user with a profiled history; empty histories are skipped."""
    result = StrategyBatchResult({}, [], {})
    all_ids = set(corpus.games)
    todo = []
    for user in corpus.users:
        history = corpus.history(user)
        try:
            context = build_history_context(history, profiles)
        except EmptyContextError:
            result.skipped.append(user)
            continue
        fp = context_fingerprint(context)
        cached = store.get(user, fp) if store is not None else None
        if cached is not None:
            result.strategies[user] = UserStrategy(user, cached, history.history_length)
        else:
            todo.append((user, fp))

    def work(item):
        user, _ = item
        try:
            return generate_strategy(corpus.history(user), profiles, provider, seed, all_ids)
        except (ProviderError, EmptyCompletionError) as exc:
            return exc

    outcomes = bounded_map(work, todo, max_in_flight)
    result.provider_calls = len(todo)
    records = []
    for (user, fp), out in zip(todo, outcomes):
        if isinstance(out, UserStrategy):
            result.strategies[user] = out
            records.append({"user_id": user, "fingerprint": fp, "strategy_text": out.strategy_text})
        else:
            result.failures[user] = str(out)
            if isinstance(out, ProviderError):
                result.provider_failures.add(user)
            log.warning("strategy failed for %s: %s", user, out)
    if store is not None:
        store.append(records)
    return result

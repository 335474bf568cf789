"""Game profile prompts, strict-but-tolerant JSON parsing, and the cached batch driver."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from . import prompts
from .data import PROFILE_KEYS, Corpus, GameProfile, GameRecord, dumps_record, read_jsonl
from .llm import CompletionRequest, Provider, ProviderError, bounded_map, derive_seed
from .sampling import TokenBudget, aggregate, sample_under_budget

log = logging.getLogger(__name__)

KEY_ALIASES = {"suitabl_for": "suitable_for"}
DEFAULT_FAILURE_THRESHOLD = 0.05


class ProfileParseError(ValueError):
    """``kind`` is ``parse_failure`` (no JSON object) or ``schema_failure``."""

    def __init__(self, kind: str, detail: str, keys: Iterable[str] = ()):
        self.kind = kind
        self.detail = detail
        self.keys = tuple(keys)
        super().__init__(f"{kind}: {detail}")


class ProfileGenerationExhausted(RuntimeError):
    def __init__(self, game_id: str, attempts: int, last: Exception):
        self.game_id = game_id
        self.attempts = attempts
        self.last = last
        super().__init__(f"{game_id}: no valid profile after {attempts} attempts ({last})")


class ProfileBatchError(RuntimeError):
    def __init__(self, failures: dict[str, str], total: int, threshold: float, provider_failures: Iterable[str] = ()):
        self.failures = failures
        self.total = total
        self.threshold = threshold
        # games whose last failure came from the provider rather than the completion text
        self.provider_failures = set(provider_failures)
        ids = ", ".join(sorted(failures))
        super().__init__(
            f"{len(failures)}/{total} games failed profiling (threshold {threshold:.0%}): {ids}"
        )


def build_profile_prompt(game: GameRecord, sampled_text: str) -> str:
    tpl = prompts.load_template(prompts.PROFILE)
    return tpl.render(in_game_text=sampled_text, game_language=game.declared_language)


def extract_json_object(raw: str) -> dict | None:
    """First balanced JSON object in ``raw``, skipping prose and code fences."""
    decoder = json.JSONDecoder()
    start = raw.find("{")
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(raw, start)
        except (ValueError, RecursionError):
            obj = None
        if isinstance(obj, dict):
            return obj
        start = raw.find("{", start + 1)
    return None


def parse_profile(raw: str) -> GameProfile:
    obj = extract_json_object(raw)
    if obj is None:
        raise ProfileParseError("parse_failure", "no JSON object found")
    for alias, key in KEY_ALIASES.items():
        if key not in obj and alias in obj:
            obj[key] = obj[alias]
    bad = [k for k in PROFILE_KEYS if not isinstance(obj.get(k), str) or not obj[k].strip()]
    if bad:
        raise ProfileParseError("schema_failure", "missing or empty keys: " + ", ".join(bad), bad)
    return GameProfile(**{k: obj[k] for k in PROFILE_KEYS})


def text_fingerprint(game: GameRecord) -> str:
    return hashlib.sha256(aggregate(game.in_game_text).encode("utf-8")).hexdigest()


@dataclass
class ProfileResult:
    game_id: str
    profile: GameProfile
    attempts: int


def generate_profile(
    game: GameRecord,
    provider: Provider,
    budget: TokenBudget | None = None,
    seed: int = 0,
    retry_cap: int = 3,
) -> ProfileResult:
    """Sample, prompt, complete and parse; retry with the next seed on parse failures."""
    if retry_cap < 1:
        raise ValueError("retry_cap must be >= 1")
    budget = budget or TokenBudget()
    sampled = sample_under_budget(game.in_game_text, budget, derive_seed(seed, f"sampling:{game.id}"))
    prompt = build_profile_prompt(game, aggregate(sampled))
    call_seed = derive_seed(seed, f"profile:{game.id}")
    last: Exception | None = None
    for attempt in range(retry_cap):
        raw = provider.complete(CompletionRequest(prompt, seed=call_seed + attempt))
        try:
            return ProfileResult(game.id, parse_profile(raw), attempt + 1)
        except ProfileParseError as exc:
            log.debug("profile attempt %d for %s failed: %s", attempt + 1, game.id, exc)
            last = exc
    raise ProfileGenerationExhausted(game.id, retry_cap, last)


# --- store ---------------------------------------------------------------------


def _created_at(provider: Provider) -> str:
    # mock runs stay byte-reproducible
    if provider.model_name.startswith("mock"):
        return "1970-01-01T00:00:00Z"
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class ProfileStore:
    """Append-only line-delimited profile cache keyed by (game id, text fingerprint)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[tuple[str, str], GameProfile] = {}
        if self.path.exists():
            for _, rec in read_jsonl(self.path):
                self._entries[(rec["game_id"], rec["fingerprint"])] = GameProfile(**rec["profile"])

    def get(self, game_id: str, fingerprint: str) -> GameProfile | None:
        return self._entries.get((game_id, fingerprint))

    def __len__(self) -> int:
        return len(self._entries)

    def append(self, records: list[dict]) -> None:
        if not records:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            for rec in records:
                fh.write(dumps_record(rec) + "\n")
                self._entries[(rec["game_id"], rec["fingerprint"])] = GameProfile(**rec["profile"])


def games_to_profile(corpus: Corpus, k: int = 30) -> list[str]:
    """Every game in a history or a top-k ranking slice, in first-seen order over sorted users."""
    seen: dict[str, None] = {}
    for user in corpus.users:
        for e in corpus.history(user).entries:
            seen.setdefault(e.game_id)
        ranking = corpus.rankings.get(user)
        if ranking is not None:
            for gid in ranking.top_k(k):
                seen.setdefault(gid)
    return list(seen)


@dataclass
class ProfileBatchResult:
    profiles: dict[str, GameProfile]
    failures: dict[str, str] = field(default_factory=dict)
    provider_calls: int = 0
    cache_hits: int = 0
    provider_failures: set[str] = field(default_factory=set)


def profile_corpus(
    corpus: Corpus,
    provider: Provider,
    store: ProfileStore | None = None,
    k: int = 30,
    budget: TokenBudget | None = None,
    seed: int = 0,
    retry_cap: int = 3,
    failure_threshold: float = DEFAULT_FAILURE_THRESHOLD,
    max_in_flight: int = 8,
    game_ids: Iterable[str] | None = None,
) -> ProfileBatchResult:
    ids = list(game_ids) if game_ids is not None else games_to_profile(corpus, k)
    result = ProfileBatchResult(profiles={})
    todo = []
    for gid in ids:
        fp = text_fingerprint(corpus.games[gid])
        cached = store.get(gid, fp) if store is not None else None
        if cached is not None:
            result.profiles[gid] = cached
            result.cache_hits += 1
        else:
            todo.append((gid, fp))

    def work(item):
        gid, _ = item
        try:
            return generate_profile(corpus.games[gid], provider, budget, seed, retry_cap)
        except (ProfileGenerationExhausted, ProviderError) as exc:
            return exc

    outcomes = bounded_map(work, todo, max_in_flight)
    new_records = []
    for (gid, fp), out in zip(todo, outcomes):
        if isinstance(out, ProfileResult):
            result.provider_calls += out.attempts
            result.profiles[gid] = out.profile
            new_records.append(
                {
                    "game_id": gid,
                    "fingerprint": fp,
                    "profile": out.profile.to_dict(),
                    "provider_model": provider.model_name,
                    "created_at": _created_at(provider),
                }
            )
        else:
            result.provider_calls += out.attempts if isinstance(out, ProfileGenerationExhausted) else 1
            result.failures[gid] = str(out)
            if isinstance(out, ProviderError):
                result.provider_failures.add(gid)
    if store is not None:
        store.append(new_records)

    if ids and len(result.failures) / len(ids) > failure_threshold:
        raise ProfileBatchError(result.failures, len(ids), failure_threshold, result.provider_failures)
    for gid, why in result.failures.items():
        log.warning("profile failed for %s: %s", gid, why)
    return result

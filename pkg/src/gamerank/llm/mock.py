"""Deterministic rule-based stand-ins for an LLM.

``MockProvider`` routes on the sentinel that ends every shipped template and
answers each prompt family with a simple keyword rule. ``AdversarialMockProvider``
wraps it and corrupts outputs on a seeded schedule so repair paths get exercised.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

from .. import prompts
from ..data import LANGUAGE_NONE, PROFILE_KEYS
from .base import CompletionRequest, ProviderError, derive_seed

_TOKEN = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*")

DEFAULT_GENRES: dict[str, tuple[str, ...]] = {
    "obby": ("obby", "obstacle", "parkour"),
    "simulator": ("simulator", "simulation", "symulator"),
    "adventure": ("adventure", "explore", "treasure"),
    "role-playing": ("role-playing", "roleplay"),
    "tycoon": ("tycoon", "factory"),
}

DEFAULT_FEATURES = (
    "multiplayer",
    "trading",
    "customization",
    "pets",
    "daily rewards",
    "leaderboards",
    "levels",
)

DEFAULT_INCLUDES = ("events", "seasonal", "updates", "exclusive", "vip", "gamepass")

DEFAULT_LANGUAGE_MARKERS: dict[str, tuple[str, ...]] = {
    "English": ("the", "and", "you", "your", "of", "is", "with", "for"),
    "Polish": ("i", "w", "na", "jest", "się", "z", "nie", "do", "oraz"),
    "Spanish": ("el", "la", "los", "y", "es", "con", "para", "tu"),
}

OVERLAP_STOPWORDS = frozenset(
    """a an and are as at be by for from has have in is it its of on or that the this to with
    game games player players user users play played roblox""".split()
)


def tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def overlap_terms(text: str) -> list[str]:
    """Tokens that count toward lexical overlap: no numbers, stopwords or fragments."""
    return [t for t in tokens(text) if len(t) > 2 and not t.isdigit() and t not in OVERLAP_STOPWORDS]


@dataclass(frozen=True)
class Lexicon:
    genres: dict[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_GENRES))
    features: tuple[str, ...] = DEFAULT_FEATURES
    includes: tuple[str, ...] = DEFAULT_INCLUDES
    languages: dict[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_LANGUAGE_MARKERS))

    @classmethod
    def from_dict(cls, d: dict) -> Lexicon:
        base = cls()
        return cls(
            genres={k: tuple(v) for k, v in d.get("genres", base.genres).items()},
            features=tuple(d.get("features", base.features)),
            includes=tuple(d.get("includes", base.includes)),
            languages={k: tuple(v) for k, v in d.get("languages", base.languages).items()},
        )


def _count_phrase(text: str, phrase: str) -> int:
    return len(re.findall(r"(?<![a-z0-9])" + re.escape(phrase) + r"(?![a-z0-9])", text))


class MockProvider:
    """Pure function of (prompt, seed); the seed is accepted but the clean rules ignore it."""

    model_name = "mock"

    def __init__(self, lexicon: Lexicon | None = None):
        self.lexicon = lexicon or Lexicon()
        self.calls = 0

    def complete(self, request: CompletionRequest) -> str:
        self.calls += 1
        family = prompts.detect_family(request.prompt)
        if family is None:
            raise ProviderError("malformed_response", "prompt carries no template sentinel")
        slots = prompts.load_template(family).extract(request.prompt)
        if slots is None:
            raise ProviderError("malformed_response", f"prompt does not match the {family} template")
        if family == prompts.PROFILE:
            return self._profile(slots["in_game_text"], slots["game_language"])
        if family == prompts.STRATEGY:
            return self._strategy(slots["user_play_history_str"])
        return self._rerank(slots["user_profile"], slots["ranking_length"], slots["ranking_results_str"])

    # -- profile ---------------------------------------------------------------

    def genre_counts(self, text: str) -> Counter:
        low = text.lower()
        counts: Counter = Counter()
        for genre, words in self.lexicon.genres.items():
            counts[genre] = sum(_count_phrase(low, w) for w in words)
        return counts

    def detect_language(self, text: str) -> str:
        words = Counter(tokens(text))
        best, best_n = "English", 0
        for lang, markers in self.lexicon.languages.items():
            n = sum(words[m] for m in markers)
            if n > best_n:
                best, best_n = lang, n
        return best

    def _profile(self, text: str, declared: str) -> str:
        low = text.lower()
        counts = self.genre_counts(text)
        top = max(self.lexicon.genres, key=lambda g: counts[g])  # first genre wins ties
        genre = top if counts[top] > 0 else "casual"

        declared = declared.strip()
        language = declared if declared and declared != LANGUAGE_NONE else self.detect_language(text)

        genre_words = {w for ws in self.lexicon.genres.values() for w in tokens(" ".join(ws))}
        marker_words = {w for ws in self.lexicon.languages.values() for w in ws}
        content = Counter(
            t for t in tokens(text)
            if len(t) >= 4 and t not in genre_words and t not in marker_words and t not in OVERLAP_STOPWORDS
        )
        keywords = [w for w, _ in sorted(content.items(), key=lambda kv: (-kv[1], kv[0]))[:4]]
        features = [f for f in self.lexicon.features if _count_phrase(low, f)]
        includes = [f for f in self.lexicon.includes if _count_phrase(low, f)]
        n_lines = len([ln for ln in text.splitlines() if ln.strip()])
        scale = "compact" if n_lines < 6 else "moderate" if n_lines < 15 else "extensive"

        about = f"This Roblox game appears to be a {genre} experience."
        if keywords:
            about += " Text mentions " + ", ".join(keywords) + "."
        profile = {
            "game_about": about,
            "game_genre": genre,
            "suitable_for": f"all ages, {genre} fans",
            "features": ", ".join(features) if features else f"core {genre} gameplay",
            "includes": ", ".join(includes) if includes else "standard content",
            "game_language": language,
            "game_scale": f"A {scale} game with {n_lines} distinct text elements.",
        }
        return json.dumps(profile, ensure_ascii=False, indent=4)

    # -- strategy --------------------------------------------------------------

    def _strategy(self, history_block: str) -> str:
        found = [json.loads(f'"{g}"') for g in re.findall(r'"game_genre":\s*"((?:[^"\\]|\\.)*)"', history_block)]
        if not found:
            return "Based on the user's history there is no clear genre preference; rank by general relevance."
        counts = Counter(found)
        # ties by name so the result depends only on the multiset of genres
        ranked = sorted(counts, key=lambda g: (-counts[g], g))[:2]
        n = len(found)
        lines = [
            "Based on the user's preferences, the ranking logic will prioritize games as follows:",
            f"1. Top Priority: {ranked[0]} games. The user played {ranked[0]} most frequently "
            f"({counts[ranked[0]]} of {n} profiled games).",
        ]
        if len(ranked) > 1:
            lines.append(f"2. High Priority: {ranked[1]} games ({counts[ranked[1]]} of {n} profiled games).")
        lines.append("3. Medium Priority: remaining titles, keeping their original order.")
        return "\n".join(lines)

    # -- rerank ----------------------------------------------------------------

    @staticmethod
    def candidate_entries(block: str) -> list[tuple[str, str]]:
        parts = re.split(r"^game_id:[ \t]*(\S+)[ \t]*$", block, flags=re.M)
        return [(parts[i], parts[i + 1]) for i in range(1, len(parts) - 1, 2)]

    def _rerank(self, strategy: str, ranking_length: str, block: str) -> str:
        weights = Counter(overlap_terms(strategy))
        entries = self.candidate_entries(block)
        scored = []
        for pos, (gid, body) in enumerate(entries):
            score = sum(weights[t] for t in set(overlap_terms(body)))
            scored.append((-score, pos, gid))
        scored.sort()
        try:
            k = int(ranking_length.strip())
        except ValueError:
            k = len(scored)
        return "\n".join(gid for _, _, gid in scored[:k])


# --- adversarial variant -----------------------------------------------------

RERANK_FAULTS = ("duplicate", "unknown", "missing", "empty", "prose", "garbage", "json_list")
PROFILE_FAULTS = ("broken_json", "missing_key", "empty_value", "fenced", "not_json", "wrong_type", "alias_key")
STRATEGY_FAULTS = ("empty",)

Schedule = Callable[[str, str, int], "str | None"]


class AdversarialMockProvider:
    """Wraps a clean mock and corrupts its output on a seeded, per-(prompt, seed) schedule.

    ``schedule(family, prompt, seed)`` overrides the random schedule and returns a
    fault name or None.
    """

    def __init__(
        self,
        fault_rate: float = 0.5,
        schedule: Schedule | None = None,
        base: MockProvider | None = None,
        error_rate: float = 0.0,
    ):
        self.base = base or MockProvider()
        self.fault_rate = fault_rate
        self.error_rate = error_rate
        self.schedule = schedule
        self.model_name = "mock-adversarial"
        self.calls = 0
        self.faults: Counter = Counter()

    def _rng(self, prompt: str, seed: int) -> random.Random:
        digest = hashlib.sha256(prompt.encode()).hexdigest()
        return random.Random(derive_seed(seed, digest))

    def complete(self, request: CompletionRequest) -> str:
        self.calls += 1
        family = prompts.detect_family(request.prompt)
        if family is None:
            raise ProviderError("malformed_response", "prompt carries no template sentinel")
        rng = self._rng(request.prompt, request.seed)
        if self.error_rate and rng.random() < self.error_rate:
            self.faults["provider_error"] += 1
            raise ProviderError("timeout", "injected fault")
        clean = self.base.complete(request)
        if self.schedule is not None:
            fault = self.schedule(family, request.prompt, request.seed)
        else:
            pool = {prompts.PROFILE: PROFILE_FAULTS, prompts.STRATEGY: STRATEGY_FAULTS}.get(family, RERANK_FAULTS)
            fault = rng.choice(pool) if rng.random() < self.fault_rate else None
        if fault is None:
            return clean
        self.faults[fault] += 1
        if family == prompts.PROFILE:
            return _corrupt_profile(clean, fault, rng)
        if family == prompts.STRATEGY:
            return ""
        return _corrupt_rerank(clean, fault, rng)


def _corrupt_rerank(clean: str, fault: str, rng: random.Random) -> str:
    ids = clean.split("\n") if clean else []
    if fault == "empty" or not ids:
        return ""
    if fault == "duplicate":
        extra = [rng.choice(ids) for _ in range(rng.randint(1, 3))]
        for x in extra:
            ids.insert(rng.randrange(len(ids) + 1), x)
        return "\n".join(ids)
    if fault == "unknown":
        for i in range(rng.randint(1, 3)):
            ids.insert(rng.randrange(len(ids) + 1), f"ghost{rng.randrange(10**6)}")
        return ", ".join(ids)
    if fault == "missing":
        for _ in range(min(len(ids) - 1, rng.randint(1, 3))):
            ids.pop(rng.randrange(len(ids)))
        return "\n".join(ids)
    if fault == "prose":
        body = "\n".join(f"{i}. {x}" for i, x in enumerate(ids, 1))
        return f"Sure! Here is the ranking you asked for:\n{body}\nLet me know if you need anything else."
    if fault == "json_list":
        return json.dumps(ids)
    # garbage: random junk with a few ids sprinkled in
    junk = ["{", "}", "null", "undefined", "###", "game_id", "->", "☃"]
    out = [rng.choice(junk + ids[:2]) for _ in range(rng.randint(0, 12))]
    return " ".join(out)


def _corrupt_profile(clean: str, fault: str, rng: random.Random) -> str:
    obj = json.loads(clean)
    if fault == "broken_json":
        return clean[: rng.randrange(1, len(clean) - 1)]
    if fault == "missing_key":
        obj.pop(rng.choice(PROFILE_KEYS))
        return json.dumps(obj)
    if fault == "empty_value":
        obj[rng.choice(PROFILE_KEYS)] = "  "
        return json.dumps(obj)
    if fault == "fenced":
        return f"Here is the summary:\n```json\n{clean}\n```\nHope this helps!"
    if fault == "not_json":
        return "I could not produce JSON for this game, sorry."
    if fault == "wrong_type":
        obj[rng.choice(PROFILE_KEYS)] = ["a", "list"]
        return json.dumps(obj)
    obj["suitabl_for"] = obj.pop("suitable_for")
    return json.dumps(obj)

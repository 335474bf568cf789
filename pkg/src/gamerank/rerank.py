"""Top-K reranking: the personalized LLM reranker, its four comparison systems,
and the repair protocol that turns any completion into a valid permutation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import prompts
from .data import GameProfile, GameRecord
from .llm import CompletionRequest, Provider

REPRESENTATIONS = ("title", "title_desc", "profile")
MAX_RERANK_K = 30

MODEL_KINDS = (
    "baseline_identity",
    "title",
    "title_desc",
    "llm_no_personalization",
    "llm_personalized",
)

# Table-style column labels
MODEL_LABELS = {
    "baseline_identity": "Baseline",
    "title": "Title-based",
    "title_desc": "Title+Desc",
    "llm_no_personalization": "LLM w/o Pers.",
    "llm_personalized": "Proposed",
}

FALLBACK_IDENTITY = "fallback_identity"
FALLBACK_NO_PERSONALIZATION = "fallback_no_personalization"
KEPT_IN_PLACE = "kept_in_place"


class MissingRepresentationError(KeyError):
    def __init__(self, ids):
        self.ids = sorted(ids)
        super().__init__("no representation for candidates: " + ", ".join(self.ids))


@dataclass(frozen=True)
class RerankRequest:
    user_id: str
    candidates: tuple[str, ...]
    representation: str = "profile"
    strategy: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("rerank candidates must be distinct")
        if len(self.candidates) > MAX_RERANK_K:
            raise ValueError(f"at most {MAX_RERANK_K} candidates can be reranked")
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.representation!r}")


@dataclass
class RerankedList:
    user_id: str
    items: list[str]
    repair_log: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class CandidateData:
    """What the prompt can show about candidates: game records and generated profiles."""

    games: Mapping[str, GameRecord]
    profiles: Mapping[str, GameProfile] = field(default_factory=dict)


def _candidate_entry(gid: str, representation: str, data: CandidateData) -> str:
    if representation == "profile":
        return f"game_id: {gid}\n{data.profiles[gid].to_json()}"
    game = data.games[gid]
    if representation == "title":
        return f"game_id: {gid}\ntitle: {game.title}"
    return f"game_id: {gid}\ntitle: {game.title}\ndescription: {game.description}"


def build_rerank_prompt(request: RerankRequest, data: CandidateData) -> str:
    source = data.profiles if request.representation == "profile" else data.games
    missing = [g for g in request.candidates if g not in source]
    if missing:
        raise MissingRepresentationError(missing)
    block = "\n\n".join(_candidate_entry(g, request.representation, data) for g in request.candidates)
    strategy = request.strategy if request.strategy is not None else prompts.generic_strategy()
    return prompts.load_template(prompts.RERANK).render(
        user_profile=strategy,
        ranking_length=len(request.candidates),
        ranking_results_str=block,
    )


_SPLIT = re.compile(r"[\s,;\[\]{}()\"'`]+")
_LIST_MARKER = re.compile(r"^(?:\d+[.):]?|[-*•#]+)$")
_EDGE_PUNCT = ".:!?*"


def _id_tokens(raw: str) -> list[str]:
    out = []
    for tok in _SPLIT.split(raw):
        if not tok or _LIST_MARKER.match(tok):
            continue
        out.append(tok)
    return out


def parse_rerank_output(raw: str, candidates: Sequence[str], user_id: str = "") -> RerankedList:
    """Coerce a completion into a permutation of ``candidates``.

    Tokens are read in order; unknown ids and repeats are dropped and absent
    candidates are appended in their original order. Every repair is logged.
    """
    cand_set = set(candidates)
    log: list[str] = []
    seen: set[str] = set()
    items: list[str] = []
    for tok in _id_tokens(raw):
        gid = tok if tok in cand_set else tok.strip(_EDGE_PUNCT)
        if gid.lower().startswith("game_id:") and gid[8:] in cand_set:
            gid = gid[8:]
        if gid not in cand_set:
            if gid:
                log.append(f"dropped_unknown:{gid}")
            continue
        if gid in seen:
            log.append(f"dropped_duplicate:{gid}")
            continue
        seen.add(gid)
        items.append(gid)
    if not items:
        if candidates:
            log.append(FALLBACK_IDENTITY)
        return RerankedList(user_id, list(candidates), log)
    for gid in candidates:
        if gid not in seen:
            items.append(gid)
            log.append(f"appended_missing:{gid}")
    return RerankedList(user_id, items, log)


def rerank(request: RerankRequest, data: CandidateData, provider: Provider, seed: int = 0) -> RerankedList:
    prompt = build_rerank_prompt(request, data)
    raw = provider.complete(CompletionRequest(prompt, seed=seed))
    return parse_rerank_output(raw, request.candidates, request.user_id)


@dataclass(frozen=True)
class RerankModel:
    kind: str
    representation: str | None
    personalized: bool

    @property
    def uses_llm(self) -> bool:
        return self.representation is not None

    def rerank(
        self,
        user_id: str,
        candidates: Sequence[str],
        data: CandidateData,
        provider: Provider | None,
        strategy: str | None = None,
        seed: int = 0,
    ) -> RerankedList:
        candidates = tuple(candidates)
        if not self.uses_llm:
            return RerankedList(user_id, list(candidates), [])
        log = []
        if self.personalized and strategy is None:
            log.append(FALLBACK_NO_PERSONALIZATION)
        # candidates the prompt cannot describe stay at their original positions
        source = data.profiles if self.representation == "profile" else data.games
        pinned = {i for i, g in enumerate(candidates) if g not in source}
        log.extend(f"{KEPT_IN_PLACE}:{candidates[i]}" for i in sorted(pinned))
        movable = tuple(g for i, g in enumerate(candidates) if i not in pinned)
        if not movable:
            return RerankedList(user_id, list(candidates), log)
        req = RerankRequest(user_id, movable, self.representation, strategy if self.personalized else None)
        result = rerank(req, data, provider, seed)
        order = iter(result.items)
        items = [candidates[i] if i in pinned else next(order) for i in range(len(candidates))]
        return RerankedList(user_id, items, log + result.repair_log)


def make_model(kind: str) -> RerankModel:
    if kind == "baseline_identity":
        return RerankModel(kind, None, False)
    if kind in ("title", "title_desc"):
        return RerankModel(kind, kind, False)
    if kind == "llm_no_personalization":
        return RerankModel(kind, "profile", False)
    if kind == "llm_personalized":
        return RerankModel(kind, "profile", True)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {', '.join(MODEL_KINDS)}")

"""Domain types, line-delimited corpus loading and integrity checks."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

TEXT_KINDS = ("instruction", "background", "button", "promo", "noise", "unknown")
LANGUAGE_NONE = "NONE"
MAX_RANKING_LENGTH = 250

PROFILE_KEYS = (
    "game_about",
    "game_genre",
    "suitable_for",
    "features",
    "includes",
    "game_language",
    "game_scale",
)

_WS = re.compile(r"\s")


class CorpusError(ValueError):
    """Base class for every corpus loading failure."""


class RecordParseError(CorpusError):
    def __init__(self, path: str | Path, line: int, detail: str):
        self.path = str(path)
        self.line = line
        self.detail = detail
        super().__init__(f"{self.path}:{line}: {detail}")


class DanglingReferenceError(CorpusError):
    def __init__(self, ids: Iterable[str]):
        self.ids = sorted(set(ids))
        super().__init__("unknown game ids referenced: " + ", ".join(self.ids))


class DuplicateIdError(CorpusError):
    def __init__(self, kind: str, ids: Iterable[str]):
        self.kind = kind
        self.ids = sorted(set(ids))
        super().__init__(f"duplicate {kind}: " + ", ".join(self.ids))


def check_id(value: Any, what: str = "id") -> str:
    if not isinstance(value, str) or not value or _WS.search(value):
        raise ValueError(f"invalid {what}: {value!r}")
    return value


@dataclass(frozen=True)
class TextElement:
    content: str
    kind: str = "unknown"

    def __post_init__(self):
        if not isinstance(self.content, str) or not self.content:
            raise ValueError("text element content must be a nonempty string")
        if self.kind not in TEXT_KINDS:
            raise ValueError(f"unknown text element kind {self.kind!r}")


@dataclass(frozen=True)
class GameRecord:
    id: str
    title: str
    description: str
    declared_language: str
    in_game_text: tuple[TextElement, ...] = ()

    def __post_init__(self):
        check_id(self.id, "game id")
        object.__setattr__(self, "in_game_text", tuple(self.in_game_text))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "description": self.description,
            "declared_language": self.declared_language,
            "in_game_text": [{"content": e.content, "kind": e.kind} for e in self.in_game_text],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> GameRecord:
        elements = tuple(
            TextElement(e["content"], e.get("kind") or "unknown") for e in d.get("in_game_text", [])
        )
        return cls(
            id=d["id"],
            title=d.get("title", ""),
            description=d.get("description", ""),
            declared_language=d.get("declared_language") or LANGUAGE_NONE,
            in_game_text=elements,
        )


@dataclass(frozen=True)
class GameProfile:
    game_about: str
    game_genre: str
    suitable_for: str
    features: str
    includes: str
    game_language: str
    game_scale: str

    def __post_init__(self):
        for key in PROFILE_KEYS:
            value = getattr(self, key)
            if not isinstance(value, str) or not value.strip():
                raise ValueError(f"profile field {key} must be a nonempty string")

    def to_dict(self) -> dict[str, str]:
        return {key: getattr(self, key) for key in PROFILE_KEYS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


@dataclass(frozen=True)
class HistoryEntry:
    game_id: str
    sessions: int
    playtime_seconds: float


@dataclass(frozen=True)
class PlayHistory:
    """A user's pre-aggregated play over the last seven days."""

    user_id: str
    entries: tuple[HistoryEntry, ...] = ()

    def __post_init__(self):
        check_id(self.user_id, "user id")
        object.__setattr__(self, "entries", tuple(self.entries))
        for e in self.entries:
            if e.sessions < 0 or e.playtime_seconds < 0:
                raise ValueError(f"negative history values for {self.user_id}/{e.game_id}")

    @property
    def history_length(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "entries": [
                {"game_id": e.game_id, "sessions": e.sessions, "playtime_seconds": e.playtime_seconds}
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> PlayHistory:
        return cls(
            user_id=d["user_id"],
            entries=tuple(
                HistoryEntry(check_id(e["game_id"], "game id"), int(e["sessions"]), e["playtime_seconds"])
                for e in d.get("entries", [])
            ),
        )


@dataclass(frozen=True)
class RankingList:
    user_id: str
    items: tuple[str, ...]

    def __post_init__(self):
        check_id(self.user_id, "user id")
        object.__setattr__(self, "items", tuple(self.items))
        if len(self.items) > MAX_RANKING_LENGTH:
            raise ValueError(f"ranking for {self.user_id} longer than {MAX_RANKING_LENGTH}")
        seen: set[str] = set()
        dups = []
        for item in self.items:
            check_id(item, "game id")
            if item in seen:
                dups.append(item)
            seen.add(item)
        if dups:
            raise DuplicateIdError(f"ranking items for {self.user_id}", dups)

    def top_k(self, k: int) -> tuple[str, ...]:
        return self.items[: max(k, 0)]

    def to_dict(self) -> dict:
        return {"user_id": self.user_id, "items": list(self.items)}


@dataclass(frozen=True)
class EngagementLabel:
    user_id: str
    game_id: str
    post_exposure_playtime_seconds: float

    def __post_init__(self):
        check_id(self.user_id, "user id")
        check_id(self.game_id, "game id")
        if self.post_exposure_playtime_seconds < 0:
            raise ValueError("negative playtime label")

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "game_id": self.game_id,
            "post_exposure_playtime_seconds": self.post_exposure_playtime_seconds,
        }


@dataclass(frozen=True)
class Corpus:
    games: Mapping[str, GameRecord]
    histories: Mapping[str, PlayHistory]
    rankings: Mapping[str, RankingList]
    labels: Mapping[tuple[str, str], EngagementLabel]
    _labels_by_user: dict[str, dict[str, float]] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        by_user: dict[str, dict[str, float]] = {}
        for (user, game), label in self.labels.items():
            by_user.setdefault(user, {})[game] = label.post_exposure_playtime_seconds
        object.__setattr__(self, "_labels_by_user", by_user)

    @property
    def users(self) -> list[str]:
        return sorted(set(self.histories) | set(self.rankings))

    def history(self, user_id: str) -> PlayHistory:
        return self.histories.get(user_id) or PlayHistory(user_id, ())

    def labels_for(self, user_id: str) -> dict[str, float]:
        """Playtime labels for one user; absent games mean zero engagement."""
        return self._labels_by_user.get(user_id, {})

    def summary(self) -> dict[str, int]:
        return {
            "games": len(self.games),
            "users": len(self.users),
            "histories": len(self.histories),
            "rankings": len(self.rankings),
            "labels": len(self.labels),
        }


# --- line-delimited IO -------------------------------------------------------


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordParseError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise RecordParseError(path, lineno, "record is not an object")
            yield lineno, obj


def dumps_record(obj: Mapping[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def write_jsonl(path: str | Path, records: Iterable[Mapping[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_record(rec) + "\n")


def _parse_lines(path, build):
    out = []
    for lineno, obj in read_jsonl(path):
        try:
            out.append(build(obj))
        except CorpusError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordParseError(path, lineno, f"{type(exc).__name__}: {exc}") from None
    return out


def build_corpus(
    games: Iterable[GameRecord],
    histories: Iterable[PlayHistory],
    rankings: Iterable[RankingList],
    labels: Iterable[EngagementLabel],
) -> Corpus:
    """Assemble a corpus, enforcing unique ids and resolvable game references."""
    game_map: dict[str, GameRecord] = {}
    dup_games = []
    for g in games:
        if g.id in game_map:
            dup_games.append(g.id)
        game_map[g.id] = g
    if dup_games:
        raise DuplicateIdError("game ids", dup_games)

    hist_map: dict[str, PlayHistory] = {}
    rank_map: dict[str, RankingList] = {}
    label_map: dict[tuple[str, str], EngagementLabel] = {}
    dup_users, dup_rank, dup_labels = [], [], []
    for h in histories:
        if h.user_id in hist_map:
            dup_users.append(h.user_id)
        hist_map[h.user_id] = h
    for r in rankings:
        if r.user_id in rank_map:
            dup_rank.append(r.user_id)
        rank_map[r.user_id] = r
    for lab in labels:
        key = (lab.user_id, lab.game_id)
        if key in label_map:
            dup_labels.append(f"{lab.user_id}/{lab.game_id}")
        label_map[key] = lab
    if dup_users:
        raise DuplicateIdError("history user ids", dup_users)
    if dup_rank:
        raise DuplicateIdError("ranking user ids", dup_rank)
    if dup_labels:
        raise DuplicateIdError("labels", dup_labels)

    dangling = set()
    for h in hist_map.values():
        dangling.update(e.game_id for e in h.entries if e.game_id not in game_map)
    for r in rank_map.values():
        dangling.update(i for i in r.items if i not in game_map)
    dangling.update(g for (_, g) in label_map if g not in game_map)
    if dangling:
        raise DanglingReferenceError(dangling)

    return Corpus(game_map, hist_map, rank_map, label_map)


def load_corpus(games_path, histories_path, rankings_path, labels_path) -> Corpus:
    games = _parse_lines(games_path, GameRecord.from_dict)
    histories = _parse_lines(histories_path, PlayHistory.from_dict)
    rankings = _parse_lines(rankings_path, lambda d: RankingList(d["user_id"], tuple(d["items"])))
    labels = _parse_lines(
        labels_path,
        lambda d: EngagementLabel(d["user_id"], d["game_id"], d["post_exposure_playtime_seconds"]),
    )
    return build_corpus(games, histories, rankings, labels)


CORPUS_FILES = ("games.jsonl", "histories.jsonl", "rankings.jsonl", "labels.jsonl")


def load_corpus_dir(directory: str | Path) -> Corpus:
    directory = Path(directory)
    return load_corpus(*(directory / name for name in CORPUS_FILES))


def save_corpus(corpus: Corpus, directory: str | Path) -> None:
    directory = Path(directory)
    write_jsonl(directory / "games.jsonl", (g.to_dict() for g in corpus.games.values()))
    write_jsonl(directory / "histories.jsonl", (h.to_dict() for h in corpus.histories.values()))
    write_jsonl(directory / "rankings.jsonl", (r.to_dict() for r in corpus.rankings.values()))
    write_jsonl(directory / "labels.jsonl", (lab.to_dict() for lab in corpus.labels.values()))


@dataclass
class ValidationReport:
    empty_text_games: list[str] = field(default_factory=list)
    empty_history_users: list[str] = field(default_factory=list)
    short_rankings: list[str] = field(default_factory=list)

    @property
    def warnings(self) -> list[str]:
        return (
            [f"{g}: empty in-game text" for g in self.empty_text_games]
            + [f"{u}: empty play history" for u in self.empty_history_users]
            + [f"{u}: ranking shorter than requested K" for u in self.short_rankings]
        )

    def __bool__(self) -> bool:
        return bool(self.empty_text_games or self.empty_history_users or self.short_rankings)


def validate_corpus(corpus: Corpus, k: int = 30) -> ValidationReport:
    report = ValidationReport()
    report.empty_text_games = sorted(g.id for g in corpus.games.values() if not g.in_game_text)
    report.empty_history_users = sorted(u for u in corpus.users if corpus.history(u).history_length == 0)
    report.short_rankings = sorted(u for u, r in corpus.rankings.items() if len(r.items) < k)
    return report

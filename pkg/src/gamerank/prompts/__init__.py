"""Prompt templates shipped as text files, with slot rendering and reverse parsing.

Templates use ``{slot}`` placeholders for a declared set of slot names only, so
literal JSON braces in the profile template are left alone.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

PROFILE = "game_profile"
STRATEGY = "user_strategy"
RERANK = "rerank"

SLOTS = {
    PROFILE: ("in_game_text", "game_language"),
    STRATEGY: ("user_play_history_str",),
    RERANK: ("user_profile", "ranking_length", "ranking_results_str"),
}

CANDIDATE_START = "<Candidate Game Info Start>"
CANDIDATE_END = "<Candidate Game Info End>"


class TemplateMissingError(FileNotFoundError):
    pass


def sentinel(name: str) -> str:
    return f"<!-- gamerank-template:{name} -->"


_SENTINEL_RE = re.compile(r"<!-- gamerank-template:([a-z_]+) -->\s*\Z")


def detect_family(prompt: str) -> str | None:
    """Template family named by the trailing sentinel, or None."""
    m = _SENTINEL_RE.search(prompt)
    if m and m.group(1) in SLOTS:
        return m.group(1)
    return None


@dataclass(frozen=True)
class Template:
    name: str
    text: str

    @property
    def slots(self) -> tuple[str, ...]:
        return SLOTS[self.name]

    def _slot_re(self) -> re.Pattern:
        return re.compile(r"\{(" + "|".join(map(re.escape, self.slots)) + r")\}")

    def render(self, **values) -> str:
        missing = set(self.slots) - set(values)
        if missing:
            raise KeyError(f"missing slot values for {self.name}: {sorted(missing)}")
        # single pass so slot values are never re-substituted
        return self._slot_re().sub(lambda m: str(values[m.group(1)]), self.text)

    @property
    def parser(self) -> re.Pattern:
        return _parser_for(self.text, self.slots)

    def extract(self, rendered: str) -> dict[str, str] | None:
        m = self.parser.fullmatch(rendered)
        return m.groupdict() if m else None


@lru_cache(maxsize=None)
def _parser_for(text: str, slots: tuple[str, ...]) -> re.Pattern:
    pieces = re.split(r"\{(" + "|".join(map(re.escape, slots)) + r")\}", text)
    pattern = []
    for i, piece in enumerate(pieces):
        pattern.append(f"(?P<{piece}>.*?)" if i % 2 else re.escape(piece))
    return re.compile("".join(pattern), re.S)


@lru_cache(maxsize=None)
def load_template(name: str) -> Template:
    if name not in SLOTS:
        raise TemplateMissingError(f"unknown template {name!r}")
    try:
        text = resources.files(__name__).joinpath(f"{name}.txt").read_text(encoding="utf-8")
    except FileNotFoundError:
        raise TemplateMissingError(f"template file {name}.txt not found") from None
    return Template(name, text)


@lru_cache(maxsize=None)
def generic_strategy() -> str:
    """Fixed strategy text used by every non-personalized reranker."""
    return resources.files(__name__).joinpath("generic_strategy.txt").read_text(encoding="utf-8").strip()

from __future__ import annotations

from pathlib import Path

import pytest

from gamerank.data import (
    EngagementLabel,
    GameRecord,
    HistoryEntry,
    PlayHistory,
    RankingList,
    TextElement,
    build_corpus,
)
from gamerank.synth import SynthSpec, generate

GOLDEN = Path(__file__).parent / "golden"


def make_game(gid: str, genre_word: str = "obby", n: int = 3, lang: str = "English") -> GameRecord:
    text = [TextElement(f"Welcome to the {genre_word} world, have fun {i}", "instruction") for i in range(n)]
    return GameRecord(gid, f"Title {gid}", f"A {genre_word} game", lang, tuple(text))


@pytest.fixture
def tiny_corpus():
    games = [make_game(f"g{i}", "obby" if i % 2 else "tycoon") for i in range(8)]
    histories = [
        PlayHistory("u1", (HistoryEntry("g1", 3, 600.0), HistoryEntry("g3", 1, 120.0))),
        PlayHistory("u2", (HistoryEntry("g2", 2, 300.0),)),
        PlayHistory("u3", ()),
    ]
    rankings = [
        RankingList("u1", ("g0", "g1", "g2", "g3", "g4", "g5")),
        RankingList("u2", ("g5", "g4", "g3", "g2", "g1", "g0")),
        RankingList("u3", ("g6", "g7")),
    ]
    labels = [
        EngagementLabel("u1", "g5", 900.0),
        EngagementLabel("u1", "g3", 60.0),
        EngagementLabel("u2", "g0", 1200.0),
    ]
    return build_corpus(games, histories, rankings, labels)


@pytest.fixture(scope="session")
def small_synth():
    return generate(SynthSpec(n_games=150, n_users=40, ranking_length=30, preference_sharpness=5.0, seed=3))


# acceptance verdicts, filled in by test_acceptance and echoed after the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("ab")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:<3} {'PASS' if ok else 'FAIL'}  {detail}")

"""Seeded synthetic corpus with known ground truth.

Games get a genre and a quality; users get a preference vector over genres.
Expected engagement of user u with game g is ``pref_u[genre_g] * quality_g``.
Baseline rankings are that ordering corrupted by random adjacent swaps, and
engagement labels are noisy draws around it. The 7-day engagement window is
anchored at the time the ranking is served.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import (
    LANGUAGE_NONE,
    Corpus,
    EngagementLabel,
    GameRecord,
    HistoryEntry,
    PlayHistory,
    RankingList,
    TextElement,
    build_corpus,
    save_corpus,
    write_jsonl,
)

DEFAULT_GENRES = ("obby", "simulator", "adventure", "role-playing", "tycoon")

# Per-genre signal text. Every template carries a lexicon keyword for its genre.
INSTRUCTIONS = {
    "obby": [
        "Jump across the moving platforms to finish this obby stage",
        "Avoid the lava blocks and reach the next checkpoint of the obby",
        "Use parkour moves to clear each obstacle",
        "Complete the obstacle course without falling",
    ],
    "simulator": [
        "Collect coins and upgrade your backpack in this simulator",
        "Drive the train between stations in the railway simulator",
        "Click to mine ore and sell it, a relaxing simulation",
        "Hatch eggs and grow stronger in the simulator",
    ],
    "adventure": [
        "Explore the island and find the hidden treasure",
        "Follow the map to continue your adventure through the jungle",
        "Solve the puzzle to open the treasure vault",
        "Explore ancient ruins on a long adventure",
    ],
    "role-playing": [
        "Choose a job and roleplay with your friends in town",
        "Pick a house and start your role-playing story",
        "Roleplay as a doctor, teacher or police officer",
        "Join a family and live your role-playing life",
    ],
    "tycoon": [
        "Build droppers and grow your factory income",
        "Buy conveyors to expand your tycoon empire",
        "Collect cash from your factory and unlock new floors",
        "Upgrade machines to become the richest tycoon",
    ],
}

BACKGROUNDS = {
    "obby": ["Welcome to the tallest obby tower ever built", "An obstacle course across floating islands"],
    "simulator": ["Welcome to the biggest simulator on the server", "A simulation of daily work in a busy city"],
    "adventure": ["An adventure awaits beyond the misty mountains", "Legends speak of treasure lost at sea"],
    "role-playing": ["A role-playing town where every player has a story", "Welcome to Brookville, a roleplay city"],
    "tycoon": ["Start from nothing and own the largest tycoon", "Your factory empire begins with one dropper"],
}

POLISH = {
    "obby": ["Skacz po platformach i dotrzyj do mety obby", "To jest obby z wieloma etapami na wyspie"],
    "simulator": ["Prowadź pociąg do stacji w symulatorze, to jest simulator kolei", "Naprawiaj perony i zwrotnice w simulator"],
    "adventure": ["Odkryj wyspę i znajdź skarb, to jest adventure", "Wyrusz na adventure do starych ruin"],
    "role-playing": ["Wybierz pracę i graj w role-playing z przyjaciółmi", "Zamieszkaj w domu w mieście role-playing"],
    "tycoon": ["Buduj fabrykę i rozwijaj swój tycoon", "Zbieraj pieniądze z fabryki w tycoon"],
}

GENERIC_BUTTONS = ["Play", "Settings", "Sprint", "Inventory", "Shop", "Respawn", "Menu", "Close"]
FEATURE_BUTTONS = [
    "Join Multiplayer Match",
    "Open Trading",
    "Character Customization",
    "Equip Pets",
    "Claim Daily Rewards",
    "View Leaderboards",
    "Select Levels",
]
PROMOS = [
    "Buy the VIP gamepass for double cash",
    "Limited seasonal events are live now",
    "New updates every week, like the game",
    "Exclusive items in the shop today only",
    "500 Robux bundle 50% off",
]
NOISE = [
    "asdfgh",
    "lol",
    "Loading...",
    "xX_Pro_Xx joined the server",
    "0/100",
    "Thanks to builder_bob for the map",
    "v1.2.7",
    "brb",
    "??????",
    "Server restarting in 5",
]
TITLE_WORDS = ["Mega", "Super", "Epic", "Tiny", "Crazy", "Old", "Classic", "Ultra", "Happy", "Dark"]
TITLE_NOUNS = ["World", "Island", "Town", "Tower", "Station", "Land", "Planet", "Valley", "Kingdom", "Zone"]
TITLE_GENRE = {
    "obby": "Obby",
    "simulator": "Simulator",
    "adventure": "Adventure",
    "role-playing": "Roleplay",
    "tycoon": "Tycoon",
}
DESCRIPTIONS = [
    "Have fun!",
    "Like and favorite for more updates.",
    "Play with friends in multiplayer.",
    "Join the group for a free reward.",
    "Work in progress, report bugs.",
    "Best game ever made.",
    "Events every weekend.",
    "Trading coming soon.",
]


@dataclass(frozen=True)
class SynthSpec:
    n_games: int = 1000
    n_users: int = 300
    genres: tuple[str, ...] = DEFAULT_GENRES
    history_length_profile: tuple[float, float, float] = (4.0, 14.0, 44.0)
    band_fractions: tuple[float, float, float] = (0.3, 0.4, 0.3)
    noise_fraction: float = 0.2
    preference_sharpness: float = 1.0
    ranking_length: int = 60
    ranking_noise: float = 1.0
    none_language_fraction: float = 0.1
    empty_history_users: int = 0
    empty_text_games: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.n_games < 1 or self.n_users < 1:
            raise ValueError("n_games and n_users must be >= 1")
        for name in ("noise_fraction", "ranking_noise", "none_language_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.preference_sharpness < 0:
            raise ValueError("preference_sharpness must be >= 0")
        if not self.genres or any(g not in INSTRUCTIONS for g in self.genres):
            raise ValueError(f"genres must be drawn from {sorted(INSTRUCTIONS)}")
        if not 1 <= self.ranking_length <= 250:
            raise ValueError("ranking_length must be in [1, 250]")
        if abs(sum(self.band_fractions) - 1.0) > 1e-9:
            raise ValueError("band_fractions must sum to 1")


@dataclass
class GroundTruth:
    genres: tuple[str, ...]
    preferences: dict[str, np.ndarray] = field(default_factory=dict)
    game_genre: dict[str, str] = field(default_factory=dict)
    game_quality: dict[str, float] = field(default_factory=dict)
    user_band: dict[str, int] = field(default_factory=dict)

    def expected_engagement(self, user_id: str, game_id: str) -> float:
        pref = self.preferences[user_id]
        return float(pref[self.genres.index(self.game_genre[game_id])] * self.game_quality[game_id])

    def records(self) -> list[dict]:
        out = [
            {"user_id": u, "preference_vector": [round(float(x), 12) for x in p]}
            for u, p in self.preferences.items()
        ]
        out += [
            {"game_id": g, "genre": self.game_genre[g], "quality": round(self.game_quality[g], 12)}
            for g in self.game_genre
        ]
        return out

    @classmethod
    def from_records(cls, records: Sequence[dict], genres: Sequence[str] = DEFAULT_GENRES) -> GroundTruth:
        gt = cls(tuple(genres))
        for rec in records:
            if "user_id" in rec:
                gt.preferences[rec["user_id"]] = np.asarray(rec["preference_vector"], dtype=float)
            else:
                gt.game_genre[rec["game_id"]] = rec["genre"]
                gt.game_quality[rec["game_id"]] = float(rec["quality"])
        return gt


def oracle_rerank(candidates: Sequence[str], ground_truth: GroundTruth, user_id: str) -> list[str]:
    """Candidates by true expected engagement, descending; ties keep input order."""
    return sorted(candidates, key=lambda g: -ground_truth.expected_engagement(user_id, g))


def band_length_ranges(means: Sequence[float]) -> list[tuple[int, int]]:
    """Contiguous integer ranges whose midpoints are the requested band means."""
    ranges, lo = [], 1
    for m in means:
        hi = max(lo, int(round(2 * m - lo)))
        ranges.append((lo, hi))
        lo = hi + 1
    return ranges


def _game_text(rng, genre: str, quality: float, polish: bool, noise_fraction: float) -> list[TextElement]:
    source = POLISH[genre] if polish else INSTRUCTIONS[genre]
    instr = [TextElement(str(s), "instruction") for s in rng.choice(source, size=min(len(source), rng.integers(2, 4)), replace=False)]
    bg_pool = POLISH[genre] if polish else BACKGROUNDS[genre]
    bg = [TextElement(str(rng.choice(bg_pool)), "background")]
    n_feat = 1 + int(round(quality * (len(FEATURE_BUTTONS) - 1)))
    buttons = [TextElement(str(s), "button") for s in rng.choice(GENERIC_BUTTONS, size=3, replace=False)]
    buttons += [TextElement(str(s), "button") for s in rng.choice(FEATURE_BUTTONS, size=n_feat, replace=False)]
    promo = [TextElement(str(s), "promo") for s in rng.choice(PROMOS, size=int(rng.integers(0, 3)), replace=False)]
    signal = instr + bg + buttons + promo
    n_noise = int(round(noise_fraction / (1.0 - noise_fraction) * len(signal))) if noise_fraction < 1 else len(signal)
    noise = [TextElement(str(rng.choice(NOISE)), "noise") for _ in range(n_noise)]
    elements = signal + noise
    order = rng.permutation(len(elements))
    return [elements[i] for i in order]


def _title(rng, genre: str) -> str:
    words = [str(rng.choice(TITLE_WORDS)), str(rng.choice(TITLE_NOUNS))]
    if rng.random() < 0.35:
        words.append(TITLE_GENRE[genre])
    if rng.random() < 0.2:
        words.insert(0, "[UPDATE]")
    return " ".join(words)


def generate(spec: SynthSpec) -> tuple[Corpus, GroundTruth]:
    rng = np.random.default_rng(spec.seed)
    genres = spec.genres
    gt = GroundTruth(genres)

    gw = max(5, len(str(spec.n_games)))
    uw = max(4, len(str(spec.n_users)))
    game_ids = [f"g{i:0{gw}d}" for i in range(1, spec.n_games + 1)]
    user_ids = [f"u{i:0{uw}d}" for i in range(1, spec.n_users + 1)]

    genre_idx = rng.integers(0, len(genres), size=spec.n_games)
    quality = rng.beta(2.0, 2.0, size=spec.n_games)
    lang_draw = rng.random(spec.n_games)
    empty_text = set(rng.choice(spec.n_games, size=min(spec.empty_text_games, spec.n_games), replace=False).tolist())

    games = []
    for i, gid in enumerate(game_ids):
        genre = genres[genre_idx[i]]
        gt.game_genre[gid] = genre
        gt.game_quality[gid] = float(quality[i])
        declared = "English"
        polish = False
        if lang_draw[i] < spec.none_language_fraction:
            declared = LANGUAGE_NONE
            polish = lang_draw[i] < spec.none_language_fraction / 2
        text = [] if i in empty_text else _game_text(rng, genre, float(quality[i]), polish, spec.noise_fraction)
        desc = " ".join(str(d) for d in rng.choice(DESCRIPTIONS, size=2, replace=False))
        if rng.random() < 0.3:
            desc = f"A fun {TITLE_GENRE[genre].lower()} game. " + desc
        games.append(GameRecord(gid, _title(rng, genre), desc, declared, tuple(text)))
        if text:
            _check_genre_signal(text, genre)

    # preferences: Dirichlet concentration shrinks as sharpness grows
    for uid in user_ids:
        if spec.preference_sharpness == 0:
            gt.preferences[uid] = np.full(len(genres), 1.0 / len(genres))
        else:
            gt.preferences[uid] = rng.dirichlet(np.full(len(genres), 1.0 / spec.preference_sharpness))

    n = spec.n_users
    c1 = int(round(spec.band_fractions[0] * n))
    c2 = int(round((spec.band_fractions[0] + spec.band_fractions[1]) * n)) - c1
    bands = np.array([0] * c1 + [1] * c2 + [2] * (n - c1 - c2))
    rng.shuffle(bands)
    ranges = band_length_ranges(spec.history_length_profile)
    empty_hist = set(rng.choice(n, size=min(spec.empty_history_users, n), replace=False).tolist())

    genre_of = np.asarray(genre_idx)
    histories, rankings, labels = [], [], []
    for ui, uid in enumerate(user_ids):
        pref = gt.preferences[uid]
        gt.user_band[uid] = int(bands[ui])
        lo, hi = ranges[bands[ui]]
        length = 0 if ui in empty_hist else min(spec.n_games, int(rng.integers(lo, hi + 1)))
        weights = pref[genre_of] + 0.02
        weights = weights / weights.sum()
        entries = []
        if length:
            picked = rng.choice(spec.n_games, size=length, replace=False, p=weights)
            for gi in picked:
                affinity = float(pref[genre_of[gi]])
                sessions = 1 + int(rng.poisson(3.0 * affinity))
                seconds = int(sessions * rng.gamma(2.0, 150.0 * (0.2 + affinity)))
                entries.append(HistoryEntry(game_ids[gi], sessions, seconds))
        histories.append(PlayHistory(uid, tuple(entries)))

        size = min(spec.ranking_length, spec.n_games)
        pool = rng.choice(spec.n_games, size=size, replace=False)
        expected = pref[genre_of[pool]] * quality[pool]
        order = [int(pool[j]) for j in np.argsort(-expected, kind="stable")]
        n_swaps = int(round(spec.ranking_noise * size * size))
        if size > 1:
            for pos in rng.integers(0, size - 1, size=n_swaps):
                order[pos], order[pos + 1] = order[pos + 1], order[pos]
        items = tuple(game_ids[j] for j in order)
        rankings.append(RankingList(uid, items))

        for j in order:
            e = float(pref[genre_of[j]] * quality[j])
            if rng.random() < min(0.95, 0.05 + e):
                seconds = round(float(rng.gamma(2.0, (60.0 + 1800.0 * e) / 2.0)), 1)
                if seconds > 0:
                    labels.append(EngagementLabel(uid, game_ids[j], seconds))

    corpus = build_corpus(games, histories, rankings, labels)
    return corpus, gt


def _check_genre_signal(text: Sequence[TextElement], genre: str) -> None:
    from .llm.mock import DEFAULT_GENRES as LEXICON, _count_phrase

    words = LEXICON.get(genre, (genre,))
    if not any(_count_phrase(e.content.lower(), w) for e in text if e.kind != "noise" for w in words):
        raise AssertionError(f"generated text lacks a {genre} keyword")


def write_synth(corpus: Corpus, gt: GroundTruth, directory: str | Path) -> None:
    directory = Path(directory)
    save_corpus(corpus, directory)
    write_jsonl(directory / "ground_truth.jsonl", gt.records())

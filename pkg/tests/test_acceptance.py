"""Acceptance suite: one verdict line per criterion, printed after the run.

Each test records PASS/FAIL with the measured numbers before asserting, so a
failing criterion still reports what was observed.
"""

from __future__ import annotations

import itertools
import math
import random
import time
from statistics import fmean

import pytest

from gamerank import prompts
from gamerank.cli import main
from gamerank.data import GameProfile, GameRecord, HistoryEntry, PlayHistory, TextElement
from gamerank.evaluation import (
    TOTAL,
    EvalReport,
    ExperimentSpec,
    fmt_pct,
    improvement_pct,
    ndcg_engagement,
    reference_value,
    run_experiment,
    segment_users,
)
from gamerank.llm import AdversarialMockProvider, MockProvider
from gamerank.profiles import (
    ProfileGenerationExhausted,
    ProfileParseError,
    build_profile_prompt,
    generate_profile,
    profile_corpus,
)
from gamerank.rerank import CandidateData, RerankRequest, build_rerank_prompt, make_model
from gamerank.sampling import aggregate
from gamerank.strategy import build_history_context, build_strategy_prompt, strategize_corpus
from gamerank.synth import SynthSpec, generate, oracle_rerank

from .conftest import ACCEPTANCE, GOLDEN


def verdict(key: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[key] = (ok, detail)
    print(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# --- 1: metric oracle ------------------------------------------------------------


def oracle_ndcg(playtimes: list[float], cutoff: int) -> float:
    """Independent reference: relevance and discount written out, Z by exhaustive search."""

    def rel(s):
        return min(10.0, math.log2(1.0 + s / 60.0))

    def dcg(order):
        total = 0.0
        for i, s in enumerate(order, start=1):
            if i > cutoff:
                break
            total += (2.0 ** rel(s) - 1.0) / math.log2(i + 1)
        return total

    z = max(dcg(p) for p in itertools.permutations(playtimes))
    return 0.0 if z == 0 else dcg(playtimes) / z


def test_1_metric_matches_brute_force_oracle():
    rng = random.Random(20240101)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        n = rng.randint(1, 6)
        if rng.random() < 0.5:
            # integer grades 0..5 encoded as playtime
            seconds = [60.0 * (2 ** rng.randint(0, 5) - 1) for _ in range(n)]
        else:
            seconds = [0.0 if rng.random() < 0.3 else rng.uniform(1, 20000) for _ in range(n)]
        ids = [f"g{i}" for i in range(n)]
        labels = dict(zip(ids, seconds))
        cutoff = rng.randint(1, 8)
        got = ndcg_engagement(ids, labels, cutoff=cutoff)
        worst = max(worst, abs(got - oracle_ndcg(seconds, cutoff)))
    elapsed = time.perf_counter() - t0
    verdict("1", worst <= 1e-12 and elapsed < 5.0, f"max |diff| {worst:.2e} over 1000 instances in {elapsed:.2f}s")


# --- 2: metric invariants ----------------------------------------------------------


def test_2_metric_invariants():
    rng = random.Random(7)
    in_range = ones = exchange = 0
    for _ in range(1000):
        n = rng.randint(1, 30)
        ids = [f"g{i}" for i in range(n)]
        labels = {g: 60.0 * (2 ** rng.randint(0, 5) - 1) for g in ids}
        k = rng.randint(1, 30)

        v = ndcg_engagement(ids, labels, cutoff=k)
        in_range += 0.0 <= v <= 1.0

        ordered = sorted(ids, key=lambda g: -labels[g])
        ones += (not any(labels.values())) or ndcg_engagement(ordered, labels, cutoff=k) == 1.0

        # promote a strictly-higher-rel item from j to i (i inside the cutoff)
        pairs = [(i, j) for i in range(min(k, n)) for j in range(i + 1, n) if labels[ids[j]] > labels[ids[i]]]
        if not pairs:
            # list already sorted within the cutoff; start from the ascending order instead
            ids = sorted(ids, key=lambda g: labels[g])
            pairs = [(i, j) for i in range(min(k, n)) for j in range(i + 1, n) if labels[ids[j]] > labels[ids[i]]]
        if not pairs:
            # all relevances equal: no strictly-higher item exists, property is vacuous
            exchange += 1
            continue
        i, j = rng.choice(pairs)
        swapped = list(ids)
        swapped[i], swapped[j] = swapped[j], swapped[i]
        exchange += ndcg_engagement(swapped, labels, cutoff=k) > ndcg_engagement(ids, labels, cutoff=k)
    ok = in_range == ones == exchange == 1000
    verdict("2", ok, f"in [0,1]: {in_range}/1000, sorted=1: {ones}/1000, exchange: {exchange}/1000")


# --- 3: improvement arithmetic -------------------------------------------------------

MODELS = ("baseline_identity", "title", "title_desc", "llm_no_personalization", "llm_personalized")

# (metric, segment): (five model means in column order, printed improvement)
PUBLISHED = {
    ("NDCG@10", "0-30"): ((0.159175, 0.146172, 0.143475, 0.158127, 0.162390), "2.02"),
    ("NDCG@10", "30-70"): ((0.133364, 0.120783, 0.121080, 0.134588, 0.138708), "3.06"),
    ("NDCG@10", "70-100"): ((0.151939, 0.139790, 0.141529, 0.144993, 0.165178), "8.71"),
    ("NDCG@20", "0-30"): ((0.230406, 0.200728, 0.208124, 0.229596, 0.245126), "6.39"),
    ("NDCG@20", "30-70"): ((0.236136, 0.210309, 0.201233, 0.211539, 0.213699), "-9.48"),
    ("NDCG@20", "70-100"): ((0.224884, 0.207583, 0.196265, 0.230626, 0.246512), "6.89"),
    ("NDCG@20", TOTAL): ((0.230475, 0.206207, 0.201874, 0.223920, 0.235112), "2.01"),
    ("NDCG@30", "0-30"): ((0.309881, 0.274296, 0.280023, 0.296377, 0.314573), "1.51"),
    ("NDCG@30", "30-70"): ((0.297410, 0.276287, 0.278835, 0.290023, 0.296514), "-0.30"),
    ("NDCG@30", "70-100"): ((0.306287, 0.265184, 0.261518, 0.284544, 0.316334), "3.28"),
    ("NDCG@30", TOTAL): ((0.304526, 0.271922, 0.273459, 0.290315, 0.309140), "1.51"),
}


def _published_report() -> EvalReport:
    report = EvalReport(models=MODELS)
    for (metric, seg), (values, _) in PUBLISHED.items():
        for model, v in zip(MODELS, values):
            report.cells[(metric, seg, model)] = v
    return report


def test_3a_headline_improvement():
    shown = fmt_pct(improvement_pct(0.148159, 0.155426))
    verdict("3a", shown == "4.90", f"baseline 0.148159 vs proposed 0.155426 renders {shown}%")


def test_3b_published_improvement_cells():
    report = _published_report()
    exact, misses = 0, []
    for (metric, seg), (values, printed) in PUBLISHED.items():
        ref = reference_value(report, metric, seg, "best_other")
        shown = fmt_pct(improvement_pct(ref, report.cells[(metric, seg, "llm_personalized")]))
        if shown == printed:
            exact += 1
        else:
            misses.append(f"{metric}/{seg}: {shown} vs printed {printed}")
    verdict("3b", exact >= 10, f"{exact}/{len(PUBLISHED)} additional cells exact; mismatches: {'; '.join(misses) or 'none'}")


# --- 4: permutation safety under adversarial fuzz -----------------------------------


def test_4_permutation_and_profile_safety(small_synth):
    corpus, _ = small_synth
    profiles = profile_corpus(corpus, MockProvider(), game_ids=sorted(corpus.games)).profiles
    data = CandidateData(corpus.games, profiles)
    game_ids = sorted(corpus.games)
    rng = random.Random(99)
    prov = AdversarialMockProvider(fault_rate=0.8)
    strategies = ["1. Top Priority: obby games.", "adventure and tycoon", "", "simulator pets trading"]

    rerank_cases = rerank_ok = 0
    for case in range(6000):
        k = rng.randint(1, 30)
        cands = rng.sample(game_ids, k)
        kind = rng.choice(("title", "title_desc", "llm_no_personalization", "llm_personalized"))
        out = make_model(kind).rerank("u", cands, data, prov, rng.choice(strategies) or None, seed=case)
        rerank_cases += 1
        rerank_ok += sorted(out.items) == sorted(cands) and len(out.items) == len(cands)

    profile_cases = profile_ok = 0
    for case in range(4000):
        game = corpus.games[rng.choice(game_ids)]
        try:
            res = generate_profile(game, prov, seed=case, retry_cap=rng.randint(1, 3))
            good = isinstance(res.profile, GameProfile)
        except ProfileGenerationExhausted as exc:
            good = isinstance(exc.last, ProfileParseError) and exc.last.kind in ("parse_failure", "schema_failure")
        profile_cases += 1
        profile_ok += good

    faults = sum(v for k, v in prov.faults.items())
    total = rerank_cases + profile_cases
    ok = total >= 10000 and rerank_ok == rerank_cases and profile_ok == profile_cases
    verdict(
        "4",
        ok,
        f"{rerank_ok}/{rerank_cases} rerank outputs are permutations, {profile_ok}/{profile_cases} profile runs "
        f"terminate cleanly; {faults} injected faults",
    )


# --- 5: end-to-end separation --------------------------------------------------------


def _total_avg(corpus, lists: dict[str, list[str]], cutoff: int = 10) -> float:
    seg = segment_users({u: corpus.history(u).history_length for u in corpus.rankings})
    means = []
    for users in seg.values():
        if users:
            means.append(fmean(ndcg_engagement(lists[u], corpus.labels_for(u), cutoff=cutoff) for u in users))
    return fmean(means)


def _pipeline(seed: int):
    t0 = time.perf_counter()
    corpus, gt = generate(SynthSpec(n_users=300, n_games=1000, preference_sharpness=5.0, seed=seed))
    provider = MockProvider()
    profiles = profile_corpus(corpus, provider, seed=seed).profiles
    strategies = {u: s.strategy_text for u, s in strategize_corpus(corpus, profiles, provider, seed=seed).strategies.items()}
    spec = ExperimentSpec(runs=5, seed=seed, models=("baseline_identity", "llm_no_personalization", "llm_personalized"))
    report, _ = run_experiment(corpus, spec, provider, profiles, strategies)
    elapsed = time.perf_counter() - t0
    top = {u: list(r.top_k(spec.slice_k)) for u, r in corpus.rankings.items()}
    oracle = _total_avg(corpus, {u: oracle_rerank(items, gt, u) for u, items in top.items()})
    identity = _total_avg(corpus, top)
    return report, oracle, identity, elapsed


def test_5_end_to_end_separation():
    rows, oracle_ok, pers_wins, slowest = [], 0, 0, 0.0
    for seed in range(5):
        report, oracle, identity, elapsed = _pipeline(seed)
        pers = report.cells[("NDCG@10", TOTAL, "llm_personalized")]
        plain = report.cells[("NDCG@10", TOTAL, "llm_no_personalization")]
        base = report.cells[("NDCG@10", TOTAL, "baseline_identity")]
        assert base == pytest.approx(identity, abs=1e-12)
        oracle_ok += oracle >= identity
        pers_wins += pers > plain
        slowest = max(slowest, elapsed)
        rows.append(f"seed {seed}: oracle {oracle:.3f} id {identity:.3f} pers {pers:.3f} no-pers {plain:.3f}")
    ok = oracle_ok == 5 and pers_wins >= 4 and slowest < 60.0
    verdict(
        "5",
        ok,
        f"oracle>=identity {oracle_ok}/5, personalized>no-pers {pers_wins}/5, slowest pipeline {slowest:.1f}s | "
        + " | ".join(rows),
    )


# --- 6: determinism -----------------------------------------------------------------


def test_6_cli_determinism(tmp_path):
    flags = ["--users", "120", "--games", "400", "--runs", "2", "--seed", "11"]
    outputs = []
    for name in ("a", "b"):
        work = tmp_path / name
        assert main(["run", "--workdir", str(work), *flags]) == 0
        outputs.append(work)
    files = ("profiles.jsonl", "strategies.jsonl", "reranks.jsonl", "report.txt", "eval_cells.jsonl", "curve.csv")
    same = [f for f in files if (outputs[0] / f).read_bytes() == (outputs[1] / f).read_bytes()]
    verdict("6", len(same) == len(files), f"byte-identical: {', '.join(same)} ({len(same)}/{len(files)})")


# --- 7: segmentation fidelity -----------------------------------------------------------


def test_7_segmentation_fidelity():
    targets = (4.0, 14.0, 44.0)
    worst, partition_ok, details = 0.0, True, []
    for seed in range(3):
        corpus, _ = generate(SynthSpec(n_users=300, n_games=1000, seed=seed))
        lengths = {u: corpus.history(u).history_length for u in corpus.users}
        seg = segment_users(lengths)
        members = [u for us in seg.values() for u in us]
        partition_ok &= sorted(members) == sorted(lengths) and len(set(members)) == len(members)
        means = [fmean(lengths[u] for u in seg[b]) for b in seg]
        worst = max(worst, max(abs(m - t) / t for m, t in zip(means, targets)))
        details.append("/".join(f"{m:.1f}" for m in means))
    ok = worst <= 0.20 and partition_ok
    verdict("7", ok, f"segment means {' ; '.join(details)} (worst deviation {worst:.1%}), exact partition: {partition_ok}")


# --- 8: prompt fidelity -----------------------------------------------------------------

P_OBBY = GameProfile(
    game_about="Players climb towers of moving platforms.",
    game_genre="obby",
    suitable_for="kids and teens",
    features="checkpoints, leaderboards",
    includes="seasonal events",
    game_language="English",
    game_scale="forty stages",
)
P_ADV = GameProfile(
    game_about="Explore ruins and dig for treasure.",
    game_genre="adventure",
    suitable_for="all ages",
    features="multiplayer, pets",
    includes="daily rewards",
    game_language="English",
    game_scale="three islands",
)
RAIL = GameRecord(
    "rail01",
    "Kolej",
    "Pociągi",
    "NONE",
    (
        TextElement("Witaj na stacji! Prowadź pociąg i dowieź pasażerów na czas", "instruction"),
        TextElement("Symulator kolei: naprawiaj tory i zwrotnice", "background"),
        TextElement("Kup nową lokomotywę", "button"),
    ),
)


def _rendered() -> dict[str, str]:
    history = PlayHistory("u1", (HistoryEntry("g_obby", 4, 1860), HistoryEntry("g_adv", 1, 95.5)))
    profiles = {"g_obby": P_OBBY, "g_adv": P_ADV}
    request = RerankRequest(
        "u1", ("g_obby", "g_adv"), "profile", "1. Top Priority: adventure games.\n2. High Priority: obby games."
    )
    return {
        "game_profile.txt": build_profile_prompt(RAIL, aggregate(RAIL.in_game_text)),
        "user_strategy.txt": build_strategy_prompt(build_history_context(history, profiles)),
        "rerank.txt": build_rerank_prompt(request, CandidateData({}, profiles)),
    }


def test_8_prompt_fidelity():
    rendered = _rendered()
    matches = [name for name, text in rendered.items() if text == (GOLDEN / name).read_text(encoding="utf-8")]
    markers = prompts.CANDIDATE_START in rendered["rerank.txt"] and prompts.CANDIDATE_END in rendered["rerank.txt"]
    ok = len(matches) == 3 and markers
    verdict("8", ok, f"byte-identical golden prompts: {', '.join(sorted(matches))} ({len(matches)}/3); markers present: {markers}")

"""NDCG Engagement, percentile cohorts, the multi-run experiment driver and reports."""

from __future__ import annotations

import hashlib
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from statistics import fmean
from typing import Iterable, Mapping, Sequence

from .data import Corpus, GameProfile
from .llm import Provider, ProviderError, bounded_map
from .rerank import MODEL_KINDS, CandidateData, RerankedList, make_model

log = logging.getLogger(__name__)

MAPPINGS = ("log_minutes", "raw_seconds", "binary")
DEFAULT_BANDS: tuple[tuple[int, int], ...] = ((0, 30), (30, 70), (70, 100))
DEFAULT_CUTOFFS = (10, 20, 30)
TOTAL = "Total Avg."
PROPOSED = "llm_personalized"
BASELINE = "baseline_identity"


@dataclass(frozen=True)
class RelevanceParams:
    mapping: str = "log_minutes"
    cap: float = 10.0

    def __post_init__(self):
        if self.mapping not in MAPPINGS:
            raise ValueError(f"unknown relevance mapping {self.mapping!r}")
        if self.cap <= 0:
            raise ValueError("relevance cap must be positive")


def relevance(playtime_seconds: float, params: RelevanceParams = RelevanceParams()) -> float:
    if playtime_seconds < 0:
        raise ValueError("playtime must be nonnegative")
    if params.mapping == "binary":
        return 1.0 if playtime_seconds > 0 else 0.0
    if params.mapping == "raw_seconds":
        return float(playtime_seconds)
    return min(params.cap, math.log2(1.0 + playtime_seconds / 60.0))


def dcg(rels: Sequence[float], cutoff: int) -> float:
    return sum((2.0**r - 1.0) / math.log2(i + 2) for i, r in enumerate(rels[:cutoff]))


def ndcg_from_relevances(rels: Sequence[float], cutoff: int) -> float:
    """NDCG of a ranked relevance vector; the ideal is the same multiset sorted descending."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    ideal = dcg(sorted(rels, reverse=True), cutoff)
    if ideal == 0.0:
        return 0.0
    return min(1.0, dcg(rels, cutoff) / ideal)


def ndcg_engagement(
    ranked: Sequence[str],
    labels: Mapping[str, float],
    params: RelevanceParams = RelevanceParams(),
    cutoff: int = 10,
) -> float:
    return ndcg_from_relevances([relevance(labels.get(g, 0.0), params) for g in ranked], cutoff)


def band_label(band: tuple[int, int]) -> str:
    return f"{band[0]}-{band[1]}"


def segment_users(
    history_lengths: Mapping[str, int],
    bands: Sequence[tuple[int, int]] = DEFAULT_BANDS,
) -> dict[tuple[int, int], list[str]]:
    """Nearest-rank percentile bands over history length (ties broken by user id)."""
    _check_bands(bands)
    ordered = sorted(history_lengths, key=lambda u: (history_lengths[u], u))
    n = len(ordered)
    out: dict[tuple[int, int], list[str]] = {tuple(b): [] for b in bands}
    for r, user in enumerate(ordered, start=1):
        pct = 100.0 * r / n
        for lo, hi in bands:
            if lo < pct <= hi:
                out[(lo, hi)].append(user)
                break
    return out


def _check_bands(bands):
    edges = sorted(bands)
    if not edges or edges[0][0] != 0 or edges[-1][1] != 100:
        raise ValueError("bands must cover (0, 100]")
    for (a_lo, a_hi), (b_lo, b_hi) in zip(edges, edges[1:]):
        if a_hi != b_lo:
            raise ValueError("bands must partition (0, 100] without gaps or overlap")


def improvement_pct(reference: float, proposed: float) -> float:
    return 100.0 * (proposed - reference) / reference


def fmt_pct(value: float) -> str:
    return f"{value:.2f}"


# --- experiment --------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    cutoffs: tuple[int, ...] = DEFAULT_CUTOFFS
    segments: tuple[tuple[int, int], ...] = DEFAULT_BANDS
    runs: int = 5
    models: tuple[str, ...] = MODEL_KINDS
    seed: int = 0
    relevance: RelevanceParams = RelevanceParams()
    max_in_flight: int = 8

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.cutoffs or min(self.cutoffs) < 1:
            raise ValueError("cutoffs must be positive")
        _check_bands(self.segments)
        for m in self.models:
            make_model(m)

    def run_seeds(self) -> list[int]:
        return [self.seed + r for r in range(1, self.runs + 1)]

    @property
    def slice_k(self) -> int:
        return max(self.cutoffs)


@dataclass
class RerankRecord:
    user_id: str
    model: str
    run_seed: int
    items: list[str]
    repair_log: list[str]
    input_fingerprint: str = ""

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "model": self.model,
            "run_seed": self.run_seed,
            "items": self.items,
            "repair_log": self.repair_log,
            "input_fingerprint": self.input_fingerprint,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> RerankRecord:
        return cls(
            d["user_id"],
            d["model"],
            int(d["run_seed"]),
            list(d["items"]),
            list(d["repair_log"]),
            d.get("input_fingerprint", ""),
        )


def _input_fingerprint(kind: str, candidates, data: CandidateData, strategy: str | None, provider_name: str) -> str:
    model = make_model(kind)
    provider_name = provider_name if model.uses_llm else ""
    h = hashlib.sha256(f"{kind}\n{provider_name}\n{strategy if model.personalized else ''}\n".encode())
    for gid in candidates:
        h.update(gid.encode() + b"\n")
        if model.representation == "profile" and gid in data.profiles:
            h.update(data.profiles[gid].to_json().encode())
        elif model.representation is not None:
            game = data.games[gid]
            h.update(game.title.encode())
            if model.representation == "title_desc":
                h.update(game.description.encode())
    return h.hexdigest()


def rerank_users(
    corpus: Corpus,
    spec: ExperimentSpec,
    provider: Provider | None,
    profiles: Mapping[str, GameProfile],
    strategies: Mapping[str, str],
    cache: Mapping[tuple[str, str, int], RerankRecord] | None = None,
) -> list[RerankRecord]:
    """Rerank each user's top slice with every model for every run, in a fixed order.

    Records in ``cache`` whose input fingerprint still matches are reused as-is.
    """
    data = CandidateData(corpus.games, profiles)
    users = sorted(corpus.rankings)
    jobs = [(run_seed, kind, user) for run_seed in spec.run_seeds() for kind in spec.models for user in users]
    cache = cache or {}

    def work(job):
        run_seed, kind, user = job
        candidates = corpus.rankings[user].top_k(spec.slice_k)
        strategy = strategies.get(user)
        fp = _input_fingerprint(kind, candidates, data, strategy, getattr(provider, "model_name", ""))
        hit = cache.get((user, kind, run_seed))
        if hit is not None and hit.input_fingerprint == fp:
            return hit
        model = make_model(kind)
        try:
            res = model.rerank(user, candidates, data, provider, strategy, run_seed)
        except ProviderError as exc:
            log.warning("rerank failed for %s/%s: %s; using identity", user, kind, exc)
            res = RerankedList(user, list(candidates), [f"provider_failure_identity:{exc.error_class}"])
        return RerankRecord(user, kind, run_seed, res.items, res.repair_log, fp)

    return bounded_map(work, jobs, spec.max_in_flight)


@dataclass
class EvalReport:
    # (metric, segment label, model) -> mean NDCG over runs
    cells: dict[tuple[str, str, str], float] = field(default_factory=dict)
    per_run: dict[tuple[str, str, str], list[float]] = field(default_factory=dict)
    improvements: dict[tuple[str, str], float] = field(default_factory=dict)
    repair_stats: dict[str, dict[str, float]] = field(default_factory=dict)
    segment_sizes: dict[str, int] = field(default_factory=dict)
    models: tuple[str, ...] = ()
    metrics: tuple[str, ...] = ()
    segments: tuple[str, ...] = ()

    @classmethod
    def from_cells(cls, cells: Iterable[Mapping], meta: Mapping) -> EvalReport:
        report = cls(
            models=tuple(meta["models"]),
            metrics=tuple(meta["metrics"]),
            segments=tuple(meta["segments"]),
            segment_sizes=dict(meta.get("segment_sizes", {})),
            repair_stats=dict(meta.get("repair_stats", {})),
        )
        for c in cells:
            if "improvement_pct" in c:
                report.improvements[(c["metric"], c["segment"])] = c["improvement_pct"]
            else:
                report.cells[(c["metric"], c["segment"], c["model"])] = c["ndcg"]
                if "per_run" in c:
                    report.per_run[(c["metric"], c["segment"], c["model"])] = list(c["per_run"])
        return report

    def meta(self) -> dict:
        return {
            "models": list(self.models),
            "metrics": list(self.metrics),
            "segments": list(self.segments),
            "segment_sizes": self.segment_sizes,
            "repair_stats": self.repair_stats,
        }

    def cell_records(self) -> list[dict]:
        out = []
        for metric in self.metrics:
            for seg in self.segments + (TOTAL,):
                for model in self.models:
                    key = (metric, seg, model)
                    if key in self.cells:
                        rec = {"metric": metric, "segment": seg, "model": model, "ndcg": self.cells[key]}
                        if key in self.per_run:
                            rec["per_run"] = self.per_run[key]
                        out.append(rec)
                if (metric, seg) in self.improvements:
                    out.append(
                        {"metric": metric, "segment": seg, "improvement_pct": self.improvements[(metric, seg)]}
                    )
        return out


def evaluate(
    corpus: Corpus,
    records: Iterable[RerankRecord],
    spec: ExperimentSpec,
    improvement_reference: str = "baseline",
) -> EvalReport:
    records = list(records)
    users = sorted(corpus.rankings)
    lengths = {u: corpus.history(u).history_length for u in users}
    seg_map = segment_users(lengths, spec.segments)
    seg_of = {u: band_label(b) for b, us in seg_map.items() for u in us}
    seg_labels = tuple(band_label(b) for b in spec.segments)
    models = tuple(m for m in spec.models if any(r.model == m for r in records))
    metrics = tuple(f"NDCG@{k}" for k in sorted(spec.cutoffs))

    # (metric, seg, model, run) -> list of user scores
    scores: dict[tuple[str, str, str, int], list[float]] = defaultdict(list)
    for rec in records:
        if rec.user_id not in seg_of:
            continue
        labels = corpus.labels_for(rec.user_id)
        for k in sorted(spec.cutoffs):
            value = ndcg_engagement(rec.items, labels, spec.relevance, k)
            scores[(f"NDCG@{k}", seg_of[rec.user_id], rec.model, rec.run_seed)].append(value)

    report = EvalReport(models=models, metrics=metrics, segments=seg_labels)
    report.segment_sizes = {band_label(b): len(us) for b, us in seg_map.items()}
    run_seeds = sorted({r.run_seed for r in records})
    for metric in metrics:
        for model in models:
            seg_means = []
            for seg in seg_labels:
                runs = [fmean(scores[(metric, seg, model, rs)]) for rs in run_seeds if scores.get((metric, seg, model, rs))]
                if not runs:
                    continue
                report.per_run[(metric, seg, model)] = runs
                report.cells[(metric, seg, model)] = fmean(runs)
                seg_means.append(report.cells[(metric, seg, model)])
            if seg_means:
                report.cells[(metric, TOTAL, model)] = fmean(seg_means)
        for seg in seg_labels + (TOTAL,):
            ref = reference_value(report, metric, seg, improvement_reference)
            prop = report.cells.get((metric, seg, PROPOSED))
            if ref is not None and prop is not None and ref > 0:
                report.improvements[(metric, seg)] = improvement_pct(ref, prop)

    for model in models:
        recs = [r for r in records if r.model == model]
        repaired = sum(1 for r in recs if r.repair_log)
        fallback = sum(1 for r in recs if any(e.startswith(("fallback", "provider_failure")) for e in r.repair_log))
        report.repair_stats[model] = {
            "reranks": len(recs),
            "repaired": repaired,
            "repair_rate": repaired / len(recs) if recs else 0.0,
            "fallbacks": fallback,
        }
    return report


def reference_value(report: EvalReport, metric: str, seg: str, mode: str) -> float | None:
    """Reference for improvement %: the baseline column, or the strongest non-proposed model."""
    if mode == "baseline":
        return report.cells.get((metric, seg, BASELINE))
    if mode == "best_other":
        others = [v for (m, s, model), v in report.cells.items() if m == metric and s == seg and model != PROPOSED]
        return max(others) if others else None
    raise ValueError(f"unknown improvement reference {mode!r}")


def run_experiment(
    corpus: Corpus,
    spec: ExperimentSpec,
    provider: Provider | None,
    profiles: Mapping[str, GameProfile],
    strategies: Mapping[str, str],
    improvement_reference: str = "baseline",
) -> tuple[EvalReport, list[RerankRecord]]:
    records = rerank_users(corpus, spec, provider, profiles, strategies)
    return evaluate(corpus, records, spec, improvement_reference), records


# --- engagement curve ----------------------------------------------------------


def position_engagement_curve(
    ranked_lists: Mapping[str, Sequence[str]] | Iterable[tuple[str, Sequence[str]]],
    labels_by_user: Mapping[str, Mapping[str, float]],
) -> list[tuple[int, float]]:
    """Mean post-exposure playtime at each rank position (1-based) across users."""
    pairs = ranked_lists.items() if isinstance(ranked_lists, Mapping) else ranked_lists
    sums: dict[int, float] = defaultdict(float)
    counts: dict[int, int] = defaultdict(int)
    for user, items in pairs:
        labels = labels_by_user.get(user, {})
        for pos, gid in enumerate(items, start=1):
            sums[pos] += labels.get(gid, 0.0)
            counts[pos] += 1
    return [(pos, sums[pos] / counts[pos]) for pos in sorted(counts)]


def label_sorted(candidates: Sequence[str], labels: Mapping[str, float]) -> list[str]:
    """Candidates in descending label order, stable on ties (the per-user ideal ordering)."""
    return sorted(candidates, key=lambda g: -labels.get(g, 0.0))


# --- rendering ------------------------------------------------------------------


def _rank_marks(values: dict[str, float]) -> dict[str, str]:
    order = sorted(values, key=lambda m: -values[m])
    marks = {}
    if order:
        marks[order[0]] = " (best)"
    if len(order) > 1:
        marks[order[1]] = " (2nd)"
    return marks


def render_table(report: EvalReport) -> str:
    from .rerank import MODEL_LABELS

    headers = ["Metric", "Percentile Range"] + [MODEL_LABELS.get(m, m) for m in report.models] + ["Improvement (%)"]
    rows = []
    for metric in report.metrics:
        for seg in report.segments + (TOTAL,):
            vals = {m: report.cells[(metric, seg, m)] for m in report.models if (metric, seg, m) in report.cells}
            marks = _rank_marks(vals) if len(vals) > 1 else {}
            row = [metric, seg]
            for m in report.models:
                row.append(f"{vals[m]:.6f}{marks.get(m, '')}" if m in vals else "--")
            imp = report.improvements.get((metric, seg))
            row.append(fmt_pct(imp) if imp is not None else "n/a")
            rows.append(row)
    widths = [max(len(str(r[i])) for r in [headers] + rows) for i in range(len(headers))]
    sep = "+".join("-" * (w + 2) for w in widths)
    lines = [" " + " | ".join(h.ljust(w) for h, w in zip(headers, widths)), sep]
    prev = None
    for row in rows:
        if prev is not None and row[0] != prev:
            lines.append(sep)
        lines.append(" " + " | ".join(str(c).ljust(w) for c, w in zip(row, widths)))
        prev = row[0]
    return "\n".join(line.rstrip() for line in lines) + "\n"

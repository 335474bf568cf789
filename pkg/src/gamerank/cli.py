"""Stage-per-command pipeline driver: synth -> profile -> strategize -> rerank -> eval -> report.

All artifacts live in one work directory. Exit codes: 0 ok, 1 usage, 2 data
error, 3 provider error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from .data import CORPUS_FILES, CorpusError, load_corpus_dir, read_jsonl, validate_corpus, write_jsonl
from .evaluation import (
    DEFAULT_CUTOFFS,
    EvalReport,
    ExperimentSpec,
    RelevanceParams,
    RerankRecord,
    evaluate,
    position_engagement_curve,
    render_table,
    rerank_users,
)
from .llm import DEFAULT_MAX_IN_FLIGHT, AdversarialMockProvider, MockProvider, ProviderError, RemoteProvider
from .profiles import DEFAULT_FAILURE_THRESHOLD, ProfileBatchError, ProfileStore, games_to_profile, profile_corpus, text_fingerprint
from .rerank import MODEL_KINDS, make_model
from .sampling import DEFAULT_MAX_PROMPT_TOKENS, TokenBudget
from .strategy import EmptyContextError, StrategyStore, build_history_context, context_fingerprint, strategize_corpus
from .synth import SynthSpec, generate, write_synth

log = logging.getLogger("gamerank")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PROVIDER = 0, 1, 2, 3

PROFILE_STORE = "profiles.jsonl"
STRATEGY_STORE = "strategies.jsonl"
RERANK_STORE = "reranks.jsonl"
EVAL_CELLS = "eval_cells.jsonl"
EVAL_META = "eval_meta.json"
REPORT_TXT = "report.txt"
CURVE_CSV = "curve.csv"


class UsageError(Exception):
    pass


class MissingInputError(Exception):
    def __init__(self, stage: str, path: Path, hint: str):
        super().__init__(f"[{stage}] missing input {path} (run `{hint}` first)")


class StageError(Exception):
    """Data-level failure inside a stage (threshold exceeded and the like)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("values must be positive")
    return values


def _csv_models(text: str) -> tuple[str, ...]:
    models = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in models if m not in MODEL_KINDS]
    if bad or not models:
        raise argparse.ArgumentTypeError(f"unknown model(s) {bad}; choose from {','.join(MODEL_KINDS)}")
    return models


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workdir", type=Path, default=Path("."), help="directory holding all pipeline artifacts")
    common.add_argument("--config", type=Path, help="JSON file whose keys override flag defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    llm = argparse.ArgumentParser(add_help=False)
    llm.add_argument("--provider", choices=("mock", "mock-adversarial", "remote"), default="mock")
    llm.add_argument("--llm-endpoint", help="chat-completion URL for --provider remote")
    llm.add_argument("--llm-model", default="gpt-4o")
    llm.add_argument("--max-in-flight", type=int, default=DEFAULT_MAX_IN_FLIGHT)
    llm.add_argument("--max-attempts", type=int, default=5, help="remote retry cap")

    exp = argparse.ArgumentParser(add_help=False)
    exp.add_argument("--runs", type=int, default=5)
    exp.add_argument("--cutoffs", type=_csv_ints, default=DEFAULT_CUTOFFS)
    exp.add_argument("--models", type=_csv_models, default=MODEL_KINDS)

    ev = argparse.ArgumentParser(add_help=False)
    ev.add_argument("--relevance", choices=("log_minutes", "raw_seconds", "binary"), default="log_minutes")
    ev.add_argument("--relevance-cap", type=float, default=10.0)
    ev.add_argument(
        "--improvement-reference",
        choices=("baseline", "best_other"),
        default="baseline",
        help="column the improvement %% is measured against",
    )

    prof = argparse.ArgumentParser(add_help=False)
    prof.add_argument("--max-prompt-tokens", type=int, default=DEFAULT_MAX_PROMPT_TOKENS)
    prof.add_argument("--retry-cap", type=int, default=3)
    prof.add_argument("--failure-threshold", type=float, default=DEFAULT_FAILURE_THRESHOLD)
    prof.add_argument("--top-k", type=int, default=30, help="ranking slice whose games get profiled")

    strat = argparse.ArgumentParser(add_help=False)
    strat.add_argument(
        "--two-stage-strategy",
        action="store_true",
        help="reserved: separate user-profile and strategy calls (not supported yet)",
    )

    synth = argparse.ArgumentParser(add_help=False)
    synth.add_argument("--users", type=int, default=300)
    synth.add_argument("--games", type=int, default=1000)
    synth.add_argument("--sharpness", type=float, default=5.0, help="preference concentration")
    synth.add_argument("--ranking-length", type=int, default=60)
    synth.add_argument("--ranking-noise", type=float, default=1.0)
    synth.add_argument("--noise-fraction", type=float, default=0.2)

    parser = _Parser(prog="gamerank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common, synth], help="write a synthetic corpus")
    sub.add_parser("profile", parents=[common, llm, prof], help="generate game profiles")
    sub.add_parser("strategize", parents=[common, llm, strat], help="generate user ranking strategies")
    sub.add_parser("rerank", parents=[common, llm, exp], help="rerank top slices with each model")
    sub.add_parser("eval", parents=[common, exp, ev], help="score reranks with NDCG Engagement")
    rep = sub.add_parser("report", parents=[common], help="render the table and engagement curve")
    rep.add_argument("--format", choices=("text", "machine"), default="text")
    sub.add_parser("run", parents=[common, synth, llm, prof, strat, exp, ev], help="all stages in order")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        overrides = json.loads(args.config.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(overrides, dict):
        raise UsageError("config file must hold a JSON object")
    # config replaces defaults; explicit flags still win
    defaults = parser.parse_args([args.command])
    given = {k for k, v in vars(args).items() if getattr(defaults, k, object()) != v}
    for key, value in overrides.items():
        key = key.replace("-", "_")
        if not hasattr(args, key):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if key not in given:
            if key in ("cutoffs",):
                value = tuple(value)
            if key == "models":
                value = _csv_models(",".join(value))
            setattr(args, key, value)
    return args


# --- helpers -------------------------------------------------------------------


def _make_provider(args):
    if args.provider == "mock":
        return MockProvider()
    if args.provider == "mock-adversarial":
        return AdversarialMockProvider()
    if not args.llm_endpoint:
        raise UsageError("--provider remote requires --llm-endpoint")
    return RemoteProvider(args.llm_endpoint, args.llm_model, max_attempts=args.max_attempts)


def _corpus(workdir: Path, stage: str):
    for name in CORPUS_FILES:
        if not (workdir / name).exists():
            raise MissingInputError(stage, workdir / name, "gamerank synth")
    return load_corpus_dir(workdir)


def _current_profiles(corpus, workdir: Path, stage: str, k: int = 30):
    path = workdir / PROFILE_STORE
    if not path.exists():
        raise MissingInputError(stage, path, "gamerank profile")
    store = ProfileStore(path)
    out = {}
    for gid in games_to_profile(corpus, k):
        p = store.get(gid, text_fingerprint(corpus.games[gid]))
        if p is not None:
            out[gid] = p
    return out


def _current_strategies(corpus, profiles, workdir: Path, stage: str) -> dict[str, str]:
    path = workdir / STRATEGY_STORE
    if not path.exists():
        raise MissingInputError(stage, path, "gamerank strategize")
    store = StrategyStore(path)
    out = {}
    for user in corpus.users:
        try:
            ctx = build_history_context(corpus.history(user), profiles)
        except EmptyContextError:
            continue
        text = store.get(user, context_fingerprint(ctx))
        if text is not None:
            out[user] = text
    return out


def _spec(args) -> ExperimentSpec:
    return ExperimentSpec(
        cutoffs=tuple(sorted(set(args.cutoffs))),
        runs=args.runs,
        models=tuple(args.models),
        seed=args.seed,
        relevance=RelevanceParams(getattr(args, "relevance", "log_minutes"), getattr(args, "relevance_cap", 10.0)),
        max_in_flight=getattr(args, "max_in_flight", DEFAULT_MAX_IN_FLIGHT),
    )


# --- commands --------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_games=args.games,
        n_users=args.users,
        preference_sharpness=args.sharpness,
        ranking_length=args.ranking_length,
        ranking_noise=args.ranking_noise,
        noise_fraction=args.noise_fraction,
        seed=args.seed,
    )
    corpus, gt = generate(spec)
    write_synth(corpus, gt, args.workdir)
    log.info("synth: wrote %s to %s", corpus.summary(), args.workdir)
    return EXIT_OK


def cmd_profile(args) -> int:
    corpus = _corpus(args.workdir, "profile")
    for warning in validate_corpus(corpus, args.top_k).warnings[:20]:
        log.warning("validate: %s", warning)
    store = ProfileStore(args.workdir / PROFILE_STORE)
    try:
        res = profile_corpus(
            corpus,
            _make_provider(args),
            store,
            k=args.top_k,
            budget=TokenBudget(args.max_prompt_tokens),
            seed=args.seed,
            retry_cap=args.retry_cap,
            failure_threshold=args.failure_threshold,
            max_in_flight=args.max_in_flight,
        )
    except ProfileBatchError as exc:
        if exc.provider_failures and exc.provider_failures == set(exc.failures):
            raise ProviderError("exhausted_retries", f"[profile] {exc}") from None
        raise StageError(f"[profile] {exc}") from None
    # the store file exists even when everything was cached or nothing needed profiling
    store.path.touch()
    log.info(
        "profile: %d profiles (%d cached, %d provider calls, %d failures)",
        len(res.profiles), res.cache_hits, res.provider_calls, len(res.failures),
    )
    return EXIT_OK


def cmd_strategize(args) -> int:
    if args.two_stage_strategy:
        raise UsageError("--two-stage-strategy is reserved and not supported in this release")
    corpus = _corpus(args.workdir, "strategize")
    profiles = _current_profiles(corpus, args.workdir, "strategize")
    store = StrategyStore(args.workdir / STRATEGY_STORE)
    res = strategize_corpus(corpus, profiles, _make_provider(args), store, args.seed, args.max_in_flight)
    store.path.touch()
    if res.provider_failures and not res.strategies:
        raise ProviderError("exhausted_retries", f"[strategize] provider failed for all {len(res.failures)} users")
    log.info(
        "strategize: %d strategies, %d users without profiled history, %d failures",
        len(res.strategies), len(res.skipped), len(res.failures),
    )
    return EXIT_OK


def cmd_rerank(args) -> int:
    corpus = _corpus(args.workdir, "rerank")
    spec = _spec(args)
    kinds = [make_model(m) for m in spec.models]
    needs_llm = any(m.uses_llm for m in kinds)
    profiles = _current_profiles(corpus, args.workdir, "rerank") if any(m.representation == "profile" for m in kinds) else {}
    strategies = _current_strategies(corpus, profiles, args.workdir, "rerank") if any(m.personalized for m in kinds) else {}
    provider = _make_provider(args) if needs_llm else None

    path = args.workdir / RERANK_STORE
    cache = {}
    if path.exists():
        for _, rec in read_jsonl(path):
            r = RerankRecord.from_dict(rec)
            cache[(r.user_id, r.model, r.run_seed)] = r
    records = rerank_users(corpus, spec, provider, profiles, strategies, cache)
    write_jsonl(path, (r.to_dict() for r in records))
    llm_records = [r for r in records if make_model(r.model).uses_llm]
    failed = [r for r in llm_records if any(e.startswith("provider_failure") for e in r.repair_log)]
    if llm_records and len(failed) == len(llm_records):
        raise ProviderError("exhausted_retries", f"[rerank] provider failed on all {len(failed)} LLM reranks")
    repaired = sum(1 for r in records if r.repair_log)
    log.info("rerank: %d lists written, %d with repairs", len(records), repaired)
    return EXIT_OK


def cmd_eval(args) -> int:
    corpus = _corpus(args.workdir, "eval")
    path = args.workdir / RERANK_STORE
    if not path.exists():
        raise MissingInputError("eval", path, "gamerank rerank")
    records = [RerankRecord.from_dict(rec) for _, rec in read_jsonl(path)]
    present = tuple(m for m in MODEL_KINDS if any(r.model == m for r in records))
    models = tuple(m for m in args.models if m in present) or present
    spec = ExperimentSpec(
        cutoffs=tuple(sorted(set(args.cutoffs))),
        runs=args.runs,
        models=models,
        seed=args.seed,
        relevance=RelevanceParams(args.relevance, args.relevance_cap),
    )
    wanted = set(spec.run_seeds())
    records = [r for r in records if r.run_seed in wanted and r.model in models]
    if not records:
        raise StageError(f"[eval] {path} holds no lists for runs {sorted(wanted)} and models {list(models)}")
    report = evaluate(corpus, records, spec, args.improvement_reference)
    write_jsonl(args.workdir / EVAL_CELLS, report.cell_records())
    meta = report.meta() | {"improvement_reference": args.improvement_reference, "run_seeds": sorted(wanted)}
    (args.workdir / EVAL_META).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("eval: %d cells for models %s", len(report.cells), ",".join(models))
    return EXIT_OK


def cmd_report(args) -> int:
    cells_path, meta_path = args.workdir / EVAL_CELLS, args.workdir / EVAL_META
    for p in (cells_path, meta_path):
        if not p.exists():
            raise MissingInputError("report", p, "gamerank eval")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    cells = [rec for _, rec in read_jsonl(cells_path)]
    if args.format == "machine":
        for rec in cells:
            sys.stdout.write(json.dumps(rec, sort_keys=True) + "\n")
        return EXIT_OK

    report = EvalReport.from_cells(cells, meta)
    for metric in report.metrics:
        for seg in report.segments:
            if not any((metric, seg, m) in report.cells for m in report.models):
                log.warning("report: no cells for %s segment %s; rendered as gaps", metric, seg)
    table = render_table(report)
    (args.workdir / REPORT_TXT).write_text(table, encoding="utf-8")
    sys.stdout.write(table)

    rerank_path = args.workdir / RERANK_STORE
    if rerank_path.exists():
        corpus = _corpus(args.workdir, "report")
        labels = {u: corpus.labels_for(u) for u in corpus.users}
        seeds = set(meta.get("run_seeds", []))
        by_model: dict[str, list] = {}
        for _, rec in read_jsonl(rerank_path):
            if seeds and rec["run_seed"] not in seeds:
                continue
            by_model.setdefault(rec["model"], []).append((rec["user_id"], rec["items"]))
        with open(args.workdir / CURVE_CSV, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["position", "mean_seconds", "model"])
            for model in MODEL_KINDS:
                if model in by_model:
                    for pos, mean in position_engagement_curve(by_model[model], labels):
                        w.writerow([pos, f"{mean:.6f}", model])
    else:
        log.warning("report: %s missing; engagement curve skipped", rerank_path)
    return EXIT_OK


def cmd_run(args) -> int:
    for step in (cmd_synth, cmd_profile, cmd_strategize, cmd_rerank, cmd_eval, cmd_report):
        args.format = "text"
        t0 = time.perf_counter()
        step(args)
        log.info("%s finished in %.1fs", step.__name__[4:], time.perf_counter() - t0)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "profile": cmd_profile,
    "strategize": cmd_strategize,
    "rerank": cmd_rerank,
    "eval": cmd_eval,
    "report": cmd_report,
    "run": cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"gamerank: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command in ("synth", "run"):
        args.workdir.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"gamerank: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MissingInputError, StageError, CorpusError) as exc:
        print(f"gamerank: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ProviderError as exc:
        print(f"gamerank: provider error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except ValueError as exc:
        print(f"gamerank: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

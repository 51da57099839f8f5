"""Batch command-line surface.

Subcommands: index, stats, retrieve, recommend, run, sweep, triples, eval.
Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .corpus import (
    CorpusError,
    LanguageMode,
    corpus_stats,
    load_corpus,
)
from .generator import GeneratorBackendKind, GeneratorError
from .metrics import evaluate_dataset, format_report_table, write_report_jsonl
from .pipeline import (
    AblationMode,
    PipelineConfig,
    RecommendationPipeline,
    config_from_dict,
    format_sweep_table,
    write_run_report,
)
from .retriever import (
    EmbeddingProviderError,
    IndexSnapshotError,
    build_sparse_index,
    load_sparse_index,
    normalize_hit_scores,
    retrieve,
    save_sparse_index,
)
from .selector import SynonymLexicon, build_training_triples, write_triples

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

_MODES = {"space": LanguageMode.SPACE, "character": LanguageMode.CHARACTER}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this CLI reserves 2 for data errors
    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="JSON pipeline config file")
    common.add_argument("--seed", type=int, default=None, help="override the run seed")
    common.add_argument(
        "--ablation",
        choices=[mode.value for mode in AblationMode],
        default=None,
        help="pipeline ablation mode",
    )
    common.add_argument(
        "--backend",
        choices=[kind.value for kind in GeneratorBackendKind],
        default=None,
        help="generator backend",
    )
    return common


def build_parser() -> _Parser:
    common = _common_flags()
    parser = _Parser(prog="hashrag", description="retrieval-augmented hashtag recommendation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", parents=[common], help="print corpus statistics")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--mode", choices=sorted(_MODES), default="space")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("index", parents=[common], help="build and persist a sparse index")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--mode", choices=sorted(_MODES), default="space")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", parents=[common], help="top-N similar pairs for one tweet")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--mode", choices=sorted(_MODES), default="space")
    p.add_argument("--tweet", required=True)
    p.add_argument("--index", type=Path, default=None, help="reuse a persisted sparse index")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("recommend", parents=[common], help="recommend hashtags for one tweet")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--mode", choices=sorted(_MODES), default="space")
    p.add_argument("--tweet", required=True)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("run", parents=[common], help="run a full experiment")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("--mode", choices=sorted(_MODES), default="space")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="sweep the augmented hashtag count k")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("--mode", choices=sorted(_MODES), default="space")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--ks", default="1,3,5,7,9", help="comma-separated k values")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("triples", parents=[common], help="export hard-negative training triples")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--mode", choices=sorted(_MODES), default="space")
    p.add_argument("--lexicon", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_triples)

    p = sub.add_parser("eval", parents=[common], help="score a predictions file against gold")
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--gold", type=Path, required=True, help="gold corpus file")
    p.add_argument("--mode", choices=sorted(_MODES), default="space")
    p.add_argument("--ks", default="1,5", help="comma-separated K values for F1@K")
    p.add_argument("--out", type=Path, default=None, help="optional per-record report file")
    p.set_defaults(func=cmd_eval)

    return parser


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise CorpusError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file is not valid JSON: {exc}") from exc
        config = config_from_dict(data)
    else:
        config = PipelineConfig()
    if args.seed is not None:
        config = replace(
            config,
            rng_seed=args.seed,
            selector=replace(config.selector, rng_seed=args.seed),
        )
    if args.ablation is not None:
        config = replace(config, ablation=AblationMode(args.ablation))
    if args.backend is not None:
        config = replace(
            config, generator=replace(config.generator, backend=GeneratorBackendKind(args.backend))
        )
    return config


def _parse_ks(raw: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(piece) for piece in raw.split(",") if piece.strip())
    except ValueError as exc:
        raise ValueError(f"bad K list {raw!r}") from exc
    if not ks:
        raise ValueError("at least one K value is required")
    return ks


def cmd_stats(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus, _MODES[args.mode])
    stats = corpus_stats(corpus)
    print(f"pairs               {stats.pair_count}")
    print(f"avg hashtags/pair   {stats.avg_hashtags_per_pair:.3f}")
    print(f"avg tweet tokens    {stats.avg_tweet_len_tokens:.3f}")
    print(f"avg hashtag tokens  {stats.avg_hashtag_len_tokens:.3f}")
    return EXIT_OK


def cmd_index(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    corpus = load_corpus(args.corpus, _MODES[args.mode])
    index = build_sparse_index(corpus, config.retriever)
    save_sparse_index(index, config.retriever, args.out)
    print(f"indexed {index.doc_count} pairs -> {args.out}")
    return EXIT_OK


def cmd_retrieve(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    corpus = load_corpus(args.corpus, _MODES[args.mode])
    if args.index is not None:
        index = load_sparse_index(args.index, corpus, config.retriever)
    else:
        index = RecommendationPipeline(corpus, config).index
    hits = retrieve(index, args.tweet, config.retriever)
    if hits:
        normalize_hit_scores(hits)
    for rank, hit in enumerate(hits, start=1):
        tags = "; ".join(hit.pair.hashtags)
        print(f"{rank:>3}  {hit.raw_score:>10.4f}  {hit.normalized_score:>6.4f}  {hit.pair.id}  {tags}")
    if not hits:
        print("no hits")
    return EXIT_OK


def cmd_recommend(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    corpus = load_corpus(args.train, _MODES[args.mode])
    pipeline = RecommendationPipeline(corpus, config)
    for tag in pipeline.recommend(args.tweet):
        print(tag)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    train = load_corpus(args.train, _MODES[args.mode])
    test = load_corpus(args.test, _MODES[args.mode])
    pipeline = RecommendationPipeline(train, config)
    report = pipeline.run_experiment(test, workers=args.workers)
    write_run_report(report, args.out)
    print(format_report_table(report.eval))
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    ks = _parse_ks(args.ks)
    train = load_corpus(args.train, _MODES[args.mode])
    test = load_corpus(args.test, _MODES[args.mode])
    pipeline = RecommendationPipeline(train, config)
    reports = pipeline.sweep_k(test, ks=ks, workers=args.workers)
    for k, report in zip(ks, reports):
        write_run_report(report, Path(args.out) / f"k_{k}")
    print(format_sweep_table(reports))
    return EXIT_OK


def cmd_triples(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    corpus = load_corpus(args.corpus, _MODES[args.mode])
    try:
        lexicon = SynonymLexicon.from_file(args.lexicon)
    except OSError as exc:
        raise CorpusError(f"cannot read lexicon: {exc}") from exc
    triples = build_training_triples(corpus, lexicon, config.selector)
    write_triples(triples, args.out)
    print(f"wrote {len(triples)} triples -> {args.out}")
    return EXIT_OK


def _load_predictions(path: Path) -> list[tuple[str, list[str]]]:
    if not path.exists():
        raise CorpusError(f"predictions file not found: {path}")
    rows: list[tuple[str, list[str]]] = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                record = json.loads(stripped)
                pair_id, tags = record["id"], record["hashtags"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"predictions line {lineno} is malformed") from exc
            if not isinstance(tags, list):
                raise CorpusError(f"predictions line {lineno}: hashtags must be an array")
            rows.append((str(pair_id), [str(tag) for tag in tags]))
    if not rows:
        raise CorpusError(f"predictions file is empty: {path}")
    return rows


def cmd_eval(args: argparse.Namespace) -> int:
    mode = _MODES[args.mode]
    ks = _parse_ks(args.ks)
    predictions = _load_predictions(args.predictions)
    gold_corpus = load_corpus(args.gold, mode)
    gold_by_id = gold_corpus.by_id()
    predicted: list[list[str]] = []
    gold: list[list[str]] = []
    for pair_id, tags in predictions:
        pair = gold_by_id.get(pair_id)
        if pair is None:
            raise CorpusError(f"prediction id {pair_id!r} not present in the gold corpus")
        predicted.append(tags)
        gold.append(list(pair.hashtags))
    report = evaluate_dataset(predicted, gold, ks, mode)
    if args.out is not None:
        write_report_jsonl(report, args.out)
    print(format_report_table(report))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (CorpusError, IndexSnapshotError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GeneratorError, EmbeddingProviderError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, TypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())

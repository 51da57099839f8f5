"""End-to-end orchestration: retrieve, select, generate, evaluate; baseline
and ablation modes, the k-sweep harness, retrieval caching, and run reports."""

from __future__ import annotations

import hashlib
import json
import os
import random
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

from .corpus import Corpus, corpus_digest, hashtag_pool, normalize_hashtag
from .generator import (
    GeneratorBackendKind,
    GeneratorConfig,
    GeneratorError,
    GeneratorExchange,
    PromptVariant,
    build_backend,
    parse_output,
    render_chat_prompt,
    render_input,
)
from .metrics import EvalReport, evaluate_dataset
from .retriever import (
    Embedder,
    EmbeddingProviderError,
    RetrievalHit,
    RetrieverBackend,
    RetrieverConfig,
    build_dense_index,
    build_sparse_index,
    normalize_hit_scores,
    retrieve,
    retriever_config_echo,
)
from .selector import (
    SelectorConfig,
    aggregate_candidates,
    rank_candidates,
    select_top_k,
)

__all__ = [
    "AblationMode",
    "BaselineMode",
    "NO_GENERATOR_TOP_K",
    "PipelineConfig",
    "RecommendationPipeline",
    "RetrievalCache",
    "RunReport",
    "TraceRecord",
    "config_from_dict",
    "config_to_dict",
    "format_sweep_table",
    "run_report_to_dict",
    "write_predictions",
    "write_run_report",
]

# The selector-only ablation always emits a fixed top-4.
NO_GENERATOR_TOP_K = 4


class AblationMode(str, Enum):
    NONE = "none"
    NO_RETRIEVER = "no-retriever"
    NO_SELECTOR = "no-selector"
    NO_GENERATOR = "no-generator"


class BaselineMode(str, Enum):
    NONE = "none"
    RETRIEVAL_TOPK = "retrieval-topk"


@dataclass(frozen=True)
class PipelineConfig:
    retriever: RetrieverConfig = field(default_factory=RetrieverConfig)
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    ablation: AblationMode = AblationMode.NONE
    baseline: BaselineMode = BaselineMode.NONE
    baseline_k: int = 4
    eval_ks: tuple[int, ...] = (1, 5)
    cache_dir: str | None = None
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.ablation is not AblationMode.NONE and self.baseline is not BaselineMode.NONE:
            raise ValueError("ablation and baseline modes are mutually exclusive")
        if self.baseline_k < 1:
            raise ValueError("baseline_k must be >= 1")
        if not self.eval_ks:
            raise ValueError("eval_ks must be non-empty")


def _scrub(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {key: _scrub(val) for key, val in value.items()}
    if isinstance(value, (list, tuple)):
        return [_scrub(item) for item in value]
    return value


def config_to_dict(config: PipelineConfig) -> dict:
    return _scrub(asdict(config))


def config_from_dict(data: dict) -> PipelineConfig:
    """Build a PipelineConfig from a parsed JSON config file."""
    kwargs = dict(data)
    if "retriever" in kwargs:
        sub = dict(kwargs["retriever"])
        if "backend" in sub:
            sub["backend"] = RetrieverBackend(sub["backend"])
        kwargs["retriever"] = RetrieverConfig(**sub)
    if "selector" in kwargs:
        sub = dict(kwargs["selector"])
        if "perturbation_probs" in sub:
            sub["perturbation_probs"] = tuple(sub["perturbation_probs"])
        kwargs["selector"] = SelectorConfig(**sub)
    if "generator" in kwargs:
        sub = dict(kwargs["generator"])
        if "backend" in sub:
            sub["backend"] = GeneratorBackendKind(sub["backend"])
        if "prompt_variant" in sub:
            sub["prompt_variant"] = PromptVariant(sub["prompt_variant"])
        kwargs["generator"] = GeneratorConfig(**sub)
    if "ablation" in kwargs:
        kwargs["ablation"] = AblationMode(kwargs["ablation"])
    if "baseline" in kwargs:
        kwargs["baseline"] = BaselineMode(kwargs["baseline"])
    if "eval_ks" in kwargs:
        kwargs["eval_ks"] = tuple(int(k) for k in kwargs["eval_ks"])
    return PipelineConfig(**kwargs)


class RetrievalCache:
    """File cache of raw retrieval results.

    The directory key covers the corpus digest and retriever config, so a
    parameter or data change can never serve stale results; per-query files
    are keyed by the tweet digest. Corrupt entries are rebuilt and noted.
    """

    def __init__(self, cache_dir: str | Path, corpus_key: str):
        self.root = Path(cache_dir) / corpus_key
        self.root.mkdir(parents=True, exist_ok=True)
        self.hit_count = 0
        self.miss_count = 0
        self.warnings: list[str] = []

    @staticmethod
    def key_for(corpus: Corpus, config: RetrieverConfig) -> str:
        payload = json.dumps(
            {"corpus": corpus_digest(corpus), "retriever": retriever_config_echo(config)},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:32]

    def _path(self, tweet: str) -> Path:
        return self.root / (hashlib.sha256(tweet.encode("utf-8")).hexdigest() + ".json")

    def get(self, tweet: str) -> list[tuple[str, float]] | None:
        path = self._path(tweet)
        if not path.exists():
            self.miss_count += 1
            return None
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            results = [(str(pid), float(score)) for pid, score in data["results"]]
        except (ValueError, KeyError, TypeError):
            self.warnings.append(f"corrupt cache entry rebuilt: {path.name}")
            self.miss_count += 1
            return None
        self.hit_count += 1
        return results

    def put(self, tweet: str, results: list[tuple[str, float]]) -> None:
        path = self._path(tweet)
        payload = json.dumps({"results": [[pid, score] for pid, score in results]})
        fd, tmp_name = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(payload)
            os.replace(tmp_name, path)
        except OSError:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise


@dataclass
class TraceRecord:
    """Everything the pipeline did for one tweet, for inspection and reports."""

    pair_id: str
    tweet: str
    hits: list[dict]
    candidates: list[dict]
    selected: list[str]
    input_sequence: str
    output_sequence: str
    predicted: list[str]


@dataclass
class RunReport:
    config: dict
    metadata: dict
    eval: EvalReport
    traces: list[TraceRecord]
    warnings: list[str]


class RecommendationPipeline:
    """Retrieval index, candidate scorer, and generator wired over a training corpus.

    Immutable after construction; recommend() and run_experiment() are safe
    to call concurrently.
    """

    def __init__(
        self,
        train_corpus: Corpus,
        config: PipelineConfig | None = None,
        backend=None,
        scorer=None,
    ):
        self.config = config or PipelineConfig()
        self.corpus = train_corpus
        self.language_mode = train_corpus.language_mode
        self.embedder = Embedder(train_corpus, self.config.retriever)
        if self.config.retriever.backend is RetrieverBackend.DENSE:
            self.index = build_dense_index(train_corpus, self.config.retriever, self.embedder)
        else:
            self.index = build_sparse_index(train_corpus, self.config.retriever)
        self.scorer = scorer if scorer is not None else self.embedder
        self.backend = backend if backend is not None else build_backend(self.config.generator)
        self.pool = hashtag_pool(train_corpus)
        self._pool_tags = [tag for tag, _ in self.pool]
        self._pool_set = set(self._pool_tags)
        self._pairs_by_id = train_corpus.by_id()
        self.cache: RetrievalCache | None = None
        if self.config.cache_dir:
            self.cache = RetrievalCache(
                self.config.cache_dir,
                RetrievalCache.key_for(train_corpus, self.config.retriever),
            )

    # -- retrieval ---------------------------------------------------------

    def _retrieve_hits(self, tweet: str) -> list[RetrievalHit]:
        if self.cache is not None:
            cached = self.cache.get(tweet)
            if cached is not None:
                return [
                    RetrievalHit(pair=self._pairs_by_id[pid], raw_score=score)
                    for pid, score in cached
                ]
        hits = retrieve(self.index, tweet, self.config.retriever)
        if self.cache is not None:
            self.cache.put(tweet, [(hit.pair.id, hit.raw_score) for hit in hits])
        return hits

    def _hit_order_hashtags(self, hits: list[RetrievalHit]) -> list[str]:
        ordered: list[str] = []
        seen: set[str] = set()
        for hit in hits:
            for raw in hit.pair.hashtags:
                tag = normalize_hashtag(raw, self.language_mode)
                if tag not in seen:
                    seen.add(tag)
                    ordered.append(tag)
        return ordered

    def _draw_pool_tags(self, k: int, rng: random.Random) -> list[str]:
        # uniform draw without replacement over the distinct training hashtags
        return rng.sample(self._pool_tags, min(k, len(self._pool_tags)))

    # -- recommendation ----------------------------------------------------

    def recommend(
        self, tweet: str, top_k: int | None = None, rng: random.Random | None = None
    ) -> list[str]:
        return self.recommend_traced(tweet, top_k=top_k, rng=rng).predicted

    def recommend_traced(
        self,
        tweet: str,
        pair_id: str = "",
        top_k: int | None = None,
        rng: random.Random | None = None,
        preselected: list[str] | None = None,
    ) -> TraceRecord:
        """Run one tweet through the configured mode and record every stage."""
        try:
            return self._recommend_traced(tweet, pair_id, top_k, rng, preselected)
        except (GeneratorError, EmbeddingProviderError) as exc:
            raise type(exc)(f"{exc} [tweet id {pair_id or '<unnamed>'}]") from exc

    def _recommend_traced(
        self,
        tweet: str,
        pair_id: str,
        top_k: int | None,
        rng: random.Random | None,
        preselected: list[str] | None,
    ) -> TraceRecord:
        k = top_k if top_k is not None else self.config.selector.top_k
        if self.config.baseline is BaselineMode.RETRIEVAL_TOPK:
            hits = self._retrieve_hits(tweet)
            predicted = self._baseline_from_hits(hits)
            return TraceRecord(
                pair_id=pair_id,
                tweet=tweet,
                hits=[_hit_dict(hit) for hit in hits],
                candidates=[],
                selected=list(predicted),
                input_sequence="",
                output_sequence="",
                predicted=predicted,
            )

        ablation = self.config.ablation
        hits: list[RetrievalHit] = []
        ranked = []
        if ablation is AblationMode.NO_RETRIEVER:
            if preselected is not None:
                selected = list(preselected)
            else:
                draw_rng = rng if rng is not None else random.Random(self.config.rng_seed)
                selected = self._draw_pool_tags(k, draw_rng)
        else:
            hits = self._retrieve_hits(tweet)
            if ablation is AblationMode.NO_SELECTOR:
                selected = self._hit_order_hashtags(hits)[:k]
            else:
                if hits:
                    normalize_hit_scores(hits)
                    candidates = aggregate_candidates(hits, self.language_mode)
                    ranked = rank_candidates(tweet, candidates, self.scorer)
                if ablation is AblationMode.NO_GENERATOR:
                    predicted = select_top_k(ranked, NO_GENERATOR_TOP_K)
                    return TraceRecord(
                        pair_id=pair_id,
                        tweet=tweet,
                        hits=[_hit_dict(hit) for hit in hits],
                        candidates=[_candidate_dict(c) for c in ranked],
                        selected=list(predicted),
                        input_sequence="",
                        output_sequence="",
                        predicted=predicted,
                    )
                selected = select_top_k(ranked, k)

        exchange = self._generate(tweet, selected)
        return TraceRecord(
            pair_id=pair_id,
            tweet=tweet,
            hits=[_hit_dict(hit) for hit in hits],
            candidates=[_candidate_dict(c) for c in ranked],
            selected=list(selected),
            input_sequence=exchange.input_sequence,
            output_sequence=exchange.output_sequence,
            predicted=exchange.parsed_hashtags,
        )

    def _generate(self, tweet: str, selected: list[str]) -> GeneratorExchange:
        gen = self.config.generator
        if gen.backend is GeneratorBackendKind.CHAT_API:
            retrieved = selected if gen.prompt_variant is PromptVariant.RETRIEVAL_AUGMENTED else None
            rendered = render_chat_prompt(tweet, retrieved, gen)
        else:
            rendered = render_input(tweet, selected, gen)
        output = self.backend.generate(rendered)
        return GeneratorExchange(
            input_sequence=rendered,
            output_sequence=output,
            parsed_hashtags=parse_output(output, gen, self.language_mode),
        )

    # -- baseline ----------------------------------------------------------

    def baseline_retrieval(self, tweet: str) -> list[str]:
        """Retrieval-only baseline: hashtags of the top hits in hit-score order."""
        return self._baseline_from_hits(self._retrieve_hits(tweet))

    def _baseline_from_hits(self, hits: list[RetrievalHit]) -> list[str]:
        tags = [tag for tag in self._hit_order_hashtags(hits) if tag in self._pool_set]
        return tags[: self.config.baseline_k]

    # -- experiments -------------------------------------------------------

    def run_experiment(
        self, test_corpus: Corpus, top_k: int | None = None, workers: int = 1
    ) -> RunReport:
        """Recommend for every test pair and score against its gold hashtags."""
        if not test_corpus.pairs:
            raise ValueError("test corpus is empty")
        if test_corpus.language_mode is not self.language_mode:
            raise ValueError("test and training corpora use different language modes")
        warning_start = len(self.cache.warnings) if self.cache is not None else 0

        preselected: list[list[str]] | None = None
        if self.config.ablation is AblationMode.NO_RETRIEVER:
            # draw sequentially up front so worker scheduling cannot reorder rng use
            k = top_k if top_k is not None else self.config.selector.top_k
            rng = random.Random(self.config.rng_seed)
            preselected = [self._draw_pool_tags(k, rng) for _ in test_corpus.pairs]

        def job(item: tuple[int, object]) -> TraceRecord:
            i, pair = item
            return self.recommend_traced(
                pair.text,
                pair_id=pair.id,
                top_k=top_k,
                preselected=preselected[i] if preselected is not None else None,
            )

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                traces = list(pool.map(job, enumerate(test_corpus.pairs)))
        else:
            traces = [job(item) for item in enumerate(test_corpus.pairs)]

        predicted = [trace.predicted for trace in traces]
        gold = [list(pair.hashtags) for pair in test_corpus.pairs]
        report = evaluate_dataset(predicted, gold, self.config.eval_ks, self.language_mode)

        effective = config_to_dict(self.config)
        if top_k is not None:
            effective["selector"]["top_k"] = top_k
        metadata = {
            "prediction_order": "generation",
            "test_pair_count": len(test_corpus.pairs),
            "train_pair_count": len(self.corpus.pairs),
        }
        if self.cache is not None:
            metadata["cache"] = {"hits": self.cache.hit_count, "misses": self.cache.miss_count}
        warnings = list(self.cache.warnings[warning_start:]) if self.cache is not None else []
        return RunReport(
            config=effective, metadata=metadata, eval=report, traces=traces, warnings=warnings
        )

    def sweep_k(
        self, test_corpus: Corpus, ks: tuple[int, ...] = (1, 3, 5, 7, 9), workers: int = 1
    ) -> list[RunReport]:
        """One experiment per k, sharing this pipeline's index and cache."""
        if not ks:
            raise ValueError("ks must be non-empty")
        return [self.run_experiment(test_corpus, top_k=k, workers=workers) for k in ks]


def _hit_dict(hit: RetrievalHit) -> dict:
    return {
        "id": hit.pair.id,
        "raw_score": hit.raw_score,
        "normalized_score": hit.normalized_score,
    }


def _candidate_dict(candidate) -> dict:
    return {
        "text": candidate.text,
        "frequency": candidate.frequency,
        "tweet_scores": list(candidate.tweet_scores),
        "hashtag_score": candidate.hashtag_score,
        "final_score": candidate.final_score,
    }


def run_report_to_dict(report: RunReport) -> dict:
    return {
        "config": report.config,
        "metadata": report.metadata,
        "summary": {
            "record_count": report.eval.record_count,
            "mean_rouge1": report.eval.mean_rouge1,
            "mean_rouge2": report.eval.mean_rouge2,
            "mean_rougeL": report.eval.mean_rougeL,
            "mean_f1_at": {str(k): v for k, v in report.eval.mean_f1_at.items()},
        },
        "warnings": list(report.warnings),
        "traces": [asdict(trace) for trace in report.traces],
    }


def write_predictions(report: RunReport, path: str | Path) -> None:
    """Line-delimited {"id","hashtags"} records, one per test tweet, input order."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for trace in report.traces:
            record = {"id": trace.pair_id, "hashtags": trace.predicted}
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def write_run_report(report: RunReport, out_dir: str | Path) -> None:
    """Write report.json and predictions.jsonl; no timestamps, so reruns are
    byte-identical."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(run_report_to_dict(report), ensure_ascii=False, sort_keys=True, indent=2)
        + "\n",
        encoding="utf-8",
    )
    write_predictions(report, out / "predictions.jsonl")


def format_sweep_table(reports: list[RunReport]) -> str:
    """Per-k summary rows, one line per report, ready for plotting."""
    ks = sorted({k for report in reports for k in report.eval.mean_f1_at})
    header = ["k", "ROUGE-1", "ROUGE-2", "ROUGE-L"] + [f"F1@{k}" for k in ks]
    lines = ["  ".join(f"{name:>8}" for name in header)]
    for report in reports:
        row = [
            str(report.config["selector"]["top_k"]),
            f"{report.eval.mean_rouge1:.4f}",
            f"{report.eval.mean_rouge2:.4f}",
            f"{report.eval.mean_rougeL:.4f}",
        ] + [f"{report.eval.mean_f1_at.get(k, 0.0):.4f}" for k in ks]
        lines.append("  ".join(f"{value:>8}" for value in row))
    return "\n".join(lines)

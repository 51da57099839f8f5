"""Sparse (BM25) and dense (hashed lexical embedding) retrieval over a corpus."""

from __future__ import annotations

import json
import math
import zlib
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import requests

from .corpus import Corpus, LanguageMode, TweetHashtagPair, tokenize

__all__ = [
    "DenseIndex",
    "Embedder",
    "EmbeddingProviderError",
    "EmbeddingVector",
    "ExternalEmbeddingProvider",
    "IndexSnapshotError",
    "RetrievalHit",
    "RetrieverBackend",
    "RetrieverConfig",
    "SparseIndex",
    "bm25_idf",
    "bm25_score",
    "build_dense_index",
    "build_sparse_index",
    "cosine_similarity",
    "feature_bucket",
    "load_sparse_index",
    "normalize_hit_scores",
    "retrieve",
    "retriever_config_echo",
    "save_sparse_index",
]

SNAPSHOT_VERSION = 1


class RetrieverBackend(str, Enum):
    SPARSE = "sparse"
    DENSE = "dense"


class EmbeddingProviderError(RuntimeError):
    """An external embedding endpoint was unreachable or returned bad data."""


class IndexSnapshotError(ValueError):
    """A persisted index cannot be used with the given corpus or config."""


@dataclass(frozen=True)
class RetrieverConfig:
    top_n: int = 10
    backend: RetrieverBackend = RetrieverBackend.SPARSE
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    embed_dim: int = 512

    def __post_init__(self) -> None:
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if not 0.0 <= self.bm25_b <= 1.0:
            raise ValueError("bm25_b must lie in [0, 1]")
        if self.embed_dim < 8:
            raise ValueError("embed_dim must be >= 8")


@dataclass
class SparseIndex:
    """Inverted index: token -> [(doc ordinal, term frequency)], plus length stats."""

    corpus: Corpus
    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: list[int]
    avg_doc_length: float
    doc_count: int


@dataclass
class RetrievalHit:
    """One retrieved pair with its raw tweet-to-tweet similarity score.

    normalized_score stays None until normalize_hit_scores maps the hit
    list onto [0, 1].
    """

    pair: TweetHashtagPair
    raw_score: float
    normalized_score: float | None = None


@dataclass
class EmbeddingVector:
    """Unit-norm feature vector; all-zeros (flagged) when a text has no features."""

    values: np.ndarray
    is_zero: bool = False


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.is_zero or b.is_zero:
        return 0.0
    return float(np.dot(a.values, b.values))


def build_sparse_index(corpus: Corpus, config: RetrieverConfig) -> SparseIndex:
    """Tokenize every corpus tweet and build postings and length statistics."""
    if not corpus.pairs:
        raise ValueError("cannot index an empty corpus")
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths: list[int] = []
    for ordinal, pair in enumerate(corpus.pairs):
        tokens = tokenize(pair.text, corpus.language_mode)
        doc_lengths.append(len(tokens))
        for token, tf in Counter(tokens).items():
            postings.setdefault(token, []).append((ordinal, tf))
    doc_count = len(doc_lengths)
    return SparseIndex(
        corpus=corpus,
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths) / doc_count,
        doc_count=doc_count,
    )


def bm25_idf(index: SparseIndex, token: str) -> float:
    # ln(1 + (N - df + 0.5) / (df + 0.5)): non-negative for any df <= N
    df = len(index.postings.get(token, ()))
    return math.log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))


def bm25_score(
    index: SparseIndex, query_tokens: list[str], doc: int, config: RetrieverConfig
) -> float:
    """Okapi BM25 score of one document against a tokenized query."""
    if not 0 <= doc < index.doc_count:
        raise IndexError(f"doc ordinal {doc} out of range")
    norm = config.bm25_k1 * (
        1.0 - config.bm25_b + config.bm25_b * index.doc_lengths[doc] / index.avg_doc_length
    )
    score = 0.0
    for token in query_tokens:
        tf = _term_frequency(index, token, doc)
        if tf == 0:
            continue
        score += bm25_idf(index, token) * tf * (config.bm25_k1 + 1.0) / (tf + norm)
    return score


def _term_frequency(index: SparseIndex, token: str, doc: int) -> int:
    for ordinal, tf in index.postings.get(token, ()):
        if ordinal == doc:
            return tf
        if ordinal > doc:  # postings are ordinal-sorted by construction
            return 0
    return 0


class Embedder:
    """Deterministic lexical-feature embedder.

    Word unigrams plus character 2-4 grams are hashed into a fixed number of
    buckets, weighted by log(1 + tf) * idf fitted on the corpus, then
    L2-normalized. Serves as a drop-in for a trained sentence encoder while
    keeping every downstream contract testable offline.
    """

    def __init__(self, corpus: Corpus, config: RetrieverConfig):
        self.dim = config.embed_dim
        self.language_mode = corpus.language_mode
        self.doc_count = len(corpus.pairs)
        df: Counter[str] = Counter()
        for pair in corpus.pairs:
            df.update(set(_text_features(pair.text, corpus.language_mode)))
        self._idf = {feature: self._idf_value(count) for feature, count in df.items()}

    def _idf_value(self, df_count: int) -> float:
        return math.log((self.doc_count + 1.0) / (df_count + 1.0)) + 1.0

    def embed(self, text: str) -> EmbeddingVector:
        weights = np.zeros(self.dim)
        for feature, tf in Counter(_text_features(text, self.language_mode)).items():
            idf = self._idf.get(feature)
            if idf is None:
                idf = self._idf_value(0)
            weights[feature_bucket(feature, self.dim)] += math.log1p(tf) * idf
        norm = float(np.linalg.norm(weights))
        if norm == 0.0:
            return EmbeddingVector(values=weights, is_zero=True)
        return EmbeddingVector(values=weights / norm)

    def similarity(self, a: str, b: str) -> float:
        return cosine_similarity(self.embed(a), self.embed(b))


def feature_bucket(feature: str, dim: int) -> int:
    # crc32 rather than hash(): stable across processes regardless of PYTHONHASHSEED
    return zlib.crc32(feature.encode("utf-8")) % dim


def _text_features(text: str, mode: LanguageMode) -> list[str]:
    features = ["w:" + token for token in tokenize(text, mode)]
    squeezed = " ".join(text.lower().split())
    for n in (2, 3, 4):
        features.extend("c:" + squeezed[i : i + n] for i in range(len(squeezed) - n + 1))
    return features


@dataclass
class DenseIndex:
    corpus: Corpus
    embedder: Embedder
    vectors: np.ndarray  # (doc_count, embed_dim); zero rows for featureless docs


def build_dense_index(
    corpus: Corpus, config: RetrieverConfig, embedder: Embedder | None = None
) -> DenseIndex:
    if not corpus.pairs:
        raise ValueError("cannot index an empty corpus")
    embedder = embedder or Embedder(corpus, config)
    vectors = np.zeros((len(corpus.pairs), config.embed_dim))
    for ordinal, pair in enumerate(corpus.pairs):
        vectors[ordinal] = embedder.embed(pair.text).values
    return DenseIndex(corpus=corpus, embedder=embedder, vectors=vectors)


def retrieve(
    index: SparseIndex | DenseIndex, tweet_text: str, config: RetrieverConfig
) -> list[RetrievalHit]:
    """Top-N most similar corpus pairs, raw scores descending, corpus-order ties.

    Sparse scoring drops zero-score documents (no shared tokens means no
    topical evidence); dense scoring is cosine similarity over all documents.
    """
    if isinstance(index, SparseIndex):
        return _retrieve_sparse(index, tweet_text, config)
    return _retrieve_dense(index, tweet_text, config)


def _retrieve_sparse(
    index: SparseIndex, tweet_text: str, config: RetrieverConfig
) -> list[RetrievalHit]:
    query_tokens = tokenize(tweet_text, index.corpus.language_mode)
    scores = [0.0] * index.doc_count
    k1, b = config.bm25_k1, config.bm25_b
    for token in query_tokens:
        posting = index.postings.get(token)
        if not posting:
            continue
        idf = bm25_idf(index, token)
        for ordinal, tf in posting:
            norm = k1 * (1.0 - b + b * index.doc_lengths[ordinal] / index.avg_doc_length)
            scores[ordinal] += idf * tf * (k1 + 1.0) / (tf + norm)
    ranked = sorted(
        (ordinal for ordinal in range(index.doc_count) if scores[ordinal] > 0.0),
        key=lambda ordinal: (-scores[ordinal], ordinal),
    )
    return [
        RetrievalHit(pair=index.corpus.pairs[ordinal], raw_score=scores[ordinal])
        for ordinal in ranked[: config.top_n]
    ]


def _retrieve_dense(
    index: DenseIndex, tweet_text: str, config: RetrieverConfig
) -> list[RetrievalHit]:
    query = index.embedder.embed(tweet_text)
    scores = index.vectors @ query.values if not query.is_zero else np.zeros(len(index.corpus.pairs))
    ranked = sorted(range(len(index.corpus.pairs)), key=lambda ordinal: (-scores[ordinal], ordinal))
    return [
        RetrievalHit(pair=index.corpus.pairs[ordinal], raw_score=float(scores[ordinal]))
        for ordinal in ranked[: config.top_n]
    ]


def normalize_hit_scores(hits: list[RetrievalHit]) -> list[RetrievalHit]:
    """Min-max the raw scores onto [0, 1]; a degenerate range maps to all 1s."""
    if not hits:
        raise ValueError("cannot normalize an empty hit list")
    raw = [hit.raw_score for hit in hits]
    low, high = min(raw), max(raw)
    for hit in hits:
        hit.normalized_score = 1.0 if high == low else (hit.raw_score - low) / (high - low)
    return hits


def retriever_config_echo(config: RetrieverConfig) -> dict:
    return {
        "top_n": config.top_n,
        "backend": config.backend.value,
        "bm25_k1": config.bm25_k1,
        "bm25_b": config.bm25_b,
        "embed_dim": config.embed_dim,
    }


def save_sparse_index(index: SparseIndex, config: RetrieverConfig, path: str | Path) -> None:
    """Persist postings, lengths, and a config echo as a versioned snapshot."""
    snapshot = {
        "version": SNAPSHOT_VERSION,
        "config": retriever_config_echo(config),
        "doc_count": index.doc_count,
        "avg_doc_length": index.avg_doc_length,
        "doc_lengths": list(index.doc_lengths),
        "postings": {
            token: [[ordinal, tf] for ordinal, tf in posting]
            for token, posting in sorted(index.postings.items())
        },
    }
    Path(path).write_text(json.dumps(snapshot, ensure_ascii=False, sort_keys=True), encoding="utf-8")


def load_sparse_index(path: str | Path, corpus: Corpus, config: RetrieverConfig) -> SparseIndex:
    """Reattach a snapshot to its corpus, rejecting version or config mismatches."""
    try:
        snapshot = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IndexSnapshotError(f"unreadable index snapshot {path}: {exc}") from exc
    if snapshot.get("version") != SNAPSHOT_VERSION:
        raise IndexSnapshotError(f"unsupported snapshot version {snapshot.get('version')!r}")
    if snapshot.get("config") != retriever_config_echo(config):
        raise IndexSnapshotError("snapshot was built with a different retriever config")
    if snapshot.get("doc_count") != len(corpus.pairs):
        raise IndexSnapshotError("snapshot doc count does not match the corpus")
    postings = {
        token: [(int(ordinal), int(tf)) for ordinal, tf in posting]
        for token, posting in snapshot["postings"].items()
    }
    return SparseIndex(
        corpus=corpus,
        postings=postings,
        doc_lengths=[int(length) for length in snapshot["doc_lengths"]],
        avg_doc_length=float(snapshot["avg_doc_length"]),
        doc_count=int(snapshot["doc_count"]),
    )


class ExternalEmbeddingProvider:
    """Client for the {"texts": [...]} -> {"vectors": [...]} wire format.

    Returned vectors are validated against the expected dimension and
    L2-normalized before use.
    """

    def __init__(self, endpoint: str, dim: int, timeout: float = 10.0):
        self.endpoint = endpoint
        self.dim = dim
        self.timeout = timeout

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        try:
            response = requests.post(
                self.endpoint, json={"texts": list(texts)}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise EmbeddingProviderError(
                f"embedding provider {self.endpoint} unreachable: {exc}"
            ) from exc
        if response.status_code != 200:
            raise EmbeddingProviderError(
                f"embedding provider {self.endpoint} returned status {response.status_code}"
            )
        try:
            vectors = response.json()["vectors"]
        except (ValueError, KeyError) as exc:
            raise EmbeddingProviderError(
                f"embedding provider {self.endpoint} returned a malformed response"
            ) from exc
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise EmbeddingProviderError(
                f"embedding provider {self.endpoint} returned {len(vectors)} vectors "
                f"for {len(texts)} texts"
            )
        out: list[EmbeddingVector] = []
        for vector in vectors:
            if len(vector) != self.dim:
                raise EmbeddingProviderError(
                    f"embedding provider {self.endpoint} returned dimension "
                    f"{len(vector)}, expected {self.dim}"
                )
            values = np.asarray(vector, dtype=float)
            norm = float(np.linalg.norm(values))
            if norm == 0.0:
                out.append(EmbeddingVector(values=values, is_zero=True))
            else:
                out.append(EmbeddingVector(values=values / norm))
        return out

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]

    def similarity(self, a: str, b: str) -> float:
        vec_a, vec_b = self.embed_batch([a, b])
        return cosine_similarity(vec_a, vec_b)

"""Candidate hashtag aggregation and frequency-magnified re-ranking, plus the
contrastive training utilities: hard-negative perturbation, triple
construction, and the selector loss."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .corpus import Corpus, LanguageMode, normalize_hashtag
from .retriever import RetrievalHit

__all__ = [
    "CandidateHashtag",
    "FREQUENCY_SCALE",
    "HardNegativeTriple",
    "PerturbationKind",
    "SelectorConfig",
    "SynonymLexicon",
    "aggregate_candidates",
    "build_training_triples",
    "candidate_final_score",
    "perturb_hashtag",
    "rank_candidates",
    "select_top_k",
    "selector_loss",
    "selector_similarity",
    "write_triples",
]

# Divisor of the (frequency - 1) magnifier in the final score; fixed, not learned.
FREQUENCY_SCALE = 10.0


class PerturbationKind(str, Enum):
    SYNONYM_REPLACE = "synonym-replace"
    DELETE = "delete"
    SWAP_ADJACENT = "swap-adjacent"
    INSERT_SYNONYM = "insert-synonym"
    IDENTITY = "identity"  # degenerate fallback, excluded from training sets


_KIND_ORDER = (
    PerturbationKind.SYNONYM_REPLACE,
    PerturbationKind.DELETE,
    PerturbationKind.SWAP_ADJACENT,
    PerturbationKind.INSERT_SYNONYM,
)


@dataclass(frozen=True)
class SelectorConfig:
    top_k: int = 7
    temperature: float = 0.05
    perturbation_probs: tuple[float, float, float, float] = (0.7, 0.1, 0.1, 0.1)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if len(self.perturbation_probs) != 4:
            raise ValueError("perturbation_probs needs 4 entries")
        if any(p < 0 for p in self.perturbation_probs):
            raise ValueError("perturbation probabilities must be non-negative")
        if abs(sum(self.perturbation_probs) - 1.0) > 1e-9:
            raise ValueError("perturbation probabilities must sum to 1")


@dataclass
class SynonymLexicon:
    """word -> synonyms map backing the synonym perturbations."""

    entries: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        self.entries = {word: tuple(syns) for word, syns in self.entries.items()}
        for word, syns in self.entries.items():
            if not syns:
                raise ValueError(f"lexicon entry {word!r} has no synonyms")
            if len(syns) == 1 and syns[0] == word:
                raise ValueError(f"lexicon entry {word!r} is its own sole synonym")

    def synonyms(self, word: str) -> list[str]:
        return [syn for syn in self.entries.get(word, ()) if syn != word]

    @classmethod
    def from_file(cls, path: str | Path) -> "SynonymLexicon":
        """Parse ``word<TAB>syn1,syn2,...`` lines."""
        entries: dict[str, tuple[str, ...]] = {}
        with Path(path).open(encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                stripped = line.strip()
                if not stripped:
                    continue
                if "\t" not in stripped:
                    raise ValueError(f"lexicon line {lineno}: expected word<TAB>synonyms")
                word, _, syn_field = stripped.partition("\t")
                syns = tuple(s.strip() for s in syn_field.split(",") if s.strip())
                if not syns:
                    raise ValueError(f"lexicon line {lineno}: no synonyms for {word!r}")
                entries[word.strip()] = syns
        return cls(entries=entries)


@dataclass(frozen=True)
class HardNegativeTriple:
    anchor_tweet: str
    positive: str
    negative: str
    kind: PerturbationKind


def perturb_hashtag(
    hashtag: str,
    lexicon: SynonymLexicon,
    rng: random.Random,
    config: SelectorConfig,
) -> tuple[str, PerturbationKind]:
    """Disturb one randomly chosen token of the hashtag.

    The operation kind is drawn with the configured probabilities
    (synonym-replace / delete / swap-adjacent / insert-synonym). Fallbacks:
    swap or delete on a single-token hashtag becomes synonym-replace; a
    synonym operation on a token without lexicon synonyms becomes delete when
    more than one token remains, otherwise the hashtag comes back unchanged
    with the identity kind.
    """
    tokens = hashtag.split()
    if not tokens:
        raise ValueError("cannot perturb an empty hashtag")
    kind = _draw_kind(rng, config.perturbation_probs)
    position = rng.randrange(len(tokens))
    return _apply_perturbation(tokens, kind, position, lexicon, rng)


def _draw_kind(rng: random.Random, probs: tuple[float, ...]) -> PerturbationKind:
    roll = rng.random()
    cumulative = 0.0
    for kind, prob in zip(_KIND_ORDER, probs):
        cumulative += prob
        if roll < cumulative:
            return kind
    return _KIND_ORDER[-1]


def _apply_perturbation(
    tokens: list[str],
    kind: PerturbationKind,
    position: int,
    lexicon: SynonymLexicon,
    rng: random.Random,
) -> tuple[str, PerturbationKind]:
    if kind in (PerturbationKind.DELETE, PerturbationKind.SWAP_ADJACENT) and len(tokens) == 1:
        kind = PerturbationKind.SYNONYM_REPLACE
    synonyms: list[str] = []
    if kind in (PerturbationKind.SYNONYM_REPLACE, PerturbationKind.INSERT_SYNONYM):
        synonyms = lexicon.synonyms(tokens[position])
        if not synonyms:
            if len(tokens) > 1:
                kind = PerturbationKind.DELETE
            else:
                return " ".join(tokens), PerturbationKind.IDENTITY
    out = list(tokens)
    if kind is PerturbationKind.SYNONYM_REPLACE:
        out[position] = rng.choice(synonyms)
    elif kind is PerturbationKind.INSERT_SYNONYM:
        out.insert(position + 1, rng.choice(synonyms))
    elif kind is PerturbationKind.DELETE:
        del out[position]
    else:  # swap with the next token, or the previous one at the end
        other = position + 1 if position + 1 < len(out) else position - 1
        out[position], out[other] = out[other], out[position]
    return " ".join(out), kind


def build_training_triples(
    corpus: Corpus, lexicon: SynonymLexicon, config: SelectorConfig
) -> list[HardNegativeTriple]:
    """One (tweet, hashtag, perturbed hashtag) triple per labeled occurrence.

    Deterministic for a fixed rng_seed. Degenerate perturbations (identity
    fallback, or a disturbance that reproduced the original) are dropped.
    """
    rng = random.Random(config.rng_seed)
    triples: list[HardNegativeTriple] = []
    for pair in corpus.pairs:
        for tag in pair.hashtags:
            negative, kind = perturb_hashtag(tag, lexicon, rng, config)
            if kind is PerturbationKind.IDENTITY or negative == tag:
                continue
            triples.append(
                HardNegativeTriple(anchor_tweet=pair.text, positive=tag, negative=negative, kind=kind)
            )
    return triples


def write_triples(triples: list[HardNegativeTriple], path: str | Path) -> None:
    """Export as line-delimited {"anchor","positive","negative","kind"} records."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for triple in triples:
            record = {
                "anchor": triple.anchor_tweet,
                "positive": triple.positive,
                "negative": triple.negative,
                "kind": triple.kind.value,
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def selector_similarity(tweet: str, hashtag: str, scorer) -> float:
    """Tweet-to-hashtag similarity under a pluggable provider.

    The provider exposes similarity(a, b); the built-in embedder and the
    external wire-format client both qualify. Provider failures propagate.
    """
    return float(scorer.similarity(tweet, hashtag))


def selector_loss(pos_sims, neg_sims, temperature: float) -> float:
    """In-batch contrastive loss over anchor/positive/hard-negative similarities.

    pos_sims[i][j] is the similarity between anchor i and positive j;
    neg_sims[i][j] between anchor i and negative j. Each anchor is scored on
    its own positive (the diagonal) against every positive and negative in
    the batch. Evaluated with a max shift so small temperatures stay finite.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    pos = np.asarray(pos_sims, dtype=float)
    neg = np.asarray(neg_sims, dtype=float)
    if pos.ndim != 2 or pos.shape[0] != pos.shape[1] or pos.shape[0] < 1:
        raise ValueError("pos_sims must be a non-empty square batch matrix")
    if neg.shape != pos.shape:
        raise ValueError("neg_sims must match pos_sims in shape")
    logits = np.concatenate([pos, neg], axis=1) / temperature
    shift = logits.max(axis=1, keepdims=True)
    log_denominator = shift[:, 0] + np.log(np.exp(logits - shift).sum(axis=1))
    losses = log_denominator - np.diag(pos) / temperature
    return float(losses.mean())


@dataclass
class CandidateHashtag:
    """A retrieved hashtag merged by canonical form across hits.

    frequency counts contributing hits; tweet_scores holds each contributing
    hit's normalized tweet similarity; hashtag_score and final_score stay
    None until rank_candidates fills them.
    """

    text: str
    frequency: int
    tweet_scores: list[float]
    hashtag_score: float | None = None
    final_score: float | None = None


def aggregate_candidates(
    hits: list[RetrievalHit], language_mode: LanguageMode = LanguageMode.SPACE
) -> list[CandidateHashtag]:
    """Merge retrieved hashtags by canonical form, recording per-hit scores.

    A hashtag appearing in a hit contributes that hit's normalized score once
    (duplicates inside one hit's tag list count once). Output preserves
    first-seen order.
    """
    merged: dict[str, CandidateHashtag] = {}
    for hit in hits:
        if hit.normalized_score is None:
            raise ValueError("hits must carry normalized scores before aggregation")
        seen_in_hit: set[str] = set()
        for raw in hit.pair.hashtags:
            text = normalize_hashtag(raw, language_mode)
            if text in seen_in_hit:
                continue
            seen_in_hit.add(text)
            candidate = merged.get(text)
            if candidate is None:
                merged[text] = CandidateHashtag(
                    text=text, frequency=1, tweet_scores=[hit.normalized_score]
                )
            else:
                candidate.frequency += 1
                candidate.tweet_scores.append(hit.normalized_score)
    return list(merged.values())


def candidate_final_score(mean_tweet_score: float, hashtag_score: float, frequency: int) -> float:
    return (mean_tweet_score + hashtag_score) * (1.0 + (frequency - 1) / FREQUENCY_SCALE)


def rank_candidates(
    tweet: str, candidates: list[CandidateHashtag], scorer
) -> list[CandidateHashtag]:
    """Score candidates and sort them best-first.

    final = (mean tweet similarity + tweet-hashtag similarity) magnified by
    1 + (frequency - 1) / 10. Ties break by frequency descending, then
    hashtag text, so equal scores still order deterministically.
    """
    for candidate in candidates:
        candidate.hashtag_score = selector_similarity(tweet, candidate.text, scorer)
        mean_score = sum(candidate.tweet_scores) / len(candidate.tweet_scores)
        candidate.final_score = candidate_final_score(
            mean_score, candidate.hashtag_score, candidate.frequency
        )
    return sorted(candidates, key=lambda c: (-c.final_score, -c.frequency, c.text))


def select_top_k(ranked: list[CandidateHashtag], k: int) -> list[str]:
    """First min(k, available) hashtag texts, order preserved."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return [candidate.text for candidate in ranked[:k]]

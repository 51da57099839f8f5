"""Tweet-hashtag corpus loading, tokenization, and summary statistics."""

from __future__ import annotations

import hashlib
import json
import string
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

__all__ = [
    "CorpusError",
    "Corpus",
    "CorpusStats",
    "LanguageMode",
    "TweetHashtagPair",
    "corpus_digest",
    "corpus_stats",
    "hashtag_pool",
    "load_corpus",
    "normalize_hashtag",
    "save_corpus",
    "tokenize",
]

_ASCII_LETTERS = frozenset(string.ascii_letters)


class LanguageMode(str, Enum):
    """How text splits into tokens: on whitespace, or per code point."""

    SPACE = "space"
    CHARACTER = "character"


class CorpusError(ValueError):
    """Malformed, duplicated, or empty corpus data."""


@dataclass
class TweetHashtagPair:
    """One labeled item: a tweet body plus its gold hashtags (no leading '#')."""

    id: str
    text: str
    hashtags: tuple[str, ...]

    def __post_init__(self) -> None:
        self.hashtags = tuple(self.hashtags)
        if not self.id:
            raise CorpusError("pair id must be non-empty")
        if not self.text.strip():
            raise CorpusError(f"pair {self.id!r} has empty tweet text")
        if any(not tag for tag in self.hashtags):
            raise CorpusError(f"pair {self.id!r} contains an empty hashtag")


@dataclass
class Corpus:
    """An ordered collection of tweet-hashtag pairs with unique ids."""

    pairs: tuple[TweetHashtagPair, ...]
    language_mode: LanguageMode

    def __post_init__(self) -> None:
        self.pairs = tuple(self.pairs)
        seen: set[str] = set()
        for pair in self.pairs:
            if pair.id in seen:
                raise CorpusError(f"duplicate id {pair.id!r}")
            seen.add(pair.id)

    def by_id(self) -> dict[str, TweetHashtagPair]:
        return {pair.id: pair for pair in self.pairs}


@dataclass
class CorpusStats:
    pair_count: int
    avg_hashtags_per_pair: float
    avg_tweet_len_tokens: float
    avg_hashtag_len_tokens: float


def tokenize(text: str, language_mode: LanguageMode = LanguageMode.SPACE) -> list[str]:
    """Split text into matching tokens.

    Space mode lowercases, splits on whitespace, and strips punctuation from
    token edges. Character mode emits one token per non-whitespace code
    point, except that runs of ASCII letters stay joined.
    """
    if language_mode is LanguageMode.SPACE:
        tokens = []
        for raw in text.lower().split():
            token = _strip_edge_punctuation(raw)
            if token:
                tokens.append(token)
        return tokens
    return _tokenize_characters(text)


def _strip_edge_punctuation(token: str) -> str:
    start, end = 0, len(token)
    while start < end and not token[start].isalnum():
        start += 1
    while end > start and not token[end - 1].isalnum():
        end -= 1
    return token[start:end]


def _tokenize_characters(text: str) -> list[str]:
    tokens: list[str] = []
    run: list[str] = []
    for ch in text:
        if ch in _ASCII_LETTERS:
            run.append(ch)
            continue
        if run:
            tokens.append("".join(run))
            run = []
        if not ch.isspace():
            tokens.append(ch)
    if run:
        tokens.append("".join(run))
    return tokens


def normalize_hashtag(raw: str, language_mode: LanguageMode = LanguageMode.SPACE) -> str:
    """Canonical hashtag form used for merging, pooling, and metric matching.

    Trims, drops one leading '#', lowercases in space mode, and collapses
    internal whitespace. Raises CorpusError when nothing is left.
    """
    tag = raw.strip()
    if tag.startswith("#"):
        tag = tag[1:]
    if language_mode is LanguageMode.SPACE:
        tag = tag.lower()
    tag = " ".join(tag.split())
    if not tag:
        raise CorpusError("empty hashtag")
    return tag


def load_corpus(path: str | Path, language_mode: LanguageMode = LanguageMode.SPACE) -> Corpus:
    """Load a line-delimited corpus file.

    Two record formats are accepted, decided per line: a JSON object with
    ``id``, ``text``, and ``hashtags`` fields, or ``id<TAB>text<TAB>tag1;tag2``.
    Hashtags are stored with the leading '#' and surrounding whitespace
    stripped. File order is preserved.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    pairs: list[TweetHashtagPair] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            pair_id, text, tags = _parse_record(stripped, lineno)
            if pair_id in seen:
                raise CorpusError(f"duplicate id {pair_id!r} at line {lineno}")
            seen.add(pair_id)
            pairs.append(_build_pair(pair_id, text, tags, lineno))
    if not pairs:
        raise CorpusError(f"corpus file is empty: {path}")
    return Corpus(pairs=tuple(pairs), language_mode=language_mode)


def _parse_record(line: str, lineno: int) -> tuple[str, str, list[str]]:
    if line.startswith("{"):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {lineno}: invalid JSON record ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise CorpusError(f"line {lineno}: record must be a JSON object")
        missing = {"id", "text", "hashtags"} - record.keys()
        if missing:
            raise CorpusError(f"line {lineno}: record missing fields {sorted(missing)}")
        pair_id, text, tags = record["id"], record["text"], record["hashtags"]
        if (
            not isinstance(pair_id, str)
            or not isinstance(text, str)
            or not isinstance(tags, list)
            or any(not isinstance(tag, str) for tag in tags)
        ):
            raise CorpusError(f"line {lineno}: id/text must be strings, hashtags a string array")
        return pair_id, text, list(tags)
    if "\t" in line:
        columns = line.split("\t")
        if len(columns) != 3:
            raise CorpusError(f"line {lineno}: expected id<TAB>text<TAB>tag1;tag2;...")
        pair_id, text, tag_field = columns
        tags = [seg.strip() for seg in tag_field.split(";") if seg.strip()]
        return pair_id, text, tags
    raise CorpusError(f"line {lineno}: unrecognized record format")


def _build_pair(pair_id: str, text: str, raw_tags: list[str], lineno: int) -> TweetHashtagPair:
    if not pair_id:
        raise CorpusError(f"line {lineno}: empty id")
    if not text.strip():
        raise CorpusError(f"line {lineno}: empty tweet text")
    tags: list[str] = []
    for raw in raw_tags:
        tag = raw.strip()
        if tag.startswith("#"):
            tag = tag[1:].strip()
        if not tag:
            raise CorpusError(f"line {lineno}: empty hashtag")
        tags.append(tag)
    if not tags:
        raise CorpusError(f"line {lineno}: corpus record has no hashtags")
    return TweetHashtagPair(id=pair_id, text=text, hashtags=tuple(tags))


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Serialize to the JSON-lines record format; load_corpus round-trips it."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for pair in corpus.pairs:
            record = {"id": pair.id, "text": pair.text, "hashtags": list(pair.hashtags)}
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Pair count plus token-level average lengths, via tokenize."""
    if not corpus.pairs:
        raise CorpusError("corpus is empty")
    count = len(corpus.pairs)
    tag_totals = sum(len(pair.hashtags) for pair in corpus.pairs)
    tweet_lengths = [len(tokenize(pair.text, corpus.language_mode)) for pair in corpus.pairs]
    tag_lengths = [
        len(tokenize(tag, corpus.language_mode))
        for pair in corpus.pairs
        for tag in pair.hashtags
    ]
    return CorpusStats(
        pair_count=count,
        avg_hashtags_per_pair=tag_totals / count,
        avg_tweet_len_tokens=sum(tweet_lengths) / count,
        avg_hashtag_len_tokens=sum(tag_lengths) / len(tag_lengths) if tag_lengths else 0.0,
    )


def hashtag_pool(corpus: Corpus) -> list[tuple[str, int]]:
    """All corpus hashtags with occurrence counts, most frequent first.

    Counting happens on canonical forms; ties break lexicographically so the
    pool order is deterministic.
    """
    if not corpus.pairs:
        raise CorpusError("corpus is empty")
    counts: Counter[str] = Counter()
    for pair in corpus.pairs:
        for tag in pair.hashtags:
            counts[normalize_hashtag(tag, corpus.language_mode)] += 1
    return sorted(counts.items(), key=lambda item: (-item[1], item[0]))


def corpus_digest(corpus: Corpus) -> str:
    """Stable content hash, used for cache keys and run provenance."""
    digest = hashlib.sha256()
    digest.update(corpus.language_mode.value.encode("utf-8"))
    for pair in corpus.pairs:
        record = json.dumps([pair.id, pair.text, list(pair.hashtags)], ensure_ascii=False)
        digest.update(record.encode("utf-8"))
    return digest.hexdigest()

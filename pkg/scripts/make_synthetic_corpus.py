#!/usr/bin/env python3
"""Generate a synthetic tweet-hashtag corpus for offline experiments.

Each topic owns a word bank and a small set of hashtags; training tweets
sample their topic's bank, test tweets are fresh samples from the same banks
so retrieval has signal without literal duplicates.

Usage:
  python scripts/make_synthetic_corpus.py --out data/ --train-pairs 200 --test-pairs 40
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

TOPICS = [
    {
        "words": "cloud desktop virtual remote session login workspace stream latency".split(),
        "tags": ["wvd", "citrix", "virtual desktop"],
    },
    {
        "words": "cup final match goal penalty squad keeper stadium crowd".split(),
        "tags": ["world cup", "final"],
    },
    {
        "words": "model training data tokens corpus batch epoch loss metric".split(),
        "tags": ["machine learning", "nlp"],
    },
    {
        "words": "market stocks rally earnings quarter forecast investor trading".split(),
        "tags": ["markets", "earnings"],
    },
    {
        "words": "recipe bread flour oven dough crust bake proof starter".split(),
        "tags": ["baking", "sourdough"],
    },
]

FILLER = "today new just with about more this their still after".split()


def sample_tweet(rng: random.Random, topic: dict) -> str:
    words = rng.choices(topic["words"], k=rng.randint(5, 9))
    words += rng.choices(FILLER, k=rng.randint(1, 3))
    rng.shuffle(words)
    return " ".join(words)


def sample_tags(rng: random.Random, topic: dict) -> list[str]:
    count = rng.randint(1, len(topic["tags"]))
    return rng.sample(topic["tags"], count)


def write_corpus(path: Path, rows: list[tuple[str, str, list[str]]]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for pair_id, text, tags in rows:
            record = {"id": pair_id, "text": text, "hashtags": tags}
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_lexicon(path: Path) -> None:
    entries = {}
    for topic in TOPICS:
        for word in topic["words"]:
            entries[word] = [word + "s", word[::-1]]
    with path.open("w", encoding="utf-8") as handle:
        for word, syns in sorted(entries.items()):
            handle.write(f"{word}\t{', '.join(syns)}\n")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("data"))
    parser.add_argument("--train-pairs", type=int, default=200)
    parser.add_argument("--test-pairs", type=int, default=40)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)

    train_rows = []
    for i in range(args.train_pairs):
        topic = TOPICS[i % len(TOPICS)]
        train_rows.append((f"train{i}", sample_tweet(rng, topic), sample_tags(rng, topic)))
    test_rows = []
    for i in range(args.test_pairs):
        topic = TOPICS[i % len(TOPICS)]
        test_rows.append((f"test{i}", sample_tweet(rng, topic), sample_tags(rng, topic)))

    write_corpus(args.out / "train.jsonl", train_rows)
    write_corpus(args.out / "test.jsonl", test_rows)
    write_lexicon(args.out / "lexicon.tsv")
    print(f"wrote {len(train_rows)} train pairs, {len(test_rows)} test pairs -> {args.out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

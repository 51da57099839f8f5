#!/usr/bin/env python3
"""Run the full pipeline on a synthetic corpus and print metric tables.

Compares the main configuration against every ablation and the retrieval
baseline, then optionally sweeps the number of augmented hashtags k.

Usage:
  python scripts/make_synthetic_corpus.py --out data/
  python scripts/run_synthetic_experiment.py --train data/train.jsonl --test data/test.jsonl --sweep
"""

from __future__ import annotations

import argparse
from dataclasses import replace
from pathlib import Path

from hashrag.corpus import LanguageMode, load_corpus
from hashrag.metrics import format_report_table
from hashrag.pipeline import (
    AblationMode,
    BaselineMode,
    PipelineConfig,
    RecommendationPipeline,
    format_sweep_table,
)
from hashrag.retriever import RetrieverBackend, RetrieverConfig


def run_variant(name: str, train, test, config: PipelineConfig) -> None:
    pipeline = RecommendationPipeline(train, config)
    report = pipeline.run_experiment(test)
    print(f"\n== {name} ==")
    print(format_report_table(report.eval))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train", type=Path, required=True)
    parser.add_argument("--test", type=Path, required=True)
    parser.add_argument("--backend", choices=["sparse", "dense"], default="dense")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--sweep", action="store_true", help="also sweep k over 1,3,5,7,9")
    parser.add_argument("--cache-dir", type=Path, default=None)
    args = parser.parse_args()

    train = load_corpus(args.train, LanguageMode.SPACE)
    test = load_corpus(args.test, LanguageMode.SPACE)
    base = PipelineConfig(
        retriever=RetrieverConfig(backend=RetrieverBackend(args.backend)),
        rng_seed=args.seed,
        cache_dir=str(args.cache_dir) if args.cache_dir else None,
    )

    run_variant("full pipeline (copy generator)", train, test, base)
    for ablation in (
        AblationMode.NO_RETRIEVER,
        AblationMode.NO_SELECTOR,
        AblationMode.NO_GENERATOR,
    ):
        run_variant(f"ablation: {ablation.value}", train, test, replace(base, ablation=ablation))
    run_variant(
        "baseline: retrieval top-k",
        train,
        test,
        replace(base, baseline=BaselineMode.RETRIEVAL_TOPK),
    )

    if args.sweep:
        pipeline = RecommendationPipeline(train, base)
        reports = pipeline.sweep_k(test, ks=(1, 3, 5, 7, 9))
        print("\n== k sweep ==")
        print(format_sweep_table(reports))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

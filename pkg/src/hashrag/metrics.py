"""Overlap metrics for hashtag prediction: n-gram and LCS F-measures over the
joined hashtag token sequence, and set-based F1 at a prediction cutoff."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import CorpusError, LanguageMode, normalize_hashtag, tokenize

__all__ = [
    "EvalRecord",
    "EvalReport",
    "evaluate_dataset",
    "f1_at_k",
    "format_report_table",
    "hashtags_to_sequence",
    "rouge_l",
    "rouge_n",
    "write_report_jsonl",
]


def hashtags_to_sequence(
    tags: Sequence[str], language_mode: LanguageMode = LanguageMode.SPACE
) -> list[str]:
    """Join hashtags in order and tokenize; no separator tokens appear."""
    return tokenize(" ".join(tags), language_mode)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _f_measure(precision: float, recall: float) -> float:
    if precision <= 0.0 or recall <= 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(pred_tokens: Sequence[str], ref_tokens: Sequence[str], n: int) -> float:
    """Clipped n-gram overlap F-measure (harmonic mean of precision/recall)."""
    pred_counts = _ngram_counts(pred_tokens, n)
    ref_counts = _ngram_counts(ref_tokens, n)
    pred_total = sum(pred_counts.values())
    ref_total = sum(ref_counts.values())
    if pred_total == 0 or ref_total == 0:
        return 0.0
    overlap = sum(min(count, ref_counts[gram]) for gram, count in pred_counts.items())
    return _f_measure(overlap / pred_total, overlap / ref_total)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j, other in enumerate(b, start=1):
            if token == other:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(pred_tokens: Sequence[str], ref_tokens: Sequence[str]) -> float:
    """LCS-based F-measure; 1 exactly when the sequences are identical."""
    lcs = _lcs_length(pred_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    return _f_measure(lcs / len(pred_tokens), lcs / len(ref_tokens))


def _canonical_unique(tags: Sequence[str], language_mode: LanguageMode) -> list[str]:
    out: list[str] = []
    seen: set[str] = set()
    for raw in tags:
        try:
            tag = normalize_hashtag(raw, language_mode)
        except CorpusError:
            continue
        if tag not in seen:
            seen.add(tag)
            out.append(tag)
    return out


def f1_at_k(
    predicted: Sequence[str],
    gold: Sequence[str],
    k: int,
    language_mode: LanguageMode = LanguageMode.SPACE,
) -> float:
    """Set-based F1 over the first min(K, available) canonical predictions.

    Precision divides by the number of predictions actually taken (not a
    fixed K), so a single-prediction system scores the same at every K.
    Matching is exact on canonical forms.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    gold_set = set(_canonical_unique(gold, language_mode))
    if not gold_set:
        raise ValueError("gold hashtag list must be non-empty")
    top = _canonical_unique(predicted, language_mode)[:k]
    if not top:
        return 0.0
    hits = sum(1 for tag in top if tag in gold_set)
    if hits == 0:
        return 0.0
    return _f_measure(hits / len(top), hits / len(gold_set))


@dataclass
class EvalRecord:
    predicted: list[str]
    gold: list[str]
    rouge1: float
    rouge2: float
    rougeL: float
    f1_at: dict[int, float]


@dataclass
class EvalReport:
    record_count: int
    mean_rouge1: float
    mean_rouge2: float
    mean_rougeL: float
    mean_f1_at: dict[int, float]
    records: list[EvalRecord]


def evaluate_dataset(
    predicted: Sequence[Sequence[str]],
    gold: Sequence[Sequence[str]],
    ks: Sequence[int] = (1, 5),
    language_mode: LanguageMode = LanguageMode.SPACE,
) -> EvalReport:
    """Per-record overlap metrics plus arithmetic means over the dataset."""
    if len(predicted) != len(gold):
        raise ValueError(
            f"prediction and gold lists differ in length ({len(predicted)} vs {len(gold)})"
        )
    if not predicted:
        raise ValueError("nothing to evaluate")
    if not ks:
        raise ValueError("at least one K value is required")
    records: list[EvalRecord] = []
    for pred_tags, gold_tags in zip(predicted, gold):
        if not gold_tags:
            raise ValueError("every gold hashtag list must be non-empty")
        pred_seq = hashtags_to_sequence(pred_tags, language_mode)
        gold_seq = hashtags_to_sequence(gold_tags, language_mode)
        records.append(
            EvalRecord(
                predicted=list(pred_tags),
                gold=list(gold_tags),
                rouge1=rouge_n(pred_seq, gold_seq, 1),
                rouge2=rouge_n(pred_seq, gold_seq, 2),
                rougeL=rouge_l(pred_seq, gold_seq),
                f1_at={k: f1_at_k(pred_tags, gold_tags, k, language_mode) for k in ks},
            )
        )
    count = len(records)
    return EvalReport(
        record_count=count,
        mean_rouge1=sum(r.rouge1 for r in records) / count,
        mean_rouge2=sum(r.rouge2 for r in records) / count,
        mean_rougeL=sum(r.rougeL for r in records) / count,
        mean_f1_at={k: sum(r.f1_at[k] for r in records) / count for k in ks},
        records=records,
    )


def write_report_jsonl(report: EvalReport, path: str | Path) -> None:
    """Per-record rows followed by one summary row, line-delimited JSON."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for i, record in enumerate(report.records):
            row = {
                "record": i,
                "predicted": record.predicted,
                "gold": record.gold,
                "rouge1": record.rouge1,
                "rouge2": record.rouge2,
                "rougeL": record.rougeL,
                "f1_at": {str(k): v for k, v in record.f1_at.items()},
            }
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
        summary = {
            "summary": {
                "record_count": report.record_count,
                "mean_rouge1": report.mean_rouge1,
                "mean_rouge2": report.mean_rouge2,
                "mean_rougeL": report.mean_rougeL,
                "mean_f1_at": {str(k): v for k, v in report.mean_f1_at.items()},
            }
        }
        handle.write(json.dumps(summary, ensure_ascii=False, sort_keys=True) + "\n")


def format_report_table(report: EvalReport) -> str:
    """Fixed-width metric table for terminals."""
    rows = [
        ("records", f"{report.record_count}"),
        ("ROUGE-1", f"{report.mean_rouge1:.4f}"),
        ("ROUGE-2", f"{report.mean_rouge2:.4f}"),
        ("ROUGE-L", f"{report.mean_rougeL:.4f}"),
    ]
    for k in sorted(report.mean_f1_at):
        rows.append((f"F1@{k}", f"{report.mean_f1_at[k]:.4f}"))
    width = max(len(name) for name, _ in rows)
    lines = [f"{'metric':<{width}}  {'value':>10}", f"{'-' * width}  {'-' * 10}"]
    lines.extend(f"{name:<{width}}  {value:>10}" for name, value in rows)
    return "\n".join(lines)

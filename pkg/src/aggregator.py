"""
Aggregator module for the ASR evaluation harness.

This module turns per-utterance error counts into corpus-level scores and
bootstrap confidence intervals.

Global aggregation sums integer counts over all utterances and divides once
at the end, which avoids the bias of averaging per-utterance ratios.

Bootstrap resampling draws whole utterances (their count tuples move
together) with replacement. Resample b of a run with seed s uses its own
PCG64 stream seeded from numpy.random.SeedSequence(entropy=s,
spawn_key=(b, attempt)); every raw 64-bit output x maps to the index
((x >> 32) * n) >> 32 over the n utterances sorted by sample_id. A resample
without reference units is redrawn with attempt + 1. Because every resample
owns its stream, results do not depend on worker count or evaluation order.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .aligner import AlignedPair, ErrorCounts, percentage
from .exceptions import AggregateUndefinedError


logger = logging.getLogger(__name__)


METRIC_WER = "WER"
METRIC_CER = "CER"
METRICS = (METRIC_WER, METRIC_CER)

METHOD_PERCENTILE = "percentile"

DEFAULT_RESAMPLES = 1000
DEFAULT_SEED = 42

# Nearest-rank bounds of the 95% interval, in permille of the resample count
LOW_PERMILLE = 25
HIGH_PERMILLE = 975

_SHIFT = np.uint64(32)


@dataclass(frozen=True)
class GlobalScore:
    """
    Corpus-level scores. Percentages are of reference words (or characters
    for the cer_* fields), stored at full precision.

    Attributes:
        wer_pct: 100 * (S+I+D) / N over words
        cer_pct: 100 * (S+I+D) / N over characters
        sub_pct, ins_pct, del_pct: Word-level decomposition of wer_pct
        cer_sub_pct, cer_ins_pct, cer_del_pct: Character-level decomposition
        word_totals: Summed word-level counts
        char_totals: Summed character-level counts
        utterance_count: Number of aggregated utterances
    """
    wer_pct: float
    cer_pct: float
    sub_pct: float
    ins_pct: float
    del_pct: float
    cer_sub_pct: float
    cer_ins_pct: float
    cer_del_pct: float
    word_totals: ErrorCounts
    char_totals: ErrorCounts
    utterance_count: int

    @property
    def total_ref_words(self) -> int:
        return self.word_totals.n_ref

    @property
    def total_ref_chars(self) -> int:
        return self.char_totals.n_ref

    def to_dict(self) -> Dict[str, Any]:
        return {
            'wer_pct': self.wer_pct,
            'cer_pct': self.cer_pct,
            'sub_pct': self.sub_pct,
            'ins_pct': self.ins_pct,
            'del_pct': self.del_pct,
            'cer_sub_pct': self.cer_sub_pct,
            'cer_ins_pct': self.cer_ins_pct,
            'cer_del_pct': self.cer_del_pct,
            'total_ref_words': self.total_ref_words,
            'total_ref_chars': self.total_ref_chars,
            'utterance_count': self.utterance_count,
            'word_counts': self.word_totals.to_dict(),
            'char_counts': self.char_totals.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GlobalScore':
        return cls(
            wer_pct=float(data['wer_pct']),
            cer_pct=float(data['cer_pct']),
            sub_pct=float(data['sub_pct']),
            ins_pct=float(data['ins_pct']),
            del_pct=float(data['del_pct']),
            cer_sub_pct=float(data['cer_sub_pct']),
            cer_ins_pct=float(data['cer_ins_pct']),
            cer_del_pct=float(data['cer_del_pct']),
            word_totals=ErrorCounts.from_dict(data['word_counts']),
            char_totals=ErrorCounts.from_dict(data['char_counts']),
            utterance_count=int(data['utterance_count']),
        )


@dataclass(frozen=True)
class BootstrapCI:
    """
    Percentile bootstrap interval for one metric.

    low_pct <= high_pct always holds; the point estimate may fall outside
    the interval on skewed corpora.

    Attributes:
        metric: 'WER' or 'CER'
        low_pct: 2.5th percentile (nearest rank) of resampled scores
        high_pct: 97.5th percentile (nearest rank) of resampled scores
        resamples: Number of resamples
        seed: Base seed
        method: 'percentile'
        redraws: Resamples redrawn because they had no reference units
    """
    metric: str
    low_pct: float
    high_pct: float
    resamples: int = DEFAULT_RESAMPLES
    seed: int = DEFAULT_SEED
    method: str = METHOD_PERCENTILE
    redraws: int = 0

    @property
    def width_pct(self) -> float:
        return self.high_pct - self.low_pct

    def to_dict(self) -> Dict[str, Any]:
        # redraws belong to run metadata, not to the results schema
        return {
            'low': self.low_pct,
            'high': self.high_pct,
            'resamples': self.resamples,
            'seed': self.seed,
            'method': self.method,
        }

    @classmethod
    def from_dict(cls, metric: str, data: Dict[str, Any]) -> 'BootstrapCI':
        return cls(
            metric=metric,
            low_pct=float(data['low']),
            high_pct=float(data['high']),
            resamples=int(data['resamples']),
            seed=int(data['seed']),
            method=str(data['method']),
        )


def aggregate(pairs: Sequence[AlignedPair]) -> GlobalScore:
    """
    Sum per-utterance counts and divide once.

    Args:
        pairs: Scored utterances, any order

    Returns:
        GlobalScore: Corpus-level scores

    Raises:
        AggregateUndefinedError: No pairs, or no reference words at all
    """
    if not pairs:
        raise AggregateUndefinedError("Cannot aggregate an empty set of utterances")

    words = ErrorCounts()
    chars = ErrorCounts()
    for pair in pairs:
        words = words + pair.word_counts
        chars = chars + pair.char_counts

    if words.n_ref == 0:
        raise AggregateUndefinedError(
            f"All {len(pairs)} references are empty; WER is undefined (check the manifest)"
        )

    return GlobalScore(
        wer_pct=percentage(words.errors, words.n_ref),
        cer_pct=percentage(chars.errors, chars.n_ref),
        sub_pct=percentage(words.substitutions, words.n_ref),
        ins_pct=percentage(words.insertions, words.n_ref),
        del_pct=percentage(words.deletions, words.n_ref),
        cer_sub_pct=percentage(chars.substitutions, chars.n_ref),
        cer_ins_pct=percentage(chars.insertions, chars.n_ref),
        cer_del_pct=percentage(chars.deletions, chars.n_ref),
        word_totals=words,
        char_totals=chars,
        utterance_count=len(pairs),
    )


def resample_indices(seed: int, resample: int, n: int, attempt: int = 0) -> np.ndarray:
    """
    Utterance indices drawn for one resample.

    Args:
        seed: Base seed (non-negative)
        resample: Resample number b, starting at 1
        n: Number of utterances
        attempt: Redraw counter for resamples without reference units

    Returns:
        np.ndarray: n indices in [0, n), dtype uint64
    """
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(resample, attempt))
    raw = np.random.PCG64(sequence).random_raw(n)
    return ((raw >> _SHIFT) * np.uint64(n)) >> _SHIFT


def nearest_rank(sorted_values: Sequence[float], permille: int) -> float:
    """Nearest-rank percentile: the ceil(p * B)-th smallest value (1-based)."""
    count = len(sorted_values)
    rank = max(1, -(-permille * count // 1000))
    return sorted_values[rank - 1]


def bootstrap_ci(
    pairs: Sequence[AlignedPair],
    metric: str = METRIC_WER,
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = DEFAULT_SEED,
    workers: int = 1
) -> BootstrapCI:
    """
    Percentile bootstrap 95% interval of the global WER or CER.

    Args:
        pairs: Scored utterances, any order (sorted by sample_id internally)
        metric: 'WER' or 'CER'
        resamples: Number of resamples (>= 1)
        seed: Base seed (>= 0)
        workers: Threads evaluating resamples; does not affect the result

    Returns:
        BootstrapCI: Interval bounds and the parameters that produced them

    Raises:
        AggregateUndefinedError: No pairs, or every utterance has n_ref = 0
        ValueError: Unknown metric or resamples < 1
    """
    if metric not in METRICS:
        raise ValueError(f"Unknown metric '{metric}', expected one of {list(METRICS)}")
    if resamples < 1:
        raise ValueError(f"Resamples must be at least 1, got {resamples}")
    if not pairs:
        raise AggregateUndefinedError("Cannot bootstrap an empty set of utterances")

    ordered = sorted(pairs, key=lambda p: p.sample_id)
    level = [p.word_counts if metric == METRIC_WER else p.char_counts for p in ordered]
    errors = np.array([c.errors for c in level], dtype=np.int64)
    n_ref = np.array([c.n_ref for c in level], dtype=np.int64)

    if int(n_ref.sum()) == 0:
        raise AggregateUndefinedError(
            f"Every utterance has zero reference units; {metric} bootstrap is undefined"
        )

    stats = np.empty(resamples, dtype=np.float64)
    redraws = 0

    chunks = _chunk_range(1, resamples, max(1, workers))
    if workers <= 1 or len(chunks) == 1:
        for first, last in chunks:
            redraws += _run_chunk(errors, n_ref, seed, first, last, stats)
    else:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix='bootstrap') as executor:
            futures = {
                executor.submit(_run_chunk, errors, n_ref, seed, first, last, stats): (first, last)
                for first, last in chunks
            }
            for future in as_completed(futures):
                redraws += future.result()

    ordered_stats = np.sort(stats).tolist()
    low = nearest_rank(ordered_stats, LOW_PERMILLE)
    high = nearest_rank(ordered_stats, HIGH_PERMILLE)

    if redraws:
        logger.info(
            f"{metric} bootstrap redrew {redraws} resample(s) without reference units",
            extra={'metric': metric, 'redraws': redraws}
        )

    return BootstrapCI(
        metric=metric,
        low_pct=low,
        high_pct=high,
        resamples=resamples,
        seed=seed,
        method=METHOD_PERCENTILE,
        redraws=redraws,
    )


def _run_chunk(
    errors: np.ndarray,
    n_ref: np.ndarray,
    seed: int,
    first: int,
    last: int,
    out: np.ndarray
) -> int:
    """Fill out[b-1] for resamples first..last; returns the redraw count."""
    n = len(errors)
    redraws = 0
    for b in range(first, last + 1):
        attempt = 0
        while True:
            idx = resample_indices(seed, b, n, attempt)
            total_ref = int(n_ref[idx].sum())
            if total_ref > 0:
                break
            attempt += 1
            redraws += 1
        out[b - 1] = percentage(int(errors[idx].sum()), total_ref)
    return redraws


def _chunk_range(first: int, last: int, parts: int) -> List[Tuple[int, int]]:
    total = last - first + 1
    parts = min(parts, total)
    size, extra = divmod(total, parts)
    chunks = []
    start = first
    for k in range(parts):
        end = start + size - 1 + (1 if k < extra else 0)
        chunks.append((start, end))
        start = end + 1
    return chunks

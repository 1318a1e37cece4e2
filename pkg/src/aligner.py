"""
Aligner module for the ASR evaluation harness.

This module computes unit-cost edit-distance alignments between normalised
reference and hypothesis token sequences and turns them into per-utterance
substitution, insertion and deletion counts at word and character level.

Among all minimal-cost alignments the one with the most substitutions is
chosen; within that optimum the backtrace prefers match, then substitution,
then deletion, then insertion. Both rules are fixed so S/I/D splits are
reproducible, and the first makes the split symmetric: swapping reference
and hypothesis keeps S and exchanges I with D.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .exceptions import NormalizationConfigError
from .ga_normalizer import (
    DEFAULT_NORM_CONFIG,
    NormConfig,
    NormalizedText,
    char_tokens,
    normalize,
    word_tokens,
)


logger = logging.getLogger(__name__)


OP_MATCH = "match"
OP_SUB = "sub"
OP_DEL = "del"
OP_INS = "ins"


@dataclass(frozen=True)
class ErrorCounts:
    """
    Edit operation counts for one alignment (or a sum of alignments).

    Attributes:
        substitutions: Reference tokens replaced by a different token
        insertions: Hypothesis tokens with no reference counterpart
        deletions: Reference tokens with no hypothesis counterpart
        n_ref: Number of reference tokens
    """
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    n_ref: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    def __add__(self, other: 'ErrorCounts') -> 'ErrorCounts':
        return ErrorCounts(
            substitutions=self.substitutions + other.substitutions,
            insertions=self.insertions + other.insertions,
            deletions=self.deletions + other.deletions,
            n_ref=self.n_ref + other.n_ref,
        )

    def to_dict(self) -> Dict[str, int]:
        return {
            'sub': self.substitutions,
            'ins': self.insertions,
            'del': self.deletions,
            'n_ref': self.n_ref,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ErrorCounts':
        return cls(
            substitutions=int(data['sub']),
            insertions=int(data['ins']),
            deletions=int(data['del']),
            n_ref=int(data['n_ref']),
        )


@dataclass(frozen=True)
class AlignmentStep:
    """One column of an alignment; ref or hyp is None for ins/del."""
    op: str
    ref: Optional[str]
    hyp: Optional[str]


@dataclass(frozen=True)
class AlignedPair:
    """
    Scored utterance: both normalised sides and their error counts.

    Attributes:
        sample_id: Utterance identifier
        raw_ref: Reference text as supplied
        raw_hyp: Hypothesis text as supplied
        ref_norm: Normalised reference
        hyp_norm: Normalised hypothesis
        word_counts: Word-level counts
        char_counts: Character-level counts, aligned independently
        flags: Audit flags (missing_prediction, adapter_timeout, ...)
    """
    sample_id: str
    raw_ref: str
    raw_hyp: str
    ref_norm: NormalizedText
    hyp_norm: NormalizedText
    word_counts: ErrorCounts
    char_counts: ErrorCounts
    flags: Tuple[str, ...] = ()

    @property
    def utterance_wer(self) -> Optional[Fraction]:
        """(S+I+D)/N at word level, or None (UNDEFINED) when N is 0."""
        return error_rate(self.word_counts)

    @property
    def utterance_cer(self) -> Optional[Fraction]:
        return error_rate(self.char_counts)


def error_rate(counts: ErrorCounts) -> Optional[Fraction]:
    if counts.n_ref == 0:
        return None
    return Fraction(counts.errors, counts.n_ref)


def percentage(numerator: int, denominator: int) -> float:
    """
    100 * numerator / denominator from integers.

    The product is formed exactly and divided once, so the result is the
    correctly rounded float on every platform.
    """
    return (100 * numerator) / denominator


def align(ref: Sequence[str], hyp: Sequence[str]) -> ErrorCounts:
    """
    Count edit operations of the preferred minimal alignment.

    The dynamic programme minimises (distance, -substitutions)
    lexicographically, packed into one integer per cell:
    key = distance * width - substitutions with width > any substitution
    count. Insertions and deletions then follow from the two invariants
    I - D = len(hyp) - len(ref) and I + D = distance - S, so no backtrace is
    needed for the counts; alignment() walks the same optimum.

    Args:
        ref: Reference tokens
        hyp: Hypothesis tokens

    Returns:
        ErrorCounts: S, I, D and n_ref = len(ref)
    """
    n, m = len(ref), len(hyp)
    if n == 0:
        return ErrorCounts(insertions=m, n_ref=0)
    if m == 0:
        return ErrorCounts(deletions=n, n_ref=n)

    width = n + m + 1
    sub_step = width - 1

    prev = [j * width for j in range(m + 1)]
    for i in range(1, n + 1):
        token = ref[i - 1]
        cur = [i * width] * (m + 1)
        for j in range(1, m + 1):
            if token == hyp[j - 1]:
                best = prev[j - 1]
            else:
                best = prev[j - 1] + sub_step
            up = prev[j] + width
            if up < best:
                best = up
            left = cur[j - 1] + width
            if left < best:
                best = left
            cur[j] = best
        prev = cur

    return _counts_from_key(prev[m], width, n, m)


def alignment(ref: Sequence[str], hyp: Sequence[str]) -> List[AlignmentStep]:
    """
    Full alignment trace for the same optimum align() counts.

    Keeps the whole table, so use align() when only counts are needed.

    Returns:
        List[AlignmentStep]: Steps in reference/hypothesis order
    """
    n, m = len(ref), len(hyp)
    width = n + m + 1
    sub_step = width - 1

    table = [[0] * (m + 1) for _ in range(n + 1)]
    for j in range(m + 1):
        table[0][j] = j * width
    for i in range(1, n + 1):
        table[i][0] = i * width
        row, above = table[i], table[i - 1]
        token = ref[i - 1]
        for j in range(1, m + 1):
            diag = above[j - 1] if token == hyp[j - 1] else above[j - 1] + sub_step
            row[j] = min(diag, above[j] + width, row[j - 1] + width)

    steps: List[AlignmentStep] = []
    i, j = n, m
    while i > 0 or j > 0:
        key = table[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and table[i - 1][j - 1] == key:
            steps.append(AlignmentStep(OP_MATCH, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and ref[i - 1] != hyp[j - 1] and table[i - 1][j - 1] + sub_step == key:
            steps.append(AlignmentStep(OP_SUB, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and table[i - 1][j] + width == key:
            steps.append(AlignmentStep(OP_DEL, ref[i - 1], None))
            i -= 1
        else:
            steps.append(AlignmentStep(OP_INS, None, hyp[j - 1]))
            j -= 1

    steps.reverse()
    return steps


def count_steps(steps: Sequence[AlignmentStep], n_ref: int) -> ErrorCounts:
    return ErrorCounts(
        substitutions=sum(1 for s in steps if s.op == OP_SUB),
        insertions=sum(1 for s in steps if s.op == OP_INS),
        deletions=sum(1 for s in steps if s.op == OP_DEL),
        n_ref=n_ref,
    )


def score_pair(
    sample_id: str,
    raw_ref: str,
    raw_hyp: str,
    config: NormConfig = DEFAULT_NORM_CONFIG,
    flags: Tuple[str, ...] = ()
) -> AlignedPair:
    """
    Normalise both sides identically and align at word and char level.

    Raises:
        NormalizationConfigError: Tagged with sample_id
    """
    try:
        ref_norm = normalize(raw_ref, config, sample_id=sample_id)
        hyp_norm = normalize(raw_hyp, config, sample_id=sample_id)
    except NormalizationConfigError as e:
        if e.sample_id is None:
            raise NormalizationConfigError(str(e), sample_id=sample_id) from e
        raise

    word_counts = align(word_tokens(ref_norm), word_tokens(hyp_norm))
    char_counts = align(char_tokens(ref_norm), char_tokens(hyp_norm))

    return AlignedPair(
        sample_id=sample_id,
        raw_ref=raw_ref,
        raw_hyp=raw_hyp,
        ref_norm=ref_norm,
        hyp_norm=hyp_norm,
        word_counts=word_counts,
        char_counts=char_counts,
        flags=tuple(flags),
    )


def _counts_from_key(key: int, width: int, n: int, m: int) -> ErrorCounts:
    distance = (key + width - 1) // width
    substitutions = distance * width - key
    indels = distance - substitutions
    insertions = (indels + m - n) // 2
    deletions = (indels - m + n) // 2
    return ErrorCounts(
        substitutions=substitutions,
        insertions=insertions,
        deletions=deletions,
        n_ref=n,
    )

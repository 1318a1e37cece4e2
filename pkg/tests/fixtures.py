"""
Shared test data and builders.

The representative-output corpus below holds four Irish references, each with
a hallucinated whisper-large-v3 style hypothesis and a wav2vec2 style
hypothesis. Expected word counts were fixed by hand: the whisper outputs
share no word with their references, so every reference word is a
substitution and the surplus hypothesis words are insertions.
"""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from src.aggregator import METRIC_CER, METRIC_WER, BootstrapCI, GlobalScore
from src.aligner import AlignedPair, ErrorCounts
from src.analysis import RunHandle
from src.ga_normalizer import NormalizedText


HALLUCINATION_CORPUS: List[Dict[str, Any]] = [
    {
        'id': "c-a",
        'reference': "dia dhaoibh tráthnóna",
        'whisper': "diolch yn fawr iawn am wylior fideo",
        'wav2vec2': "dia dhaoibh tráthnóna",
        'whisper_counts': ErrorCounts(substitutions=3, insertions=4, deletions=0, n_ref=3),
        'wav2vec2_counts': ErrorCounts(n_ref=3),
    },
    {
        'id': "c-b",
        'reference': "tabhair cabhair don fhoireann",
        # 333-token repetition loop
        'whisper': " ".join(["to a coward"] * 111),
        'wav2vec2': "tabhair cabhair don fhoireann",
        'whisper_counts': ErrorCounts(substitutions=4, insertions=329, deletions=0, n_ref=4),
        'wav2vec2_counts': ErrorCounts(n_ref=4),
    },
    {
        'id': "c-c",
        'reference': "phléasc buama amháin lasmuigh doifig an ardghobharnóra",
        'whisper': "thank you for listening and have a good day",
        'wav2vec2': "pléis buam amhain leasmúid duifigh an ard gabhrana",
        'whisper_counts': ErrorCounts(substitutions=7, insertions=2, deletions=0, n_ref=7),
        'wav2vec2_counts': ErrorCounts(substitutions=6, insertions=1, deletions=0, n_ref=7),
    },
    {
        'id': "c-d",
        'reference': "ina dhiaidh sin bogadh chuig ospidéal addenbrooke i gcambridge é",
        'whisper': "in the next day ill be back to edinburghs hospital in cambridge",
        'wav2vec2': "ina dhíg sin bothar chuig ospadéal adan bhrog a ceamraid é",
        'whisper_counts': ErrorCounts(substitutions=10, insertions=2, deletions=0, n_ref=10),
        'wav2vec2_counts': ErrorCounts(substitutions=6, insertions=1, deletions=0, n_ref=10),
    },
]

# Hand sums over the whisper column: S 24, I 337, D 0, N 24
HALLUCINATION_WHISPER_TOTALS = ErrorCounts(substitutions=24, insertions=337, deletions=0, n_ref=24)


def pair_with_counts(
    sample_id: str,
    substitutions: int = 0,
    insertions: int = 0,
    deletions: int = 0,
    n_ref: int = 0,
    char_counts: Optional[ErrorCounts] = None
) -> AlignedPair:
    """AlignedPair carrying the given word counts (char counts mirror them)."""
    words = ErrorCounts(substitutions, insertions, deletions, n_ref)
    empty = NormalizedText.from_text("")
    return AlignedPair(
        sample_id=sample_id,
        raw_ref="",
        raw_hyp="",
        ref_norm=empty,
        hyp_norm=empty,
        word_counts=words,
        char_counts=char_counts if char_counts is not None else words,
    )


def score_from_percentages(
    sub_pct: float,
    ins_pct: float,
    del_pct: float,
    wer_pct: Optional[float] = None
) -> GlobalScore:
    """GlobalScore with the given word-level split; other fields are filler."""
    return GlobalScore(
        wer_pct=wer_pct if wer_pct is not None else sub_pct + ins_pct + del_pct,
        cer_pct=0.0,
        sub_pct=sub_pct,
        ins_pct=ins_pct,
        del_pct=del_pct,
        cer_sub_pct=0.0,
        cer_ins_pct=0.0,
        cer_del_pct=0.0,
        word_totals=ErrorCounts(n_ref=1),
        char_totals=ErrorCounts(n_ref=1),
        utterance_count=1,
    )


def run_handle(
    model_name: str,
    dataset_name: str = "cv",
    wer_pct: float = 0.0,
    sub_pct: float = 0.0,
    ins_pct: float = 0.0,
    del_pct: float = 0.0,
    pairs_path: Optional[Path] = None
) -> RunHandle:
    score = score_from_percentages(sub_pct, ins_pct, del_pct, wer_pct=wer_pct)
    return RunHandle(
        model_name=model_name,
        dataset_name=dataset_name,
        global_score=score,
        cis={
            METRIC_WER: BootstrapCI(METRIC_WER, wer_pct, wer_pct),
            METRIC_CER: BootstrapCI(METRIC_CER, 0.0, 0.0),
        },
        pairs_path=pairs_path,
    )


def write_jsonl(path: Path, rows: Iterable[Dict[str, Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


def write_released_predictions(path: Path, wers: Dict[str, Optional[float]]) -> Path:
    """predictions.jsonl lines carrying only what filter_hard reads."""
    return write_jsonl(path, (
        {'id': sample_id, 'reference': f"ref {sample_id}", 'hypothesis': "", 'wer': wer}
        for sample_id, wer in wers.items()
    ))


def write_manifest(path: Path, references: Dict[str, str]) -> Path:
    return write_jsonl(path, ({'id': k, 'reference': v} for k, v in references.items()))


def write_predictions(path: Path, hypotheses: Dict[str, str]) -> Path:
    return write_jsonl(path, ({'id': k, 'hypothesis': v} for k, v in hypotheses.items()))

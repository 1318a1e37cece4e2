"""
Analysis module for the ASR evaluation harness.

This module builds cross-run reports from emitted run directories:

- leaderboard: runs on one dataset ordered by global WER
- cross_corpus_gap: per-model WER difference between two datasets
- error_profile: which error type dominates a run
- filter_hard: utterances every included model gets badly wrong

All computations use full-precision values from the artifacts; rounding to
one decimal place happens only when tables are rendered.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Collection, Dict, Iterable, List, Optional, Sequence, Union

from .aggregator import METRIC_CER, METRIC_WER, BootstrapCI, GlobalScore
from .corpus_io import (
    META_FILE,
    PREDICTIONS_FILE,
    RESULTS_FILE,
    RunMetadata,
    is_run_dir,
    load_prediction_records,
    read_json_artifact,
)
from .exceptions import AnalysisError, ArtifactError


logger = logging.getLogger(__name__)


DEFAULT_INS_THRESHOLD_PCT = 20.0
DEFAULT_HARD_WER_THRESHOLD_PCT = 50.0

# Marks an ID missing from one run in filter_hard
_ABSENT: Any = object()


class ErrorProfile(str, Enum):
    SUBSTITUTION_DOMINATED = "substitution_dominated"
    INSERTION_DOMINATED = "insertion_dominated"
    DELETION_DOMINATED = "deletion_dominated"
    MIXED = "mixed"


@dataclass(frozen=True)
class RunHandle:
    """
    One emitted run, loaded for reporting.

    Attributes:
        model_name: model_identity from meta.json
        dataset_name: dataset_name from meta.json
        global_score: results.json scores
        cis: Bootstrap intervals keyed by 'WER' and 'CER'
        pairs_path: predictions.jsonl of the run
    """
    model_name: str
    dataset_name: str
    global_score: GlobalScore
    cis: Dict[str, BootstrapCI] = field(default_factory=dict)
    pairs_path: Optional[Path] = None


@dataclass(frozen=True)
class GapRow:
    """
    WER of one model on two datasets.

    Attributes:
        model_name: Model present in both run sets
        wer_a_pct: WER on dataset A (Common-Voice-like by convention)
        wer_b_pct: WER on dataset B (FLEURS-like by convention)
        delta_pct: wer_b_pct - wer_a_pct at full precision
    """
    model_name: str
    wer_a_pct: float
    wer_b_pct: float
    delta_pct: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'model': self.model_name,
            'wer_a_pct': self.wer_a_pct,
            'wer_b_pct': self.wer_b_pct,
            'delta_pct': self.delta_pct,
        }


@dataclass(frozen=True)
class HardUtterances:
    """
    Result of filter_hard.

    Attributes:
        sample_ids: Selected IDs in the first run's file order
        undefined_count: IDs skipped because some per-utterance WER is undefined
        models: Included model names, sorted
        references: sample_id -> raw reference for selected IDs
        wers: sample_id -> model -> per-utterance WER (pct)
    """
    sample_ids: List[str]
    undefined_count: int
    models: List[str]
    references: Dict[str, str] = field(default_factory=dict)
    wers: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'models': list(self.models),
            'undefined_count': self.undefined_count,
            'utterances': [
                {
                    'id': sample_id,
                    'reference': self.references.get(sample_id, ""),
                    'wer': self.wers.get(sample_id, {}),
                }
                for sample_id in self.sample_ids
            ],
        }


def load_run(run_dir: Union[str, Path]) -> RunHandle:
    """
    Load a RunHandle from a directory holding the three run artifacts.

    Raises:
        ArtifactError: Missing or malformed artifacts
    """
    directory = Path(run_dir)
    meta = RunMetadata.from_dict(read_json_artifact(directory / META_FILE))
    results = read_json_artifact(directory / RESULTS_FILE)
    try:
        global_score = GlobalScore.from_dict(results)
        ci_95 = results['ci_95']
        cis = {
            METRIC_WER: BootstrapCI.from_dict(METRIC_WER, ci_95['wer']),
            METRIC_CER: BootstrapCI.from_dict(METRIC_CER, ci_95['cer']),
        }
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactError(f"Invalid {directory / RESULTS_FILE}: {e}") from e

    return RunHandle(
        model_name=meta.model_identity,
        dataset_name=meta.dataset_name,
        global_score=global_score,
        cis=cis,
        pairs_path=directory / PREDICTIONS_FILE,
    )


def discover_runs(paths: Iterable[Union[str, Path]]) -> List[RunHandle]:
    """
    Load every run under the given paths.

    A path is either a run directory itself or a parent searched
    recursively; directories are visited in sorted order.

    Raises:
        AnalysisError: A path holds no run at all
    """
    runs: List[RunHandle] = []
    for path in paths:
        root = Path(path)
        if is_run_dir(root):
            runs.append(load_run(root))
            continue
        found = sorted({p.parent for p in root.rglob(RESULTS_FILE) if is_run_dir(p.parent)})
        if not found:
            raise AnalysisError(f"No run directories found under {root}")
        runs.extend(load_run(directory) for directory in found)

    logger.debug(f"Discovered {len(runs)} run(s)")
    return runs


def leaderboard(runs: Collection[RunHandle], dataset: Optional[str] = None) -> List[RunHandle]:
    """
    Order runs by full-precision WER, ties broken by model name.

    Args:
        runs: Runs to rank
        dataset: Expected dataset; defaults to the runs' common dataset

    Raises:
        AnalysisError: No runs, or runs from more than one dataset
    """
    if not runs:
        raise AnalysisError("Leaderboard needs at least one run")
    datasets = sorted({run.dataset_name for run in runs})
    if len(datasets) > 1:
        raise AnalysisError(f"Runs span several datasets: {datasets}")
    if dataset is not None and datasets[0] != dataset:
        raise AnalysisError(f"Runs are on '{datasets[0]}', not '{dataset}'")
    return sorted(runs, key=lambda run: (run.global_score.wer_pct, run.model_name))


def cross_corpus_gap(runs_a: Collection[RunHandle], runs_b: Collection[RunHandle]) -> List[GapRow]:
    """
    Per-model WER gap between two run sets, sorted by delta then name.

    Raises:
        AnalysisError: A model appears twice in one set, or the sets share no model
    """
    by_model_a = _index_by_model(runs_a, "A")
    by_model_b = _index_by_model(runs_b, "B")
    common = set(by_model_a) & set(by_model_b)
    if not common:
        raise AnalysisError("The two run sets have no model in common")

    rows = []
    for model in common:
        wer_a = by_model_a[model].global_score.wer_pct
        wer_b = by_model_b[model].global_score.wer_pct
        rows.append(GapRow(model_name=model, wer_a_pct=wer_a, wer_b_pct=wer_b, delta_pct=wer_b - wer_a))
    return sorted(rows, key=lambda row: (row.delta_pct, row.model_name))


def classify_error_profile(
    sub_pct: float,
    ins_pct: float,
    del_pct: float,
    ins_threshold_pct: float = DEFAULT_INS_THRESHOLD_PCT
) -> ErrorProfile:
    """
    Dominant error type from S/I/D percentages.

    Insertions above the threshold win; otherwise deletions above the
    threshold that also exceed insertions; otherwise substitutions when they
    are at least as large as both others. A perfect run (all zero) is
    substitution_dominated under these rules.
    """
    if ins_pct > ins_threshold_pct:
        return ErrorProfile.INSERTION_DOMINATED
    if del_pct > ins_threshold_pct and del_pct > ins_pct:
        return ErrorProfile.DELETION_DOMINATED
    if sub_pct >= max(ins_pct, del_pct):
        return ErrorProfile.SUBSTITUTION_DOMINATED
    return ErrorProfile.MIXED


def error_profile(run: RunHandle, ins_threshold_pct: float = DEFAULT_INS_THRESHOLD_PCT) -> ErrorProfile:
    score = run.global_score
    return classify_error_profile(score.sub_pct, score.ins_pct, score.del_pct, ins_threshold_pct)


def filter_hard(
    runs: Collection[RunHandle],
    wer_threshold_pct: float = DEFAULT_HARD_WER_THRESHOLD_PCT,
    exclude: Collection[str] = ()
) -> HardUtterances:
    """
    Utterances whose WER exceeds the threshold for every included model.

    Per-utterance WERs come from each run's predictions.jsonl. An utterance
    qualifies only if every included run scored it and every WER is strictly
    above the threshold. Utterances with an undefined WER (empty normalised
    reference) in any included run are skipped and counted.

    Args:
        runs: Runs on one dataset
        wer_threshold_pct: Strict lower bound on per-utterance WER
        exclude: Model names left out of the include set

    Raises:
        AnalysisError: Mixed datasets or nothing left after exclusion
    """
    datasets = sorted({run.dataset_name for run in runs})
    if len(datasets) > 1:
        raise AnalysisError(f"Runs span several datasets: {datasets}")

    excluded = set(exclude)
    included = sorted((run for run in runs if run.model_name not in excluded), key=lambda r: r.model_name)
    if not included:
        raise AnalysisError("No runs left after exclusion")
    _index_by_model(included, "include")

    per_model: Dict[str, Dict[str, Optional[float]]] = {}
    references: Dict[str, str] = {}
    order: List[str] = []
    for position, run in enumerate(included):
        if run.pairs_path is None:
            raise AnalysisError(f"Run for '{run.model_name}' has no predictions file")
        wers: Dict[str, Optional[float]] = {}
        for record in load_prediction_records(run.pairs_path):
            wers[record.sample_id] = record.wer_pct
            references.setdefault(record.sample_id, record.reference)
            if position == 0:
                order.append(record.sample_id)
        per_model[run.model_name] = wers

    selected: List[str] = []
    undefined = 0
    for sample_id in order:
        values = [per_model[run.model_name].get(sample_id, _ABSENT) for run in included]
        if any(value is _ABSENT for value in values):
            continue
        if any(value is None for value in values):
            undefined += 1
            continue
        if all(value > wer_threshold_pct for value in values):
            selected.append(sample_id)

    logger.info(
        f"{len(selected)} utterance(s) exceed {wer_threshold_pct}% WER for all "
        f"{len(included)} model(s); {undefined} undefined",
        extra={'selected': len(selected), 'undefined_count': undefined}
    )

    return HardUtterances(
        sample_ids=selected,
        undefined_count=undefined,
        models=[run.model_name for run in included],
        references={sample_id: references[sample_id] for sample_id in selected},
        wers={
            sample_id: {run.model_name: per_model[run.model_name][sample_id] for run in included}
            for sample_id in selected
        },
    )


def _index_by_model(runs: Iterable[RunHandle], label: str) -> Dict[str, RunHandle]:
    index: Dict[str, RunHandle] = {}
    for run in runs:
        if run.model_name in index:
            raise AnalysisError(f"Model '{run.model_name}' appears twice in run set {label}")
        index[run.model_name] = run
    return index


# Rendering

def fmt_pct(value: float) -> str:
    return f"{value:.1f}"


def fmt_delta(value: float) -> str:
    return f"{value:+.1f}"


def render_table(
    headers: Sequence[str],
    rows: Sequence[Sequence[str]],
    left_columns: Collection[int] = (0,)
) -> str:
    """Plain-text table; left_columns are left-aligned, the rest right-aligned."""
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def line(cells: Sequence[str]) -> str:
        parts = [
            cell.ljust(widths[i]) if i in left_columns else cell.rjust(widths[i])
            for i, cell in enumerate(cells)
        ]
        return "  ".join(parts).rstrip()

    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), rule] + [line(row) for row in rows]) + "\n"


def leaderboard_table(ranked: Sequence[RunHandle]) -> str:
    headers = ["MODEL", "WER", "WER 95% CI", "SUB", "INS", "DEL", "CER"]
    rows = []
    for run in ranked:
        score = run.global_score
        ci = run.cis.get(METRIC_WER)
        rows.append([
            run.model_name,
            fmt_pct(score.wer_pct),
            f"[{fmt_pct(ci.low_pct)}, {fmt_pct(ci.high_pct)}]" if ci else "-",
            fmt_pct(score.sub_pct),
            fmt_pct(score.ins_pct),
            fmt_pct(score.del_pct),
            fmt_pct(score.cer_pct),
        ])
    return render_table(headers, rows)


def leaderboard_json(ranked: Sequence[RunHandle]) -> List[Dict[str, Any]]:
    rows = []
    for rank, run in enumerate(ranked, start=1):
        score = run.global_score
        rows.append({
            'rank': rank,
            'model': run.model_name,
            'dataset': run.dataset_name,
            'wer_pct': score.wer_pct,
            'sub_pct': score.sub_pct,
            'ins_pct': score.ins_pct,
            'del_pct': score.del_pct,
            'cer_pct': score.cer_pct,
            'ci_95': {metric.lower(): ci.to_dict() for metric, ci in sorted(run.cis.items(), reverse=True)},
        })
    return rows


def gap_table(rows: Sequence[GapRow]) -> str:
    return render_table(
        ["MODEL", "WER A", "WER B", "DELTA"],
        [[r.model_name, fmt_pct(r.wer_a_pct), fmt_pct(r.wer_b_pct), fmt_delta(r.delta_pct)] for r in rows],
    )


def profile_rows(runs: Sequence[RunHandle], ins_threshold_pct: float) -> List[Dict[str, Any]]:
    ordered = sorted(runs, key=lambda r: (r.dataset_name, r.model_name))
    return [
        {
            'model': run.model_name,
            'dataset': run.dataset_name,
            'sub_pct': run.global_score.sub_pct,
            'ins_pct': run.global_score.ins_pct,
            'del_pct': run.global_score.del_pct,
            'profile': error_profile(run, ins_threshold_pct).value,
        }
        for run in ordered
    ]


def profile_table(rows: Sequence[Dict[str, Any]]) -> str:
    return render_table(
        ["MODEL", "DATASET", "SUB", "INS", "DEL", "PROFILE"],
        [
            [r['model'], r['dataset'], fmt_pct(r['sub_pct']), fmt_pct(r['ins_pct']),
             fmt_pct(r['del_pct']), r['profile']]
            for r in rows
        ],
        left_columns=(0, 1, 5),
    )


def hard_table(result: HardUtterances) -> str:
    headers = ["ID"] + list(result.models) + ["REFERENCE"]
    rows = [
        [sample_id]
        + [fmt_pct(result.wers[sample_id][model]) for model in result.models]
        + [result.references.get(sample_id, "")]
        for sample_id in result.sample_ids
    ]
    table = render_table(headers, rows, left_columns=(0, len(headers) - 1))
    return table + f"{len(result.sample_ids)} selected, {result.undefined_count} undefined\n"

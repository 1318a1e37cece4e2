"""
Scorer module for the ASR evaluation harness.

This module coordinates a scoring run: it attaches hypotheses to manifest
utterances, scores every pair in parallel, aggregates globally, computes
bootstrap intervals for WER and CER and assembles run metadata. It also
rebuilds a run from its released predictions.jsonl for rescoring.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .adapter import AdapterRun
from .aggregator import METRIC_CER, METRIC_WER, BootstrapCI, GlobalScore, aggregate, bootstrap_ci
from .aligner import AlignedPair, score_pair
from .config import Config
from .corpus_io import (
    FLAG_ADAPTER_NO_REPLY,
    FLAG_ADAPTER_TIMEOUT,
    FLAG_EMPTY_REFERENCE,
    FLAG_MISSING_PREDICTION,
    META_FILE,
    PREDICTIONS_FILE,
    RESULTS_FILE,
    RunMetadata,
    Utterance,
    load_prediction_records,
    read_json_artifact,
    render_results,
    software_versions,
    utc_timestamp,
)
from .exceptions import ArtifactError
from .ga_normalizer import NormConfig
from .observability import ObservabilityManager


logger = logging.getLogger(__name__)


@dataclass
class ScoredRun:
    """
    Everything emit_artifacts needs for one run.

    Attributes:
        pairs: Scored utterances in manifest order
        global_score: Corpus-level scores
        cis: Bootstrap intervals keyed by 'WER' and 'CER'
        meta: Run metadata
    """
    pairs: List[AlignedPair]
    global_score: GlobalScore
    cis: Dict[str, BootstrapCI]
    meta: RunMetadata


@dataclass(frozen=True)
class RunLabels:
    """Dataset and model labels recorded in meta.json."""
    dataset_name: str
    dataset_split: str = "test"
    model_identity: str = "unknown"


class Scorer:
    """
    Scores hypotheses against a manifest.

    This class handles:
    - Missing-prediction and adapter-failure policies (score as empty, flag)
    - Parallel per-utterance scoring that preserves manifest order
    - Global aggregation and bootstrap intervals
    - Run statistics for meta.json
    """

    def __init__(self, config: Config, observability: ObservabilityManager):
        """
        Initialize Scorer.

        Args:
            config: Configuration object
            observability: Observability manager instance
        """
        self.config = config
        self.obs = observability

    def score_predictions(
        self,
        utterances: Sequence[Utterance],
        predictions: Mapping[str, str],
        labels: RunLabels
    ) -> ScoredRun:
        """
        Score a predictions map; manifest IDs without a prediction score as "".

        Args:
            utterances: Manifest utterances
            predictions: sample_id -> hypothesis
            labels: Dataset and model labels

        Returns:
            ScoredRun: Scored pairs, aggregate, intervals and metadata
        """
        known = {u.sample_id for u in utterances}
        unknown = sorted(set(predictions) - known)
        if unknown:
            self.obs.log_warning(
                f"Ignoring {len(unknown)} prediction(s) for IDs not in the manifest",
                first_unknown_id=unknown[0]
            )

        hypotheses: Dict[str, str] = {}
        flags: Dict[str, List[str]] = {}
        for utterance in utterances:
            if utterance.sample_id in predictions:
                hypotheses[utterance.sample_id] = predictions[utterance.sample_id]
            else:
                hypotheses[utterance.sample_id] = ""
                flags.setdefault(utterance.sample_id, []).append(FLAG_MISSING_PREDICTION)

        return self.score(utterances, hypotheses, flags, labels)

    def score_adapter_run(
        self,
        utterances: Sequence[Utterance],
        adapter_run: AdapterRun,
        labels: RunLabels
    ) -> ScoredRun:
        """Score adapter output; timeouts and unanswered IDs score as ""."""
        hypotheses = dict(adapter_run.hypotheses)
        flags: Dict[str, List[str]] = {}
        for sample_id in adapter_run.timed_out:
            hypotheses[sample_id] = ""
            flags.setdefault(sample_id, []).append(FLAG_ADAPTER_TIMEOUT)
        for sample_id in adapter_run.no_reply:
            hypotheses[sample_id] = ""
            flags.setdefault(sample_id, []).append(FLAG_ADAPTER_NO_REPLY)
        return self.score(utterances, hypotheses, flags, labels, {'AdapterRestarts': adapter_run.restarts})

    def score(
        self,
        utterances: Sequence[Utterance],
        hypotheses: Mapping[str, str],
        flags: Mapping[str, Sequence[str]],
        labels: RunLabels,
        extra_stats: Optional[Mapping[str, float]] = None
    ) -> ScoredRun:
        """
        Score, aggregate and bootstrap one run.

        extra_stats are counters gathered before scoring (adapter restarts)
        that belong in run_stats.

        Raises:
            NormalizationConfigError: A text violates the digit policy
            AggregateUndefinedError: The manifest has no reference words
        """
        self.obs.clear_metrics()
        for name, value in (extra_stats or {}).items():
            self.obs.record_metric(name, value)
        started = time.monotonic()
        norm_config = self.config.norm_config()

        items = []
        for utterance in utterances:
            item_flags = list(flags.get(utterance.sample_id, ()))
            if utterance.empty_reference:
                item_flags.append(FLAG_EMPTY_REFERENCE)
            items.append((
                utterance.sample_id,
                utterance.reference,
                hypotheses.get(utterance.sample_id, ""),
                tuple(item_flags),
            ))

        pairs = self.score_pairs(items, norm_config)
        scored = self._finish(pairs, norm_config, labels)

        self.obs.record_metric('ScoringDuration', time.monotonic() - started, 'Seconds')
        return scored

    def score_pairs(
        self,
        items: Sequence[Tuple[str, str, str, Tuple[str, ...]]],
        norm_config: NormConfig
    ) -> List[AlignedPair]:
        """
        Score (sample_id, reference, hypothesis, flags) items in parallel.

        Results are placed by input index, so output order equals input order
        at any worker count.
        """
        if self.config.workers <= 1 or len(items) <= 1:
            return [score_pair(sid, ref, hyp, norm_config, fl) for sid, ref, hyp, fl in items]

        results: List[Optional[AlignedPair]] = [None] * len(items)
        with ThreadPoolExecutor(max_workers=self.config.workers, thread_name_prefix='score') as executor:
            future_to_index = {
                executor.submit(score_pair, sid, ref, hyp, norm_config, fl): index
                for index, (sid, ref, hyp, fl) in enumerate(items)
            }
            for future in as_completed(future_to_index):
                results[future_to_index[future]] = future.result()

        return [pair for pair in results if pair is not None]

    def rescore(self, run_dir: Union[str, Path]) -> Tuple[ScoredRun, bool]:
        """
        Rebuild a run from predictions.jsonl and meta.json alone.

        The normaliser snapshot and bootstrap parameters recorded in meta.json
        are used, whatever the current configuration says.

        Returns:
            Tuple[ScoredRun, bool]: The rebuilt run and whether its results.json
            rendering is byte-identical to the stored one
        """
        directory = Path(run_dir)
        meta = RunMetadata.from_dict(read_json_artifact(directory / META_FILE))
        records = load_prediction_records(directory / PREDICTIONS_FILE)

        if len(records) != meta.utterance_count:
            raise ArtifactError(
                f"{PREDICTIONS_FILE} has {len(records)} lines but {META_FILE} "
                f"records {meta.utterance_count} utterances"
            )

        items = [(r.sample_id, r.reference, r.hypothesis, r.flags) for r in records]
        pairs = self.score_pairs(items, meta.norm_config)
        global_score = aggregate(pairs)
        cis = self._intervals(pairs, meta.resamples, meta.seed)
        rebuilt = ScoredRun(pairs=pairs, global_score=global_score, cis=cis, meta=meta)

        try:
            stored = (directory / RESULTS_FILE).read_bytes()
        except OSError as e:
            raise ArtifactError(f"Cannot read {directory / RESULTS_FILE}: {e}") from e
        matches = stored == render_results(global_score, cis).encode('utf-8')

        if matches:
            self.obs.log_info(f"Rescore of {directory} matches {RESULTS_FILE}", run_dir=str(directory))
        else:
            self.obs.log_warning(f"Rescore of {directory} differs from {RESULTS_FILE}", run_dir=str(directory))
        return rebuilt, matches

    def _finish(self, pairs: List[AlignedPair], norm_config: NormConfig, labels: RunLabels) -> ScoredRun:
        global_score = aggregate(pairs)
        cis = self._intervals(pairs, self.config.resamples, self.config.seed)

        missing = [p.sample_id for p in pairs if FLAG_MISSING_PREDICTION in p.flags]
        timeouts = [p.sample_id for p in pairs if FLAG_ADAPTER_TIMEOUT in p.flags]
        no_reply = [p.sample_id for p in pairs if FLAG_ADAPTER_NO_REPLY in p.flags]
        empty_refs = [p.sample_id for p in pairs if p.word_counts.n_ref == 0]

        self.obs.record_metric('UtterancesScored', len(pairs))
        self.obs.record_metric('MissingPredictions', len(missing))
        self.obs.record_metric('AdapterTimeouts', len(timeouts))
        self.obs.record_metric('AdapterNoReply', len(no_reply))
        self.obs.record_metric('EmptyReferences', len(empty_refs))
        for metric, ci in cis.items():
            self.obs.record_metric(f'BootstrapRedraws{metric}', ci.redraws)

        if missing:
            self.obs.log_warning(
                f"{len(missing)} utterance(s) had no prediction and were scored as empty",
                first_missing_id=missing[0]
            )

        meta = RunMetadata(
            dataset_name=labels.dataset_name,
            dataset_split=labels.dataset_split,
            utterance_count=len(pairs),
            model_identity=labels.model_identity,
            norm_config=norm_config,
            resamples=self.config.resamples,
            seed=self.config.seed,
            ci_method=self.config.ci_method,
            software_versions=software_versions(),
            timestamp=utc_timestamp(self.config.source_date_epoch),
            missing_predictions=missing,
            adapter_timeouts=timeouts,
            adapter_no_reply=no_reply,
            empty_references=empty_refs,
            bootstrap_redraws={metric: ci.redraws for metric, ci in cis.items()},
            run_stats=self.obs.metrics_snapshot(),
        )

        self.obs.log_info(
            f"Scored {len(pairs)} utterances: WER {global_score.wer_pct:.1f}% "
            f"CER {global_score.cer_pct:.1f}%",
            utterance_count=len(pairs)
        )
        return ScoredRun(pairs=pairs, global_score=global_score, cis=cis, meta=meta)

    def _intervals(self, pairs: Sequence[AlignedPair], resamples: int, seed: int) -> Dict[str, BootstrapCI]:
        return {
            metric: bootstrap_ci(pairs, metric, resamples=resamples, seed=seed, workers=self.config.workers)
            for metric in (METRIC_WER, METRIC_CER)
        }

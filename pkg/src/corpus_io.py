"""
Corpus I/O module for the ASR evaluation harness.

This module reads dataset manifests and prediction files (JSON Lines) and
writes the three artifacts of every scored run:

- predictions.jsonl: one line per manifest utterance, raw and normalised
  texts, per-utterance WER/CER, counts and audit flags
- results.json: global WER/CER, S/I/D decomposition and bootstrap CIs
- meta.json: dataset, model, normaliser snapshot, bootstrap parameters,
  software versions and run statistics

All files are UTF-8 with LF line endings. JSON keys are written in a fixed
order and floats at full precision (shortest repr), so the same inputs give
byte-identical files.
"""

import json
import logging
import os
import platform
import shutil
import tempfile
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import __version__
from .aggregator import METRIC_CER, METRIC_WER, BootstrapCI, GlobalScore
from .aligner import AlignedPair, percentage
from .exceptions import ArtifactError, ManifestError, PredictionsError
from .ga_normalizer import NormConfig


logger = logging.getLogger(__name__)


PREDICTIONS_FILE = "predictions.jsonl"
RESULTS_FILE = "results.json"
META_FILE = "meta.json"
ARTIFACT_FILES = (PREDICTIONS_FILE, RESULTS_FILE, META_FILE)

# Per-utterance audit flags
FLAG_MISSING_PREDICTION = "missing_prediction"
FLAG_ADAPTER_TIMEOUT = "adapter_timeout"
FLAG_ADAPTER_NO_REPLY = "adapter_no_reply"
FLAG_EMPTY_REFERENCE = "empty_reference"

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Utterance:
    """
    One evaluation unit from a dataset manifest.

    Attributes:
        sample_id: Unique opaque identifier
        reference: Raw reference transcript
        audio_path: Audio file, resolved against the manifest directory
        empty_reference: Manifest declares an intentionally empty reference
    """
    sample_id: str
    reference: str
    audio_path: Optional[str] = None
    empty_reference: bool = False


@dataclass(frozen=True)
class PredictionRecord:
    """A released predictions.jsonl line, as needed for rescoring and analysis."""
    sample_id: str
    reference: str
    hypothesis: str
    wer_pct: Optional[float]
    cer_pct: Optional[float]
    flags: Tuple[str, ...] = ()


@dataclass
class RunMetadata:
    """
    Provenance of one scored run.

    Attributes:
        dataset_name: Dataset label (e.g. common_voice_ga)
        dataset_split: Split label (e.g. test)
        utterance_count: Number of scored pairs
        model_identity: Model label used in reports
        norm_config: Normaliser snapshot used for both sides
        resamples: Bootstrap resample count
        seed: Bootstrap seed
        ci_method: Bootstrap interval method
        software_versions: Component -> version string
        timestamp: UTC instant, ISO 8601 with Z suffix
        missing_predictions: IDs scored against an empty hypothesis
        adapter_timeouts: IDs the adapter did not answer in time
        adapter_no_reply: IDs still pending when the adapter exited
        empty_references: IDs whose normalised reference has no words
        bootstrap_redraws: Metric -> number of redrawn resamples
        run_stats: Deterministic run counters
    """
    dataset_name: str
    dataset_split: str
    utterance_count: int
    model_identity: str
    norm_config: NormConfig
    resamples: int
    seed: int
    ci_method: str
    software_versions: Dict[str, str] = field(default_factory=dict)
    timestamp: str = ""
    missing_predictions: List[str] = field(default_factory=list)
    adapter_timeouts: List[str] = field(default_factory=list)
    adapter_no_reply: List[str] = field(default_factory=list)
    empty_references: List[str] = field(default_factory=list)
    bootstrap_redraws: Dict[str, int] = field(default_factory=dict)
    run_stats: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dataset_name': self.dataset_name,
            'dataset_split': self.dataset_split,
            'utterance_count': self.utterance_count,
            'model_identity': self.model_identity,
            'norm_config': self.norm_config.to_dict(),
            'resamples': self.resamples,
            'seed': self.seed,
            'ci_method': self.ci_method,
            'software_versions': dict(self.software_versions),
            'timestamp': self.timestamp,
            'missing_predictions': list(self.missing_predictions),
            'adapter_timeouts': list(self.adapter_timeouts),
            'adapter_no_reply': list(self.adapter_no_reply),
            'empty_references': list(self.empty_references),
            'bootstrap_redraws': dict(self.bootstrap_redraws),
            'run_stats': dict(self.run_stats),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunMetadata':
        try:
            return cls(
                dataset_name=data['dataset_name'],
                dataset_split=data['dataset_split'],
                utterance_count=int(data['utterance_count']),
                model_identity=data['model_identity'],
                norm_config=NormConfig.from_dict(data['norm_config']),
                resamples=int(data['resamples']),
                seed=int(data['seed']),
                ci_method=data['ci_method'],
                software_versions=dict(data.get('software_versions', {})),
                timestamp=data.get('timestamp', ""),
                missing_predictions=list(data.get('missing_predictions', [])),
                adapter_timeouts=list(data.get('adapter_timeouts', [])),
                adapter_no_reply=list(data.get('adapter_no_reply', [])),
                empty_references=list(data.get('empty_references', [])),
                bootstrap_redraws=dict(data.get('bootstrap_redraws', {})),
                run_stats=dict(data.get('run_stats', {})),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactError(f"Invalid {META_FILE}: {e}") from e


def software_versions() -> Dict[str, str]:
    """Versions recorded in meta.json and printed by --version."""
    return {
        'asr_eval': __version__,
        'python': platform.python_version(),
        'numpy': np.__version__,
        'unicode': unicodedata.unidata_version,
    }


def utc_timestamp(source_date_epoch: Optional[int] = None) -> str:
    """Current UTC time, or SOURCE_DATE_EPOCH when given, as ISO 8601."""
    if source_date_epoch is not None:
        moment = datetime.fromtimestamp(source_date_epoch, tz=timezone.utc)
    else:
        moment = datetime.now(timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def load_manifest(path: PathLike) -> List[Utterance]:
    """
    Parse a JSON Lines manifest, preserving file order.

    Each line holds an object with "id" (non-empty string), "reference"
    (string) and optionally "audio" (path, relative paths resolved against
    the manifest's directory). A reference that is empty or all whitespace
    must be declared with "empty_reference": true. Blank lines are skipped.

    Args:
        path: Manifest file

    Returns:
        List[Utterance]: Utterances in file order

    Raises:
        ManifestError: Missing file, malformed line or duplicate ID
    """
    manifest_path = Path(path)
    base_dir = manifest_path.parent
    utterances: List[Utterance] = []
    seen: Dict[str, int] = {}

    for line_number, obj in _iter_jsonl(manifest_path, ManifestError):
        sample_id = obj.get('id')
        if not isinstance(sample_id, str) or not sample_id:
            raise ManifestError("'id' must be a non-empty string", line_number)

        if sample_id in seen:
            raise ManifestError(
                f"Duplicate sample_id '{sample_id}' (first seen on line {seen[sample_id]})",
                line_number
            )
        seen[sample_id] = line_number

        reference = obj.get('reference')
        if not isinstance(reference, str):
            raise ManifestError(f"'reference' must be a string for '{sample_id}'", line_number)

        declared_empty = obj.get('empty_reference', False)
        if not isinstance(declared_empty, bool):
            raise ManifestError(f"'empty_reference' must be a boolean for '{sample_id}'", line_number)
        if not reference.strip() and not declared_empty:
            raise ManifestError(
                f"Empty reference for '{sample_id}' is not declared with \"empty_reference\": true",
                line_number
            )

        audio = obj.get('audio')
        if audio is not None:
            if not isinstance(audio, str) or not audio:
                raise ManifestError(f"'audio' must be a non-empty string for '{sample_id}'", line_number)
            if not os.path.isabs(audio):
                audio = str(base_dir / audio)

        utterances.append(Utterance(
            sample_id=sample_id,
            reference=reference,
            audio_path=audio,
            empty_reference=declared_empty,
        ))

    logger.info(
        f"Loaded {len(utterances)} utterances from {manifest_path}",
        extra={'manifest': str(manifest_path), 'utterance_count': len(utterances)}
    )
    return utterances


def load_predictions(path: PathLike) -> Dict[str, str]:
    """
    Parse a predictions file into sample_id -> hypothesis.

    Fields other than "id" and "hypothesis" are ignored, so a released
    predictions.jsonl is accepted as input.

    Raises:
        PredictionsError: Missing file, malformed line or duplicate ID
    """
    predictions_path = Path(path)
    predictions: Dict[str, str] = {}

    for line_number, obj in _iter_jsonl(predictions_path, PredictionsError):
        sample_id = obj.get('id')
        if not isinstance(sample_id, str) or not sample_id:
            raise PredictionsError("'id' must be a non-empty string", line_number)
        hypothesis = obj.get('hypothesis')
        if not isinstance(hypothesis, str):
            raise PredictionsError(f"'hypothesis' must be a string for '{sample_id}'", line_number)
        if sample_id in predictions:
            raise PredictionsError(f"Duplicate sample_id '{sample_id}'", line_number)
        predictions[sample_id] = hypothesis

    logger.info(
        f"Loaded {len(predictions)} predictions from {predictions_path}",
        extra={'predictions': str(predictions_path)}
    )
    return predictions


def load_prediction_records(path: PathLike) -> List[PredictionRecord]:
    """
    Parse a released predictions.jsonl, keeping reference, WER and flags.

    Raises:
        PredictionsError: Missing file or a line without the released fields
    """
    records: List[PredictionRecord] = []
    seen = set()
    for line_number, obj in _iter_jsonl(Path(path), PredictionsError):
        try:
            sample_id = obj['id']
            record = PredictionRecord(
                sample_id=sample_id,
                reference=obj['reference'],
                hypothesis=obj['hypothesis'],
                wer_pct=obj.get('wer'),
                cer_pct=obj.get('cer'),
                flags=tuple(obj.get('flags', ())),
            )
        except KeyError as e:
            raise PredictionsError(f"Missing field {e} in released predictions", line_number) from e
        if not isinstance(record.reference, str) or not isinstance(record.hypothesis, str):
            raise PredictionsError("'reference' and 'hypothesis' must be strings", line_number)
        if sample_id in seen:
            raise PredictionsError(f"Duplicate sample_id '{sample_id}'", line_number)
        seen.add(sample_id)
        records.append(record)
    return records


def prediction_line(pair: AlignedPair) -> Dict[str, Any]:
    """One predictions.jsonl object; WER/CER are null when undefined."""
    words, chars = pair.word_counts, pair.char_counts
    return {
        'id': pair.sample_id,
        'reference': pair.raw_ref,
        'hypothesis': pair.raw_hyp,
        'reference_norm': pair.ref_norm.text,
        'hypothesis_norm': pair.hyp_norm.text,
        'wer': percentage(words.errors, words.n_ref) if words.n_ref else None,
        'cer': percentage(chars.errors, chars.n_ref) if chars.n_ref else None,
        'word_counts': words.to_dict(),
        'char_counts': chars.to_dict(),
        'flags': list(pair.flags),
    }


def results_document(global_score: GlobalScore, cis: Mapping[str, BootstrapCI]) -> Dict[str, Any]:
    """results.json content: the global score followed by ci_95 per metric."""
    document = global_score.to_dict()
    document['ci_95'] = {
        'wer': cis[METRIC_WER].to_dict(),
        'cer': cis[METRIC_CER].to_dict(),
    }
    return document


def render_json(document: Any) -> str:
    return json.dumps(document, ensure_ascii=False, indent=2) + "\n"


def render_results(global_score: GlobalScore, cis: Mapping[str, BootstrapCI]) -> str:
    return render_json(results_document(global_score, cis))


def render_predictions(pairs: Sequence[AlignedPair]) -> str:
    return "".join(
        json.dumps(prediction_line(pair), ensure_ascii=False) + "\n" for pair in pairs
    )


def emit_artifacts(
    pairs: Sequence[AlignedPair],
    global_score: GlobalScore,
    cis: Mapping[str, BootstrapCI],
    meta: RunMetadata,
    out_dir: PathLike
) -> Dict[str, Path]:
    """
    Write predictions.jsonl, results.json and meta.json into out_dir.

    Files are staged in a hidden directory inside out_dir and moved into
    place only after all three were written. Artifacts of an earlier run in
    out_dir are set aside first; on failure nothing from this run is left
    behind and the earlier run is put back.

    Args:
        pairs: Scored utterances in manifest order
        global_score: Corpus-level scores
        cis: Bootstrap intervals keyed by 'WER' and 'CER'
        meta: Run metadata
        out_dir: Output directory (created if needed)

    Returns:
        Dict[str, Path]: Artifact name -> final path

    Raises:
        ArtifactError: out_dir cannot be created or written
    """
    target = Path(out_dir)
    contents = {
        PREDICTIONS_FILE: render_predictions(pairs),
        RESULTS_FILE: render_results(global_score, cis),
        META_FILE: render_json(meta.to_dict()),
    }

    try:
        target.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=target))
        backup = staging / "previous"
        backup.mkdir()
    except OSError as e:
        raise ArtifactError(f"Cannot write to output directory {target}: {e}") from e

    moved_aside: List[str] = []
    placed: List[Path] = []
    keep_staging = False
    try:
        for name, text in contents.items():
            with open(staging / name, 'w', encoding='utf-8', newline='\n') as f:
                f.write(text)
        for name in ARTIFACT_FILES:
            if (target / name).exists():
                os.replace(target / name, backup / name)
                moved_aside.append(name)
        for name in ARTIFACT_FILES:
            final = target / name
            os.replace(staging / name, final)
            placed.append(final)
    except OSError as e:
        keep_staging = not _roll_back(target, backup, placed, moved_aside)
        raise ArtifactError(f"Failed to write artifacts to {target}: {e}") from e
    finally:
        if not keep_staging:
            shutil.rmtree(staging, ignore_errors=True)

    logger.info(
        f"Wrote {len(ARTIFACT_FILES)} artifacts to {target}",
        extra={'out_dir': str(target), 'utterance_count': len(pairs)}
    )
    return {name: target / name for name in ARTIFACT_FILES}


def _roll_back(target: Path, backup: Path, placed: Sequence[Path], moved_aside: Sequence[str]) -> bool:
    """Remove new artifacts and put the previous run back; False if that failed."""
    for path in placed:
        try:
            path.unlink()
        except OSError:
            pass
    restored = True
    for name in moved_aside:
        try:
            os.replace(backup / name, target / name)
        except OSError as e:
            restored = False
            logger.error(
                f"Could not restore previous {name} in {target}; it is kept in {backup}: {e}",
                extra={'out_dir': str(target), 'artifact': name}
            )
    return restored


def read_json_artifact(path: PathLike) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ArtifactError(f"Artifact not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ArtifactError(f"Malformed JSON in {path}: {e.msg} (line {e.lineno})") from e


def is_run_dir(path: PathLike) -> bool:
    directory = Path(path)
    return all((directory / name).is_file() for name in ARTIFACT_FILES)


def _iter_jsonl(path: Path, error_cls: type) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line_number, object) for every non-blank line."""
    try:
        f = open(path, 'r', encoding='utf-8')
    except OSError as e:
        raise error_cls(f"Cannot read {path}: {e.strerror or e}") from e

    with f:
        try:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise error_cls(f"Malformed JSON: {e.msg}", line_number) from e
                if not isinstance(obj, dict):
                    raise error_cls("Expected a JSON object", line_number)
                yield line_number, obj
        except UnicodeDecodeError as e:
            raise error_cls(f"{path} is not valid UTF-8: {e.reason}") from e

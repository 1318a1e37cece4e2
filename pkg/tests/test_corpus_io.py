"""
Tests for manifest/prediction parsing and run artifact emission.
"""

import json
import os
from pathlib import Path

import pytest

from src.aggregator import METRIC_CER, METRIC_WER, BootstrapCI, aggregate
from src.aligner import score_pair
from src.corpus_io import (
    ARTIFACT_FILES,
    META_FILE,
    PREDICTIONS_FILE,
    RESULTS_FILE,
    RunMetadata,
    emit_artifacts,
    is_run_dir,
    load_manifest,
    load_prediction_records,
    load_predictions,
    prediction_line,
    read_json_artifact,
    software_versions,
    utc_timestamp,
)
from src.exceptions import ArtifactError, ManifestError, PredictionsError
from src.ga_normalizer import DEFAULT_NORM_CONFIG, NormConfig
from tests.fixtures import write_jsonl, write_manifest, write_predictions


def sample_run(references, hypotheses):
    pairs = [score_pair(k, references[k], hypotheses.get(k, "")) for k in references]
    score = aggregate(pairs)
    cis = {
        METRIC_WER: BootstrapCI(METRIC_WER, score.wer_pct, score.wer_pct),
        METRIC_CER: BootstrapCI(METRIC_CER, score.cer_pct, score.cer_pct),
    }
    meta = RunMetadata(
        dataset_name="cv_ga",
        dataset_split="test",
        utterance_count=len(pairs),
        model_identity="test-model",
        norm_config=DEFAULT_NORM_CONFIG,
        resamples=1000,
        seed=42,
        ci_method="percentile",
        software_versions=software_versions(),
        timestamp=utc_timestamp(0),
    )
    return pairs, score, cis, meta


class TestLoadManifest:
    """Manifest parsing."""

    def test_preserves_file_order(self, tmp_path):
        """Utterances come back in file order, not sorted."""
        path = write_manifest(tmp_path / "m.jsonl", {"z": "dia duit", "a": "slán", "m": "go raibh maith agat"})
        utterances = load_manifest(path)
        assert [u.sample_id for u in utterances] == ["z", "a", "m"]
        assert utterances[0].reference == "dia duit"
        assert utterances[0].audio_path is None

    def test_audio_paths_resolve_against_manifest_dir(self, tmp_path):
        """Relative audio paths are joined to the manifest directory."""
        path = write_jsonl(tmp_path / "sub" / "m.jsonl", [
            {'id': "a", 'reference': "x", 'audio': "clips/a.wav"},
            {'id': "b", 'reference': "y", 'audio': "/abs/b.wav"},
        ])
        utterances = load_manifest(path)
        assert utterances[0].audio_path == str(tmp_path / "sub" / "clips" / "a.wav")
        assert utterances[1].audio_path == "/abs/b.wav"

    def test_duplicate_id_names_both_lines(self, tmp_path):
        """Duplicates are rejected with the line numbers involved."""
        path = write_jsonl(tmp_path / "m.jsonl", [
            {'id': "a", 'reference': "x"},
            {'id': "b", 'reference': "y"},
            {'id': "a", 'reference': "z"},
        ])
        with pytest.raises(ManifestError, match="line 3: Duplicate sample_id 'a' \\(first seen on line 1\\)") as exc_info:
            load_manifest(path)
        assert exc_info.value.line_number == 3

    def test_malformed_line_reports_line_number(self, tmp_path):
        """Broken JSON is reported with its line number."""
        path = tmp_path / "m.jsonl"
        path.write_text('{"id": "a", "reference": "x"}\n{"id": "b", \n', encoding='utf-8')
        with pytest.raises(ManifestError, match="line 2: Malformed JSON"):
            load_manifest(path)

    @pytest.mark.parametrize("row, message", [
        ({'reference': "x"}, "'id' must be a non-empty string"),
        ({'id': "", 'reference': "x"}, "'id' must be a non-empty string"),
        ({'id': 7, 'reference': "x"}, "'id' must be a non-empty string"),
        ({'id': "a"}, "'reference' must be a string"),
        ({'id': "a", 'reference': "x", 'audio': ""}, "'audio' must be a non-empty string"),
    ])
    def test_invalid_fields(self, tmp_path, row, message):
        """Each required field is checked."""
        path = write_jsonl(tmp_path / "m.jsonl", [row])
        with pytest.raises(ManifestError, match=message):
            load_manifest(path)

    def test_empty_reference_must_be_declared(self, tmp_path):
        """Blank references need an explicit declaration."""
        undeclared = write_jsonl(tmp_path / "bad.jsonl", [{'id': "a", 'reference': "  "}])
        with pytest.raises(ManifestError, match="not declared"):
            load_manifest(undeclared)

        declared = write_jsonl(tmp_path / "ok.jsonl", [{'id': "a", 'reference': "", 'empty_reference': True}])
        assert load_manifest(declared)[0].empty_reference is True

    def test_blank_lines_skipped(self, tmp_path):
        """Blank lines do not count as utterances but keep line numbering."""
        path = tmp_path / "m.jsonl"
        path.write_text('{"id": "a", "reference": "x"}\n\n{"id": "a", "reference": "y"}\n', encoding='utf-8')
        with pytest.raises(ManifestError, match="line 3"):
            load_manifest(path)

    def test_missing_file(self, tmp_path):
        """A missing manifest is a ManifestError."""
        with pytest.raises(ManifestError, match="Cannot read"):
            load_manifest(tmp_path / "absent.jsonl")

    def test_invalid_utf8(self, tmp_path):
        """Non UTF-8 bytes are rejected."""
        path = tmp_path / "m.jsonl"
        path.write_bytes(b'{"id": "a", "reference": "f\xe9ar"}\n')
        with pytest.raises(ManifestError, match="not valid UTF-8"):
            load_manifest(path)


class TestLoadPredictions:
    """Predictions parsing."""

    def test_extra_fields_ignored(self, tmp_path):
        """Released prediction lines are accepted as input."""
        path = write_jsonl(tmp_path / "p.jsonl", [
            {'id': "a", 'hypothesis': "dia duit", 'wer': 0.0, 'flags': []},
            {'id': "b", 'hypothesis': ""},
        ])
        assert load_predictions(path) == {"a": "dia duit", "b": ""}

    def test_duplicate_id_rejected(self, tmp_path):
        path = write_predictions(tmp_path / "p.jsonl", {"a": "x"})
        with open(path, 'a', encoding='utf-8') as f:
            f.write(json.dumps({'id': "a", 'hypothesis': "y"}) + "\n")
        with pytest.raises(PredictionsError, match="line 2: Duplicate sample_id 'a'"):
            load_predictions(path)

    def test_hypothesis_must_be_string(self, tmp_path):
        path = write_jsonl(tmp_path / "p.jsonl", [{'id': "a", 'hypothesis': None}])
        with pytest.raises(PredictionsError, match="'hypothesis' must be a string"):
            load_predictions(path)

    def test_prediction_errors_are_manifest_errors(self):
        """Callers can catch both file kinds together."""
        assert issubclass(PredictionsError, ManifestError)


class TestPredictionLine:
    """Released predictions.jsonl lines."""

    def test_key_order_and_values(self):
        """Keys appear in the documented order with normalised texts."""
        line = prediction_line(score_pair("a", "Dia duit!", "dia dhuit"))
        assert list(line) == [
            'id', 'reference', 'hypothesis', 'reference_norm', 'hypothesis_norm',
            'wer', 'cer', 'word_counts', 'char_counts', 'flags',
        ]
        assert line['reference'] == "Dia duit!"
        assert line['reference_norm'] == "dia duit"
        assert line['wer'] == 50.0
        assert line['word_counts'] == {'sub': 1, 'ins': 0, 'del': 0, 'n_ref': 2}
        assert line['flags'] == []

    def test_undefined_rates_are_null(self):
        """An empty reference gives null WER and CER."""
        line = prediction_line(score_pair("a", "", "aon", flags=("empty_reference",)))
        assert line['wer'] is None
        assert line['cer'] is None
        assert line['flags'] == ["empty_reference"]


class TestEmitArtifacts:
    """Artifact writing."""

    def test_writes_three_files(self, tmp_path):
        """A perfect run writes all artifacts with WER 0.0."""
        refs = {"b": "féar úr", "a": "dia duit"}
        pairs, score, cis, meta = sample_run(refs, dict(refs))
        paths = emit_artifacts(pairs, score, cis, meta, tmp_path / "run")

        assert set(paths) == set(ARTIFACT_FILES)
        assert is_run_dir(tmp_path / "run")

        results = read_json_artifact(paths[RESULTS_FILE])
        assert results['wer_pct'] == 0.0
        assert results['ci_95']['wer'] == {
            'low': 0.0, 'high': 0.0, 'resamples': 1000, 'seed': 42, 'method': "percentile",
        }
        assert list(results)[-1] == 'ci_95'

        lines = paths[PREDICTIONS_FILE].read_text(encoding='utf-8').splitlines()
        assert [json.loads(line)['id'] for line in lines] == ["b", "a"]
        assert all(json.loads(line)['wer'] == 0.0 for line in lines)

        meta_data = read_json_artifact(paths[META_FILE])
        assert meta_data['timestamp'] == "1970-01-01T00:00:00Z"
        assert meta_data['norm_config'] == DEFAULT_NORM_CONFIG.to_dict()
        assert RunMetadata.from_dict(meta_data) == meta

    def test_utf8_without_escapes_and_lf(self, tmp_path):
        """Fadas are written as UTF-8, lines end in LF only."""
        pairs, score, cis, meta = sample_run({"a": "féar"}, {"a": "féar"})
        paths = emit_artifacts(pairs, score, cis, meta, tmp_path)
        raw = paths[PREDICTIONS_FILE].read_bytes()
        assert "féar".encode('utf-8') in raw
        assert b"\\u00e9" not in raw
        assert b"\r\n" not in paths[RESULTS_FILE].read_bytes()

    def test_identical_inputs_give_identical_bytes(self, tmp_path):
        """Two emissions of the same run are byte-identical."""
        pairs, score, cis, meta = sample_run({"a": "dia duit", "b": "slán"}, {"a": "dia", "b": "slán abhaile"})
        first = emit_artifacts(pairs, score, cis, meta, tmp_path / "one")
        second = emit_artifacts(pairs, score, cis, meta, tmp_path / "two")
        for name in ARTIFACT_FILES:
            assert first[name].read_bytes() == second[name].read_bytes()

    def test_failure_leaves_nothing_behind(self, tmp_path, monkeypatch):
        """A failed move removes already placed files and the staging dir."""
        pairs, score, cis, meta = sample_run({"a": "dia duit"}, {"a": "dia duit"})
        real_replace = os.replace
        calls = []

        def flaky_replace(src, dst):
            calls.append(dst)
            if len(calls) == 2:
                raise OSError(28, "No space left on device")
            return real_replace(src, dst)

        monkeypatch.setattr("src.corpus_io.os.replace", flaky_replace)
        out_dir = tmp_path / "run"
        with pytest.raises(ArtifactError, match="Failed to write artifacts"):
            emit_artifacts(pairs, score, cis, meta, out_dir)

        assert list(out_dir.iterdir()) == []

    @pytest.mark.parametrize("failing_call", [1, 2, 3, 4, 5, 6])
    def test_failed_overwrite_keeps_previous_run(self, tmp_path, monkeypatch, failing_call):
        """A failure while replacing a run restores the previous three artifacts byte for byte."""
        out_dir = tmp_path / "run"
        old = sample_run({"a": "dia duit"}, {"a": "dia"})
        emit_artifacts(*old, out_dir)
        before = {name: (out_dir / name).read_bytes() for name in ARTIFACT_FILES}

        new = sample_run({"a": "dia duit", "b": "slán"}, {"a": "dia duit", "b": "slán"})
        real_replace = os.replace
        calls = []

        def flaky_replace(src, dst):
            calls.append(dst)
            if len(calls) == failing_call:
                raise OSError(28, "No space left on device")
            return real_replace(src, dst)

        monkeypatch.setattr("src.corpus_io.os.replace", flaky_replace)
        with pytest.raises(ArtifactError, match="Failed to write artifacts"):
            emit_artifacts(*new, out_dir)

        assert sorted(p.name for p in out_dir.iterdir()) == sorted(ARTIFACT_FILES)
        assert {name: (out_dir / name).read_bytes() for name in ARTIFACT_FILES} == before

    def test_overwrite_replaces_previous_run(self, tmp_path):
        """A successful emission over an earlier run leaves only the new artifacts."""
        out_dir = tmp_path / "run"
        emit_artifacts(*sample_run({"a": "dia duit"}, {"a": "dia"}), out_dir)
        emit_artifacts(*sample_run({"a": "dia duit"}, {"a": "dia duit"}), out_dir)

        assert sorted(p.name for p in out_dir.iterdir()) == sorted(ARTIFACT_FILES)
        assert read_json_artifact(out_dir / RESULTS_FILE)['wer_pct'] == 0.0

    def test_unwritable_target(self, tmp_path):
        """An out_dir that is a file is an ArtifactError."""
        pairs, score, cis, meta = sample_run({"a": "x"}, {"a": "x"})
        blocker = tmp_path / "file"
        blocker.write_text("", encoding='utf-8')
        with pytest.raises(ArtifactError, match="Cannot write"):
            emit_artifacts(pairs, score, cis, meta, blocker)


class TestArtifactReading:
    """Reading artifacts back."""

    def test_prediction_records(self, tmp_path):
        """Released predictions keep reference, WER and flags."""
        pairs, score, cis, meta = sample_run({"a": "dia duit", "b": ""}, {"a": "dia"})
        emit_artifacts(pairs, score, cis, meta, tmp_path)
        records = load_prediction_records(tmp_path / PREDICTIONS_FILE)
        assert [r.sample_id for r in records] == ["a", "b"]
        assert records[0].wer_pct == 50.0
        assert records[1].wer_pct is None

    def test_released_line_without_reference(self, tmp_path):
        """Plain prediction files are not released artifacts."""
        path = write_predictions(tmp_path / "p.jsonl", {"a": "x"})
        with pytest.raises(PredictionsError, match="Missing field 'reference'"):
            load_prediction_records(path)

    def test_missing_and_malformed_json(self, tmp_path):
        with pytest.raises(ArtifactError, match="not found"):
            read_json_artifact(tmp_path / "results.json")
        broken = tmp_path / "meta.json"
        broken.write_text("{", encoding='utf-8')
        with pytest.raises(ArtifactError, match="Malformed JSON"):
            read_json_artifact(broken)

    def test_meta_with_missing_field(self):
        """Incomplete meta.json is an ArtifactError."""
        with pytest.raises(ArtifactError, match="Invalid meta.json"):
            RunMetadata.from_dict({'dataset_name': "cv"})

    def test_meta_norm_config_round_trip(self):
        """A non-default normaliser snapshot survives serialisation."""
        config = NormConfig(apostrophe_policy="strip_all", digit_policy="reject")
        _, _, _, meta = sample_run({"a": "x"}, {"a": "x"})
        meta.norm_config = config
        assert RunMetadata.from_dict(json.loads(json.dumps(meta.to_dict()))).norm_config == config


class TestProvenance:
    """Version and timestamp helpers."""

    def test_software_versions_keys(self):
        assert list(software_versions()) == ['asr_eval', 'python', 'numpy', 'unicode']

    def test_timestamp_from_epoch(self):
        assert utc_timestamp(1700000000) == "2023-11-14T22:13:20Z"

    def test_timestamp_format(self):
        stamp = utc_timestamp()
        assert len(stamp) == 20 and stamp.endswith("Z") and stamp[10] == "T"

"""
Unit tests for configuration module.

Tests configuration loading, validation, and error handling.
"""

import pytest
from src.config import Config
from src.ga_normalizer import DEFAULT_NORM_CONFIG, NormConfig


class TestConfigDefaults:
    """Test default configuration values."""

    def test_default_values(self):
        """Test that Config reproduces the published protocol by default."""
        config = Config()

        # Normaliser
        assert config.lowercase is True
        assert config.strip_punctuation is True
        assert config.collapse_whitespace is True
        assert config.apostrophe_policy == "keep_intra_word"
        assert config.digit_policy == "keep"

        # Bootstrap
        assert config.resamples == 1000
        assert config.seed == 42
        assert config.ci_method == "percentile"

        # Scoring
        assert config.workers == 1
        assert config.timeout_secs == 300.0

        # Analysis
        assert config.ins_threshold_pct == 20.0
        assert config.hard_wer_threshold_pct == 50.0

        assert config.log_level == "INFO"
        assert config.source_date_epoch is None

    def test_norm_config_snapshot(self):
        """Test that the default normaliser snapshot matches the module default."""
        assert Config().norm_config() == DEFAULT_NORM_CONFIG
        assert Config(digit_policy="reject").norm_config() == NormConfig(digit_policy="reject")


class TestConfigFromEnvironment:
    """Test loading configuration from environment variables."""

    def test_load_from_environment(self, monkeypatch):
        """Test loading configuration from environment variables."""
        monkeypatch.setenv("ASR_EVAL_RESAMPLES", "200")
        monkeypatch.setenv("ASR_EVAL_SEED", "7")
        monkeypatch.setenv("ASR_EVAL_WORKERS", "4")
        monkeypatch.setenv("ASR_EVAL_TIMEOUT_SECS", "12.5")
        monkeypatch.setenv("ASR_EVAL_APOSTROPHE_POLICY", "strip_all")
        monkeypatch.setenv("ASR_EVAL_LOWERCASE", "false")
        monkeypatch.setenv("ASR_EVAL_LOG_LEVEL", "debug")
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")

        config = Config.from_environment()

        assert config.resamples == 200
        assert config.seed == 7
        assert config.workers == 4
        assert config.timeout_secs == 12.5
        assert config.apostrophe_policy == "strip_all"
        assert config.lowercase is False
        assert config.log_level == "DEBUG"
        assert config.source_date_epoch == 1700000000

    def test_unset_variables_keep_defaults(self, monkeypatch):
        """Test that absent variables leave defaults untouched."""
        for name in ("ASR_EVAL_RESAMPLES", "ASR_EVAL_SEED", "SOURCE_DATE_EPOCH"):
            monkeypatch.delenv(name, raising=False)
        config = Config.from_environment()
        assert config.resamples == 1000
        assert config.seed == 42
        assert config.source_date_epoch is None

    def test_invalid_integer_environment_variable(self, monkeypatch):
        """Test that invalid integer values raise ValueError."""
        monkeypatch.setenv("ASR_EVAL_RESAMPLES", "not_a_number")

        with pytest.raises(ValueError, match="not a valid integer"):
            Config.from_environment()

    def test_invalid_float_environment_variable(self, monkeypatch):
        """Test that invalid float values raise ValueError."""
        monkeypatch.setenv("ASR_EVAL_TIMEOUT_SECS", "soon")

        with pytest.raises(ValueError, match="not a valid number"):
            Config.from_environment()

    def test_invalid_boolean_environment_variable(self, monkeypatch):
        """Test that unrecognised booleans raise ValueError."""
        monkeypatch.setenv("ASR_EVAL_STRIP_PUNCTUATION", "maybe")

        with pytest.raises(ValueError, match="not a valid boolean"):
            Config.from_environment()

    def test_invalid_source_date_epoch(self, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "yesterday")

        with pytest.raises(ValueError, match="SOURCE_DATE_EPOCH"):
            Config.from_environment()


class TestConfigValidation:
    """Test configuration validation."""

    def test_valid_configuration(self):
        """Test that valid configuration passes validation."""
        config = Config()
        errors = config.validate()
        assert errors == []

    def test_unknown_policies(self):
        """Test that normaliser policies outside their enums are invalid."""
        config = Config(apostrophe_policy="keep", digit_policy="spell_out")
        errors = config.validate()
        assert any("Apostrophe policy must be one of" in err for err in errors)
        assert any("Digit policy must be one of" in err for err in errors)

    def test_invalid_resamples(self):
        """Test that resample count less than 1 is invalid."""
        config = Config(resamples=0)
        errors = config.validate()
        assert any("Resamples must be at least 1" in err for err in errors)

    def test_negative_seed(self):
        config = Config(seed=-1)
        errors = config.validate()
        assert any("Seed cannot be negative" in err for err in errors)

    def test_unknown_ci_method(self):
        config = Config(ci_method="bca")
        errors = config.validate()
        assert any("CI method must be one of" in err for err in errors)

    def test_invalid_worker_count(self):
        """Test that worker counts less than 1 are invalid."""
        config = Config(workers=0)
        errors = config.validate()
        assert any("Workers must be at least 1" in err for err in errors)

    def test_non_positive_timeout(self):
        """Test that zero timeout is invalid."""
        config = Config(timeout_secs=0)
        errors = config.validate()
        assert any("Timeout must be positive" in err for err in errors)

    def test_negative_thresholds(self):
        """Test that negative analysis thresholds are invalid."""
        config = Config(ins_threshold_pct=-1.0, hard_wer_threshold_pct=-5.0)
        errors = config.validate()
        assert len([e for e in errors if "cannot be negative" in e]) == 2

    def test_invalid_log_level(self):
        config = Config(log_level="CHATTY")
        errors = config.validate()
        assert any("Log level must be one of" in err for err in errors)

    def test_negative_source_date_epoch(self):
        config = Config(source_date_epoch=-1)
        errors = config.validate()
        assert any("SOURCE_DATE_EPOCH cannot be negative" in err for err in errors)

    def test_multiple_validation_errors(self):
        """Test that multiple validation errors are all reported."""
        config = Config(
            resamples=0,
            seed=-3,
            workers=0,
            timeout_secs=-1.0,
            digit_policy="drop"
        )
        errors = config.validate()
        assert len(errors) >= 5

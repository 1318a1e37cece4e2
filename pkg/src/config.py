"""
Configuration module for the ASR evaluation harness.

This module provides centralized configuration management with validation
for all evaluation parameters. Values come from defaults, are overlaid by
environment variables, and are finally overridden by command-line flags.
"""

import os
from dataclasses import dataclass
from typing import List, Optional

from .ga_normalizer import (
    APOSTROPHE_POLICIES,
    DIGIT_POLICIES,
    NormConfig,
)


ENV_PREFIX = "ASR_EVAL_"

CI_METHODS = ("percentile",)
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass
class Config:
    """
    Configuration for the ASR evaluation harness.

    The defaults give the standard leaderboard protocol: the default
    normaliser, 1000 bootstrap resamples and seed 42. The validate() method
    ensures all values are usable before any scoring starts.
    """

    # Normaliser
    lowercase: bool = True
    strip_punctuation: bool = True
    collapse_whitespace: bool = True
    apostrophe_policy: str = "keep_intra_word"
    digit_policy: str = "keep"

    # Bootstrap
    resamples: int = 1000
    seed: int = 42
    ci_method: str = "percentile"

    # Scoring
    workers: int = 1
    timeout_secs: float = 300.0  # per utterance, adapter runs only

    # Analysis
    ins_threshold_pct: float = 20.0
    hard_wer_threshold_pct: float = 50.0

    # Logging
    log_level: str = "INFO"

    # Pins meta.json timestamps (seconds since epoch) for reproducible metadata
    source_date_epoch: Optional[int] = None

    @classmethod
    def from_environment(cls) -> 'Config':
        """
        Load configuration from environment variables.

        Returns:
            Config: Configuration object with values from environment

        Raises:
            ValueError: If an environment variable cannot be parsed
        """
        config = cls()

        # Normaliser
        config.lowercase = cls._get_bool_env("LOWERCASE", config.lowercase)
        config.strip_punctuation = cls._get_bool_env(
            "STRIP_PUNCTUATION", config.strip_punctuation
        )
        config.collapse_whitespace = cls._get_bool_env(
            "COLLAPSE_WHITESPACE", config.collapse_whitespace
        )
        config.apostrophe_policy = os.getenv(
            ENV_PREFIX + "APOSTROPHE_POLICY", config.apostrophe_policy
        )
        config.digit_policy = os.getenv(
            ENV_PREFIX + "DIGIT_POLICY", config.digit_policy
        )

        # Bootstrap
        config.resamples = cls._get_int_env("RESAMPLES", config.resamples)
        config.seed = cls._get_int_env("SEED", config.seed)
        config.ci_method = os.getenv(ENV_PREFIX + "CI_METHOD", config.ci_method)

        # Scoring
        config.workers = cls._get_int_env("WORKERS", config.workers)
        config.timeout_secs = cls._get_float_env(
            "TIMEOUT_SECS", config.timeout_secs
        )

        # Analysis
        config.ins_threshold_pct = cls._get_float_env(
            "INS_THRESHOLD_PCT", config.ins_threshold_pct
        )
        config.hard_wer_threshold_pct = cls._get_float_env(
            "HARD_WER_THRESHOLD_PCT", config.hard_wer_threshold_pct
        )

        # Logging
        config.log_level = os.getenv(
            ENV_PREFIX + "LOG_LEVEL", config.log_level
        ).upper()

        epoch = os.getenv("SOURCE_DATE_EPOCH")
        if epoch is not None:
            try:
                config.source_date_epoch = int(epoch)
            except ValueError:
                raise ValueError(
                    f"Environment variable SOURCE_DATE_EPOCH='{epoch}' is not a valid integer"
                )

        return config

    @staticmethod
    def _get_int_env(key: str, default: int) -> int:
        """
        Get integer value from a prefixed environment variable.

        Args:
            key: Variable name without the ASR_EVAL_ prefix
            default: Default value if not set

        Returns:
            int: Parsed integer value

        Raises:
            ValueError: If value cannot be parsed as integer
        """
        name = ENV_PREFIX + key
        value = os.getenv(name)
        if value is None:
            return default
        try:
            return int(value)
        except ValueError:
            raise ValueError(
                f"Environment variable {name}='{value}' is not a valid integer"
            )

    @staticmethod
    def _get_float_env(key: str, default: float) -> float:
        """
        Get float value from a prefixed environment variable.

        Raises:
            ValueError: If value cannot be parsed as float
        """
        name = ENV_PREFIX + key
        value = os.getenv(name)
        if value is None:
            return default
        try:
            return float(value)
        except ValueError:
            raise ValueError(
                f"Environment variable {name}='{value}' is not a valid number"
            )

    @staticmethod
    def _get_bool_env(key: str, default: bool) -> bool:
        name = ENV_PREFIX + key
        value = os.getenv(name)
        if value is None:
            return default
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(
            f"Environment variable {name}='{value}' is not a valid boolean"
        )

    def norm_config(self) -> NormConfig:
        """Snapshot of the normaliser settings, as recorded in meta.json."""
        return NormConfig(
            lowercase=self.lowercase,
            strip_punctuation=self.strip_punctuation,
            collapse_whitespace=self.collapse_whitespace,
            apostrophe_policy=self.apostrophe_policy,
            digit_policy=self.digit_policy,
        )

    def validate(self) -> List[str]:
        """
        Validate all configuration values.

        Returns:
            List[str]: List of validation error messages (empty if valid)
        """
        errors = []

        # Validate Normaliser
        if self.apostrophe_policy not in APOSTROPHE_POLICIES:
            errors.append(
                f"Apostrophe policy must be one of {list(APOSTROPHE_POLICIES)}, "
                f"got '{self.apostrophe_policy}'"
            )

        if self.digit_policy not in DIGIT_POLICIES:
            errors.append(
                f"Digit policy must be one of {list(DIGIT_POLICIES)}, "
                f"got '{self.digit_policy}'"
            )

        # Validate Bootstrap
        if self.resamples < 1:
            errors.append(f"Resamples must be at least 1, got {self.resamples}")

        if self.seed < 0:
            errors.append(f"Seed cannot be negative, got {self.seed}")

        if self.ci_method not in CI_METHODS:
            errors.append(
                f"CI method must be one of {list(CI_METHODS)}, got '{self.ci_method}'"
            )

        # Validate Scoring
        if self.workers < 1:
            errors.append(f"Workers must be at least 1, got {self.workers}")

        if self.timeout_secs <= 0:
            errors.append(
                f"Timeout must be positive, got {self.timeout_secs}"
            )

        # Validate Analysis
        if self.ins_threshold_pct < 0:
            errors.append(
                f"Insertion threshold cannot be negative, got {self.ins_threshold_pct}"
            )

        if self.hard_wer_threshold_pct < 0:
            errors.append(
                f"Hard-utterance WER threshold cannot be negative, got {self.hard_wer_threshold_pct}"
            )

        # Validate Logging
        if self.log_level not in LOG_LEVELS:
            errors.append(
                f"Log level must be one of {list(LOG_LEVELS)}, got '{self.log_level}'"
            )

        if self.source_date_epoch is not None and self.source_date_epoch < 0:
            errors.append(
                f"SOURCE_DATE_EPOCH cannot be negative, got {self.source_date_epoch}"
            )

        return errors

"""
Exception hierarchy for the ASR evaluation harness.

Every failure the harness can report to a user derives from EvaluationError
so the CLI can map it to an exit status in one place.
"""

from typing import Optional


class EvaluationError(Exception):
    """Base class for all harness errors."""
    pass


class NormalizationConfigError(EvaluationError):
    """Raised when input text violates the normaliser configuration."""

    def __init__(self, message: str, sample_id: Optional[str] = None):
        self.sample_id = sample_id
        if sample_id is not None:
            message = f"{message} (sample_id={sample_id})"
        super().__init__(message)


class ManifestError(EvaluationError):
    """Raised when a dataset manifest cannot be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class PredictionsError(ManifestError):
    """Raised when a predictions file cannot be parsed."""
    pass


class AggregateUndefinedError(EvaluationError):
    """Raised when a corpus has no reference units to divide by."""
    pass


class AdapterError(EvaluationError):
    """Raised when the model adapter process fails."""

    def __init__(self, message: str, returncode: Optional[int] = None, stderr: str = ""):
        self.returncode = returncode
        self.stderr = stderr
        super().__init__(message)


class AdapterProtocolError(EvaluationError):
    """Raised when the model adapter violates the line protocol."""
    pass


class ArtifactError(EvaluationError):
    """Raised when run artifacts cannot be written, read or reproduced."""
    pass


class AnalysisError(EvaluationError):
    """Raised when a cross-run report cannot be built from the given runs."""
    pass

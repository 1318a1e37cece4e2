"""
Observability module for the ASR evaluation harness.

This module provides structured logging to standard error and a run
statistics buffer whose contents are recorded in each run's meta.json.
"""

import logging
from typing import Any, Dict, List, Optional

from .config import Config


LOGGER_NAME = "src"

# Wall-clock metrics vary between identical runs and stay out of artifacts.
VOLATILE_UNITS = {"Seconds"}


class ObservabilityManager:
    """
    Manages observability features including structured logging and
    run statistics.

    This class handles:
    - Structured logging with context fields
    - Buffering of run counters (scored utterances, timeouts, redraws)
    - Export of deterministic counters for run metadata
    """

    def __init__(self, config: Config):
        """
        Initialize Observability Manager.

        Args:
            config: Configuration object with the log level
        """
        self.config = config
        self.logger = self._setup_logger()
        self._metrics_buffer: List[Dict[str, Any]] = []

    def _setup_logger(self) -> logging.Logger:
        """
        Configure the package logger.

        Every module logs through logging.getLogger(__name__), so configuring
        the package root once covers all of them.

        Returns:
            logging.Logger: Configured logger instance
        """
        logger = logging.getLogger(LOGGER_NAME)
        level = getattr(logging, self.config.log_level, logging.INFO)
        logger.setLevel(level)

        # Only configure if not already configured
        if not logger.handlers:
            # StreamHandler writes to stderr; stdout is reserved for data
            handler = logging.StreamHandler()
            formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            )
            handler.setFormatter(formatter)
            logger.addHandler(handler)

        for handler in logger.handlers:
            handler.setLevel(level)

        return logger

    def log_info(self, message: str, **context) -> None:
        """
        Log info message with structured context.

        Args:
            message: Log message
            **context: Additional context fields (sample_id, run_dir, etc.)
        """
        if context:
            self.logger.info(message, extra=context)
        else:
            self.logger.info(message)

    def log_warning(self, message: str, **context) -> None:
        """
        Log warning message with structured context.

        Args:
            message: Log message
            **context: Additional context fields
        """
        if context:
            self.logger.warning(message, extra=context)
        else:
            self.logger.warning(message)

    def log_error(self, message: str, error: Optional[Exception] = None, **context) -> None:
        """
        Log error message with exception details and context.

        Args:
            message: Log message
            error: Exception object (optional)
            **context: Additional context fields
        """
        if error:
            context['error_type'] = type(error).__name__
            context['error_message'] = str(error)[:200]

            stderr = getattr(error, 'stderr', None)
            if stderr:
                context['adapter_stderr'] = stderr.strip()[-500:]

        context_str = ' | '.join(f"{k}={v}" for k, v in context.items()) if context else ''

        if context_str:
            self.logger.error(f"{message} | {context_str}")
        else:
            self.logger.error(message)

    def record_metric(self, metric_name: str, value: float, unit: str = 'Count') -> None:
        """
        Buffer a run statistic.

        Args:
            metric_name: Name of the metric
            value: Metric value
            unit: Unit (Count, Seconds, etc.)
        """
        self._metrics_buffer.append({
            'MetricName': metric_name,
            'Value': value,
            'Unit': unit,
        })

        self.logger.debug(
            f"Recorded metric: {metric_name}={value} {unit}",
            extra={
                'metric_name': metric_name,
                'metric_value': value,
                'metric_unit': unit
            }
        )

    def metrics_snapshot(self, include_volatile: bool = False) -> Dict[str, float]:
        """
        Collapse buffered metrics into a name -> value map.

        Repeated metrics are summed. Wall-clock metrics are left out unless
        include_volatile is set, so the snapshot can go into artifacts.

        Returns:
            Dict[str, float]: Metric values keyed by name, in sorted order
        """
        snapshot: Dict[str, float] = {}
        for metric in self._metrics_buffer:
            if metric['Unit'] in VOLATILE_UNITS and not include_volatile:
                continue
            name = metric['MetricName']
            snapshot[name] = snapshot.get(name, 0) + metric['Value']
        return {name: snapshot[name] for name in sorted(snapshot)}

    def clear_metrics(self) -> None:
        self._metrics_buffer.clear()

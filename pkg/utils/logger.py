"""
Structured Logging Module
Provides JSON-formatted logs for run analysis and debugging.
Logs never go to stdout: CLI output must stay byte-stable.
"""

import logging
import os
import sys
from pathlib import Path

import structlog


class LoggerSetup:
    """Configure structured logging for the laboratory"""

    ROOT_NAME = "advgen"

    _initialized = False

    @classmethod
    def get_logger(cls, name: str = "advgen"):
        """
        Get or create a structured logger

        Args:
            name: Component name bound to every event

        Returns:
            Configured structlog logger
        """
        if not cls._initialized:
            cls._setup_logging()
            cls._initialized = True

        return structlog.get_logger(cls.ROOT_NAME).bind(component=name)

    @classmethod
    def log_dir(cls) -> Path:
        """Directory receiving processing.log, errors.log and performance.json"""
        return Path(os.environ.get("ADVGEN_LOG_DIR", "logs"))

    @classmethod
    def _setup_logging(cls):
        """Configure structlog with processors and stdlib handlers"""

        logs_dir = cls.log_dir()
        logs_dir.mkdir(parents=True, exist_ok=True)

        level_name = os.environ.get("ADVGEN_LOG_LEVEL", "INFO").upper()
        level = getattr(logging, level_name, logging.INFO)

        root = logging.getLogger(cls.ROOT_NAME)
        root.setLevel(level)
        root.propagate = False
        for handler in list(root.handlers):
            root.removeHandler(handler)

        formatter = logging.Formatter("%(message)s")

        # All logs
        processing = logging.FileHandler(logs_dir / "processing.log", encoding="utf-8")
        processing.setFormatter(formatter)

        # Error logs only
        errors = logging.FileHandler(logs_dir / "errors.log", encoding="utf-8")
        errors.setLevel(logging.ERROR)
        errors.setFormatter(formatter)

        # Console: warnings and up, on stderr
        console = logging.StreamHandler(sys.stderr)
        console.setLevel(logging.WARNING)
        console.setFormatter(formatter)

        for handler in (processing, errors, console):
            root.addHandler(handler)

        structlog.configure(
            processors=[
                structlog.processors.TimeStamper(fmt="iso", utc=True),
                structlog.processors.add_log_level,
                structlog.processors.CallsiteParameterAdder(
                    [
                        structlog.processors.CallsiteParameter.FILENAME,
                        structlog.processors.CallsiteParameter.FUNC_NAME,
                        structlog.processors.CallsiteParameter.LINENO,
                    ]
                ),
                structlog.processors.StackInfoRenderer(),
                structlog.processors.format_exc_info,
                structlog.processors.JSONRenderer(),
            ],
            wrapper_class=structlog.make_filtering_bound_logger(level),
            context_class=dict,
            logger_factory=structlog.stdlib.LoggerFactory(),
            cache_logger_on_first_use=True,
        )

    @classmethod
    def log_file_operation(
        cls,
        operation: str,
        filename: str,
        status: str,
        **kwargs
    ):
        """
        Convenience method for logging file operations

        Args:
            operation: Operation type (e.g., 'write_report', 'load_model')
            filename: File being processed
            status: Status (e.g., 'started', 'completed', 'failed')
            **kwargs: Additional context
        """
        logger = cls.get_logger("io")

        log_data = {
            "operation": operation,
            "filename": filename,
            "status": status,
            **kwargs
        }

        if status == "failed":
            logger.error(f"file_{operation}_{status}", **log_data)
        else:
            logger.info(f"file_{operation}_{status}", **log_data)

    @classmethod
    def log_performance(
        cls,
        metric_name: str,
        value: float,
        unit: str = "seconds",
        **kwargs
    ):
        """
        Log performance metrics

        Args:
            metric_name: Metric name (e.g., 'attack_duration')
            value: Metric value
            unit: Unit of measurement
            **kwargs: Additional context
        """
        logger = cls.get_logger("performance")
        logger.info(
            "performance_metric",
            metric=metric_name,
            value=value,
            unit=unit,
            **kwargs
        )


# Global logger instance
logger = LoggerSetup.get_logger()


def get_logger(name: str = "advgen"):
    """Wrapper function for easy import"""
    return LoggerSetup.get_logger(name)

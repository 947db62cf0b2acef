"""
Logging configuration for the gravity-compensation toolkit
"""
import json
import logging
import logging.handlers
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Optional

from config import config

_RESERVED_ATTRS = {
    'name', 'msg', 'args', 'levelname', 'levelno', 'pathname', 'filename',
    'module', 'lineno', 'funcName', 'created', 'msecs', 'relativeCreated',
    'thread', 'threadName', 'processName', 'process', 'getMessage', 'exc_info',
    'exc_text', 'stack_info', 'message', 'taskName',
}


def setup_logging(
    log_level: Optional[str] = None,
    log_file: Optional[Path] = None,
    enable_file_logging: Optional[bool] = None,
    enable_console_logging: bool = True,
    max_file_size: int = 10 * 1024 * 1024,  # 10MB
    backup_count: int = 5
) -> logging.Logger:
    """
    Setup logging for the toolkit

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Path to log file (default: <log_dir>/gravcomp.log)
        enable_file_logging: Whether to log to file (default: config value)
        enable_console_logging: Whether to log to console (stderr)
        max_file_size: Maximum size of log file before rotation
        backup_count: Number of backup files to keep

    Returns:
        Configured root logger
    """
    if log_level is None:
        log_level = config.log_level
    if enable_file_logging is None:
        enable_file_logging = config.enable_file_logging

    numeric_level = getattr(logging, log_level.upper(), logging.INFO)

    logger = logging.getLogger()
    logger.setLevel(numeric_level)

    for handler in logger.handlers[:]:
        logger.removeHandler(handler)

    detailed_formatter = logging.Formatter(
        fmt='%(asctime)s | %(name)s | %(levelname)s | %(module)s:%(funcName)s:%(lineno)d | %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    simple_formatter = logging.Formatter(
        fmt='%(asctime)s | %(levelname)s | %(message)s',
        datefmt='%H:%M:%S'
    )

    if enable_console_logging:
        console_handler = logging.StreamHandler()
        console_handler.setLevel(numeric_level)
        console_handler.setFormatter(simple_formatter)
        logger.addHandler(console_handler)

    if enable_file_logging:
        logs_dir = Path(config.log_dir)
        logs_dir.mkdir(parents=True, exist_ok=True)

        if log_file is None:
            log_file = logs_dir / "gravcomp.log"

        file_handler = logging.handlers.RotatingFileHandler(
            filename=log_file,
            maxBytes=max_file_size,
            backupCount=backup_count,
            encoding='utf-8'
        )
        file_handler.setLevel(numeric_level)
        file_handler.setFormatter(detailed_formatter)
        logger.addHandler(file_handler)

        # Errors and above only
        error_handler = logging.handlers.RotatingFileHandler(
            filename=logs_dir / "errors.log",
            maxBytes=max_file_size,
            backupCount=backup_count,
            encoding='utf-8'
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(detailed_formatter)
        logger.addHandler(error_handler)

    logger.debug(f"Logging initialized with level: {log_level}")
    return logger


class JsonFormatter(logging.Formatter):
    """One JSON object per record"""

    def format(self, record):
        log_entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno
        }

        for key, value in record.__dict__.items():
            if key not in _RESERVED_ATTRS:
                log_entry[key] = value

        return json.dumps(log_entry, default=str)


class StructuredLogger:
    """Structured run log (logs/structured.json) for later analysis"""

    def __init__(self, logger_name: str = "gravcomp.structured"):
        self.logger = logging.getLogger(logger_name)
        self.logger.propagate = False
        self.logger.setLevel(logging.INFO)
        self.setup_json_logging()

    def setup_json_logging(self):
        """Attach the JSON file handler (no-op when file logging is disabled)"""
        for handler in self.logger.handlers[:]:
            self.logger.removeHandler(handler)
            handler.close()

        if not config.enable_file_logging:
            self.logger.addHandler(logging.NullHandler())
            return

        logs_dir = Path(config.log_dir)
        logs_dir.mkdir(parents=True, exist_ok=True)

        json_handler = logging.handlers.RotatingFileHandler(
            filename=logs_dir / "structured.json",
            maxBytes=50 * 1024 * 1024,  # 50MB
            backupCount=10,
            encoding='utf-8'
        )
        json_handler.setLevel(logging.INFO)
        json_handler.setFormatter(JsonFormatter())
        self.logger.addHandler(json_handler)

    def log_run_event(self, command: str, details: dict):
        """Log the outcome of one CLI command"""
        self.logger.info(command, extra={
            "event_type": "run",
            "command": command,
            "details": details,
        })

    def log_error(self, error_type: str, error_message: str,
                  context: Optional[dict] = None):
        """Log errors with context"""
        self.logger.error("run_error", extra={
            "event_type": "run_error",
            "error_type": error_type,
            "error_message": error_message,
            "context": context or {},
        })


@lru_cache(maxsize=None)
def get_structured_logger() -> StructuredLogger:
    return StructuredLogger()


class LogExecutionTime:
    """Context manager to log execution time"""

    def __init__(self, operation_name: str, logger: Optional[logging.Logger] = None):
        self.operation_name = operation_name
        self.logger = logger or logging.getLogger("gravcomp.performance")
        self.start_time = None
        self.duration = None

    def __enter__(self):
        self.start_time = datetime.now(timezone.utc)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration = (datetime.now(timezone.utc) - self.start_time).total_seconds()

        if exc_type is None:
            self.logger.info(f"{self.operation_name} completed in {self.duration:.3f}s")
        else:
            self.logger.error(f"{self.operation_name} failed after {self.duration:.3f}s: {exc_val}")

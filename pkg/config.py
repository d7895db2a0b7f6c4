# config.py - Runtime settings and structured logging for thermolimit
"""
Settings are read from the environment (and an optional .env file) once per
process. Logging goes through structlog on stderr; stdout belongs to the CLI
payloads (CSV, JSON verdicts, plot scripts).
"""

import os
import sys
import logging
from dataclasses import dataclass
from functools import lru_cache

import structlog
from dotenv import load_dotenv

__version__ = "0.1.0"

UNITS_NOTE = "k_B = hbar = 1"

# ============================================================================
# SETTINGS
# ============================================================================

LOG_FORMATS = ("console", "json")


def _default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        return default


@dataclass(frozen=True)
class Settings:
    """Process-wide configuration"""
    threads: int
    log_level: str = "WARNING"
    log_format: str = "console"
    float_digits: int = 17

    @classmethod
    def from_env(cls) -> "Settings":
        """Build settings from THERMOLIMIT_* environment variables"""
        load_dotenv()
        threads = max(1, _int_env("THERMOLIMIT_THREADS", _default_threads()))
        level = os.getenv("THERMOLIMIT_LOG_LEVEL", "WARNING").upper()
        # getLevelNamesMapping is 3.11+; _nameToLevel is the same mapping on 3.10
        if level not in getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))():
            level = "WARNING"
        fmt = os.getenv("THERMOLIMIT_LOG_FORMAT", "console").lower()
        if fmt not in LOG_FORMATS:
            fmt = "console"
        digits = min(17, max(6, _int_env("THERMOLIMIT_FLOAT_DIGITS", 17)))
        return cls(threads=threads, log_level=level, log_format=fmt, float_digits=digits)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Cached settings for this process"""
    return Settings.from_env()


# ============================================================================
# LOGGING
# ============================================================================

_configured = False


def configure_logging(settings: Settings = None, force: bool = False) -> None:
    """Configure structlog over stdlib logging on stderr"""
    global _configured
    if _configured and not force:
        return
    settings = settings or get_settings()

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(settings.log_level)

    renderer = (
        structlog.processors.JSONRenderer()
        if settings.log_format == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    _configured = True

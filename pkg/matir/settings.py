"""
Process-level settings read from the environment (.env supported).
Enables: "How many threads, how loud, and are debug checks on?"
"""
import logging
import os
from dataclasses import dataclass
from threading import Lock
from typing import Optional

logger = logging.getLogger(__name__)

_TRUE_VALUES = frozenset({"1", "true", "yes", "on"})


@dataclass
class Settings:
    """Resolved MATIR_* environment settings."""
    threads: int = 1
    log_level: str = "INFO"
    debug_checks: bool = False
    run_slow: bool = False


def _env_flag(name: str) -> bool:
    return os.getenv(name, "false").strip().lower() in _TRUE_VALUES


def _resolve_threads() -> int:
    raw = os.getenv("MATIR_THREADS")
    auto = os.cpu_count() or 1
    if not raw:
        return auto
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Invalid MATIR_THREADS: {raw}; using auto ({auto})")
        return auto
    if value < 0:
        logger.warning(f"Negative MATIR_THREADS: {raw}; using auto ({auto})")
        return auto
    return value if value > 0 else auto


def load_settings() -> Settings:
    """Read settings from the current environment."""
    return Settings(
        threads=_resolve_threads(),
        log_level=os.getenv("MATIR_LOG_LEVEL", "INFO").upper(),
        debug_checks=_env_flag("MATIR_DEBUG_CHECKS"),
        run_slow=_env_flag("MATIR_RUN_SLOW"),
    )


_lock = Lock()
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get the process-wide settings (loaded lazily once)."""
    global _settings
    with _lock:
        if _settings is None:
            _settings = load_settings()
        return _settings


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf assertion mode at runtime."""
    get_settings().debug_checks = enabled


def reset_settings() -> None:
    """Forget cached settings so the next get_settings() re-reads the environment."""
    global _settings
    with _lock:
        _settings = None

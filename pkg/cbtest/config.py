"""Runtime settings read from the environment (and an optional .env file)."""

import logging
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from .errors import ConfigError

DEFAULT_SEED = 20240601
DEFAULT_REPS = 10_000
MAX_REPS = 1_000_000


@dataclass(frozen=True)
class Settings:
    threads: int
    seed: int
    replications: int
    log_level: str
    cors_origins: tuple


_settings: Optional[Settings] = None


def _int_var(name: str, default: int, bad: list) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        bad.append(f"{name}={raw!r}")
        return default
    if value <= 0:
        bad.append(f"{name}={raw!r}")
    return value


def load_settings() -> Settings:
    """Read settings fresh from the environment."""
    load_dotenv()

    bad_vars = []
    threads = _int_var("CBTEST_THREADS", os.cpu_count() or 1, bad_vars)
    seed = _int_var("CBTEST_SEED", DEFAULT_SEED, bad_vars)
    reps = _int_var("CBTEST_REPS", DEFAULT_REPS, bad_vars)
    if reps > MAX_REPS:
        bad_vars.append(f"CBTEST_REPS={reps} (max {MAX_REPS})")

    log_level = os.getenv("CBTEST_LOG_LEVEL", "INFO").upper()
    if log_level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        bad_vars.append(f"CBTEST_LOG_LEVEL={log_level!r}")

    origins = os.getenv(
        "CBTEST_CORS_ORIGINS",
        "http://localhost,http://localhost:8080,http://127.0.0.1:8080",
    )

    if bad_vars:
        raise ConfigError(f"Invalid environment variables: {', '.join(bad_vars)}")

    return Settings(
        threads=threads,
        seed=seed,
        replications=reps,
        log_level=log_level,
        cors_origins=tuple(o.strip() for o in origins.split(",") if o.strip()),
    )


def get_settings() -> Settings:
    global _settings
    if _settings is None:
        _settings = load_settings()
    return _settings


def reset_settings() -> None:
    """Forget cached settings (tests change the environment)."""
    global _settings
    _settings = None


def configure_logging(level: Optional[str] = None) -> logging.Logger:
    level = level or get_settings().log_level
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logger = logging.getLogger("cbtest")
    logger.setLevel(level)
    return logger

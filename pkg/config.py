"""
Runtime Settings for the KDE / Reversible Markov Chain Toolkit
Loads environment configuration (.env aware) and installs coloured logging
"""

import logging
import os
import sys
from dataclasses import dataclass
from typing import Optional

import colorlog
from dotenv import load_dotenv

# Pick up a local .env before reading any setting
load_dotenv()

logger = logging.getLogger(__name__)

TOOL_NAME = "kde-markov-chains"
TOOL_VERSION = "0.1.0"

LOG_FORMAT = "%(log_color)s%(levelname)-8s%(reset)s %(name)s: %(message)s"


@dataclass(frozen=True)
class Settings:
    """Process-wide defaults, overridable through KDEMC_* environment variables"""
    log_level: str = "INFO"
    workers: int = 1
    out_dir: str = "results"
    quad_epsabs: float = 1e-10
    quad_epsrel: float = 1e-12
    quad_limit: int = 10_000
    cubature_max_subdivisions: int = 100_000


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"⚠️ Ignoring non-integer {name}={raw!r}, using {default}")
        return default


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        logger.warning(f"⚠️ Ignoring non-numeric {name}={raw!r}, using {default}")
        return default


def load_settings() -> Settings:
    """
    Build Settings from the environment

    Returns:
        Settings with every KDEMC_* variable applied over the defaults
    """
    defaults = Settings()
    return Settings(
        log_level=os.environ.get("KDEMC_LOG_LEVEL", defaults.log_level).upper(),
        workers=max(1, _env_int("KDEMC_WORKERS", defaults.workers)),
        out_dir=os.environ.get("KDEMC_OUT_DIR", defaults.out_dir),
        quad_epsabs=_env_float("KDEMC_QUAD_EPSABS", defaults.quad_epsabs),
        quad_epsrel=_env_float("KDEMC_QUAD_EPSREL", defaults.quad_epsrel),
        quad_limit=max(50, _env_int("KDEMC_QUAD_LIMIT", defaults.quad_limit)),
        cubature_max_subdivisions=max(
            100, _env_int("KDEMC_CUBATURE_MAX_SUBDIVISIONS", defaults.cubature_max_subdivisions)
        ),
    )


SETTINGS = load_settings()


def configure_logging(level: Optional[str] = None) -> None:
    """
    Install one coloured stderr handler on the root logger

    Safe to call repeatedly; earlier handlers installed here are replaced.

    Args:
        level: Logging level name; defaults to KDEMC_LOG_LEVEL
    """
    level_name = (level or SETTINGS.log_level).upper()
    handler = colorlog.StreamHandler(sys.stderr)
    handler.setFormatter(colorlog.ColoredFormatter(LOG_FORMAT))
    handler.set_name("kdemc")

    root = logging.getLogger()
    for existing in list(root.handlers):
        if existing.get_name() == "kdemc":
            root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(getattr(logging, level_name, logging.INFO))

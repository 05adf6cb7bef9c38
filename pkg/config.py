"""config.py - Defaults, environment overrides and logging setup.

gait-rdf has no configuration file: every experiment parameter comes from
command-line flags, falling back to :data:`DEFAULT_CONFIG`, with a small set
of environment variables able to override the defaults (worker count,
default seed and the identification service settings).
"""

from __future__ import annotations

import copy
import logging
import os
from logging.handlers import RotatingFileHandler
from typing import Any

from _common import FeatureKind

logger = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_CONFIG",
    "_ENV_TO_CONFIG",
    "_active_env_overrides",
    "_env_flag",
    "configure_logging",
    "load_config",
]

# Environment-variable overrides.
# Maps config key -> environment variable name.
_ENV_OVERRIDES: dict[str, str] = {
    "workers": "GAIT_WORKERS",
    "seed": "GAIT_SEED",
    "gallery_manifest": "GAIT_GALLERY_MANIFEST",
    "gallery_features": "GAIT_GALLERY_FEATURES",
    "gallery_reload_schedule": "GAIT_GALLERY_RELOAD_SCHEDULE",
    "scheduler_enabled": "GAIT_SCHEDULER_ENABLED",
    "flask_port": "FLASK_PORT",
    "flask_debug": "FLASK_DEBUG",
}

# Inverse mapping: env var name -> config key, used to report which
# values are being overridden at runtime.
_ENV_TO_CONFIG: dict[str, str] = {v: k for k, v in _ENV_OVERRIDES.items()}

_MAX_SEED: int = 2**64 - 1

_FLAG_KEYS = frozenset({"scheduler_enabled", "flask_debug"})

_LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
_LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------

DEFAULT_CONFIG: dict[str, Any] = {
    "features": FeatureKind.CF.value,
    "folds": 10,
    "ensemble": {
        "L": 100,
        "N": 10,
        "K": 1,
    },
    "use_rsm": True,
    "seed": 0,
    "k_values": list(range(1, 71)),
    "sizes": list(range(10, 141, 10)),
    "repetitions": 10,
    "max_rank": 10,
    "workers": min(4, os.cpu_count() or 1),
    "gallery_manifest": "",
    "gallery_features": FeatureKind.CF.value,
    "gallery_reload_schedule": "",
    "scheduler_enabled": True,
    "flask_port": 5000,
    "flask_debug": False,
}

# ---------------------------------------------------------------------------
# Public helpers
# ---------------------------------------------------------------------------


def _env_flag(name: str, *, default: bool = False) -> bool:
    """Parse an environment variable as a boolean flag.

    Accepts ``"true"``, ``"1"``, ``"yes"`` (case-insensitive) as truthy.
    Accepts ``"false"``, ``"0"``, ``"no"`` (case-insensitive) as falsy.
    If the variable is unset, empty or unrecognised, return *default*.

    Args:
        name: The environment variable name.
        default: Default value if the var is unset or empty.

    """
    parsed = _parse_flag(os.environ.get(name, ""))
    return default if parsed is None else parsed


def _parse_flag(raw: str) -> bool | None:
    value = raw.strip().lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    return None


def _parse_int(env_var: str, raw: str, *, low: int, high: int) -> int | None:
    """Parse *raw* as an integer in ``[low, high]``, or ``None`` with a warning."""
    try:
        value = int(raw.strip())
    except ValueError:
        logger.warning("Invalid %s value %r, falling back to default", env_var, raw)
        return None
    if not low <= value <= high:
        logger.warning(
            "%s=%d out of range [%d, %d], falling back to default",
            env_var,
            value,
            low,
            high,
        )
        return None
    return value


def _coerce_override(cfg_key: str, env_var: str, raw: str) -> Any:
    """Convert an environment override into the type of its config key.

    Returns ``None`` when the value is invalid (the default is kept).

    Args:
        cfg_key: The config key being overridden.
        env_var: The environment variable name (for log messages).
        raw: The raw environment value.

    """
    if cfg_key == "workers":
        return _parse_int(env_var, raw, low=1, high=1024)
    if cfg_key == "seed":
        return _parse_int(env_var, raw, low=0, high=_MAX_SEED)
    if cfg_key == "flask_port":
        return _parse_int(env_var, raw, low=1, high=65535)
    if cfg_key in _FLAG_KEYS:
        flag = _parse_flag(raw)
        if flag is None:
            logger.warning("Invalid %s value %r, falling back to default", env_var, raw)
        return flag
    if cfg_key == "gallery_features":
        try:
            return FeatureKind(raw.strip().upper()).value
        except ValueError:
            logger.warning(
                "Invalid %s value %r (expected one of %s), falling back to default",
                env_var,
                raw,
                [k.value for k in FeatureKind],
            )
            return None
    return raw.strip()


def load_config() -> dict[str, Any]:
    """Return the effective configuration.

    Starts from a deep copy of :data:`DEFAULT_CONFIG` and applies the
    environment overrides listed in ``_ENV_OVERRIDES``.  Invalid override
    values are logged and ignored.

    Returns:
        The configuration dictionary.

    """
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    for cfg_key, env_var in _ENV_OVERRIDES.items():
        env_val = os.environ.get(env_var)
        if not env_val:
            continue
        value = _coerce_override(cfg_key, env_var, env_val)
        if value is not None:
            cfg[cfg_key] = value
    return cfg


def _active_env_overrides() -> dict[str, str]:
    """Return config keys overridden by environment variables.

    Returns a dict like ``{"workers": "GAIT_WORKERS", ...}`` for any
    environment variable that is currently set, regardless of whether the
    value was valid.
    """
    overrides: dict[str, str] = {}
    for cfg_key, env_var in _ENV_OVERRIDES.items():
        if os.environ.get(env_var):
            overrides[cfg_key] = env_var
    return overrides


# ---------------------------------------------------------------------------
# Logging
# ---------------------------------------------------------------------------


def _resolve_log_level(name: str) -> int:
    """Resolve an environment variable to a Python logging level.

    Accepts case-insensitive level names (DEBUG, INFO, WARNING, ERROR,
    CRITICAL) and returns the corresponding :mod:`logging` constant.
    Falls back to ``logging.INFO`` for unset, empty, or unrecognised values.

    Args:
        name: The environment variable holding the level name.

    """
    raw = os.environ.get(name, "").strip().upper()
    level = getattr(logging, raw, None)
    if isinstance(level, int):
        return level
    return logging.INFO


def configure_logging(*, verbose: bool = False) -> None:
    """Configure console logging and, when ``LOG_FILE`` is set, a rotating file.

    The level is read from ``LOG_LEVEL`` (default ``INFO``); *verbose*
    forces ``DEBUG``.  Calling this more than once replaces the previous
    handlers.

    Args:
        verbose: Force ``DEBUG`` level regardless of ``LOG_LEVEL``.

    """
    log_level = logging.DEBUG if verbose else _resolve_log_level("LOG_LEVEL")
    handlers: list[logging.Handler] = [logging.StreamHandler()]

    log_file = os.environ.get("LOG_FILE", "").strip()
    if log_file:
        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=10 * 1024 * 1024,
            backupCount=3,
        )
        file_handler.setLevel(log_level)
        file_handler.setFormatter(logging.Formatter(_LOG_FORMAT, datefmt=_LOG_DATEFMT))
        handlers.append(file_handler)

    logging.basicConfig(
        level=log_level,
        format=_LOG_FORMAT,
        datefmt=_LOG_DATEFMT,
        handlers=handlers,
        force=True,
    )

"""routes.py - Flask Blueprint containing all HTTP route handlers.

Every route is registered on the ``bp`` Blueprint which is imported and
registered with the Flask application in ``app.py``.  Route handlers are
intentionally thin: they validate inputs, delegate to :mod:`service`, and
serialise results back to JSON.
"""

from __future__ import annotations

import logging
import math
import time
from typing import TYPE_CHECKING, Any

from flask import Blueprint, jsonify, request
from werkzeug.exceptions import HTTPException

from _common import GaitError, __version__
from config import _active_env_overrides, load_config
from scheduler import _scheduler
from service import (
    GalleryUnavailableError,
    current_gallery,
    identify_probe,
    peek_gallery,
    reload_gallery,
)

if TYPE_CHECKING:
    from flask.typing import ResponseReturnValue

_APP_START_TIME: float = time.time()

#: Largest accepted probe upload (a 600-frame sequence is about 250 KiB).
MAX_PROBE_BYTES: int = 8 * 1024 * 1024

logger = logging.getLogger(__name__)

__all__ = ["bp"]

bp = Blueprint("main", __name__)


def _handle_http_error(exc: HTTPException) -> ResponseReturnValue:
    """Translate blueprint HTTP exceptions into JSON error responses.

    Args:
        exc: The exception that was raised.

    """
    if exc.code is None:
        raise exc
    return jsonify({"status": "error", "message": exc.description}), exc.code


bp.register_error_handler(HTTPException, _handle_http_error)


def _error(message: str, status_code: int = 400, **extra: Any) -> ResponseReturnValue:
    """Return a JSON error response.

    Args:
        message: The message for the response.
        status_code: HTTP status code for the response.

    """
    payload: dict[str, Any] = {"status": "error", "message": message}
    if extra:
        payload.update(extra)
    return jsonify(payload), status_code


def _success(message: str, status_code: int = 200, **extra: Any) -> ResponseReturnValue:
    """Return a JSON success response.

    Args:
        message: The message for the response.
        status_code: HTTP status code for the response.

    """
    payload: dict[str, Any] = {"status": "success", "message": message}
    if extra:
        payload.update(extra)
    return jsonify(payload), status_code


def _query_flag(name: str, *, default: bool) -> bool | None:
    """Parse a boolean query parameter; ``None`` means malformed."""
    raw = request.args.get(name)
    if raw is None or not raw.strip():
        return default
    value = raw.strip().lower()
    if value in ("true", "1", "yes", "on"):
        return True
    if value in ("false", "0", "no", "off"):
        return False
    return None


def _scheduler_info() -> dict[str, Any]:
    info: dict[str, Any] = {"running": False, "job_count": 0, "next_run_times": []}
    try:
        if _scheduler.running:
            info["running"] = True
            jobs = _scheduler.get_jobs()
            if isinstance(jobs, list):
                info["job_count"] = len(jobs)
                next_runs: list[dict[str, str]] = []
                for job in jobs:
                    try:
                        entry = {"id": str(job.id), "name": str(job.name)}
                        if job.next_run_time is not None:
                            entry["next_run"] = str(job.next_run_time.isoformat())
                        next_runs.append(entry)
                    except (AttributeError, TypeError, ValueError, RuntimeError):
                        continue
                info["next_run_times"] = next_runs
    except (ValueError, OSError, RuntimeError):
        logger.debug("Could not fetch scheduler details", exc_info=True)
    return info


# ---------------------------------------------------------------------------
# Gallery
# ---------------------------------------------------------------------------


@bp.route("/api/gallery", methods=["GET"])
def get_gallery() -> ResponseReturnValue:
    """Describe the enrolled gallery.

    Returns:
        JSON with the manifest, feature set, dimension and per-subject entry
        counts; 503 when no gallery is configured.

    """
    try:
        loaded = current_gallery()
    except GalleryUnavailableError as exc:
        return _error(str(exc), 503)
    except GaitError as exc:
        return _error(str(exc), 400)
    except OSError as exc:
        return _error(f"Gallery could not be read: {exc}", 500)
    return jsonify({"status": "success", "gallery": loaded.describe()})


@bp.route("/api/gallery/reload", methods=["POST"])
def reload_gallery_route() -> ResponseReturnValue:
    """Re-read the gallery manifest and rebuild the gallery."""
    try:
        loaded = reload_gallery()
    except GalleryUnavailableError as exc:
        return _error(str(exc), 503)
    except GaitError as exc:
        return _error(str(exc), 400)
    except OSError as exc:
        return _error(f"Gallery could not be read: {exc}", 500)
    return _success("Gallery reloaded", gallery=loaded.describe())


# ---------------------------------------------------------------------------
# Identification
# ---------------------------------------------------------------------------


@bp.route("/api/identify", methods=["POST"])
def identify_route() -> ResponseReturnValue:
    """Identify the walker of one uploaded sequence.

    The request body is a sequence CSV.  Query parameters: ``max_rank``
    (default 5) limits the candidate list; ``rsm`` (default on) selects the
    ensemble or plain KNN.

    Returns:
        JSON with ``label``, ``candidates`` (rank, label, score),
        ``frames``, ``valid_frames`` and ``processing_ms``.

    """
    if request.content_length is not None and request.content_length > MAX_PROBE_BYTES:
        return _error("Probe sequence too large", 413)
    try:
        max_rank = int(request.args.get("max_rank", "5"))
    except ValueError:
        return _error("max_rank must be an integer")
    use_rsm = _query_flag("rsm", default=True)
    if use_rsm is None:
        return _error("rsm must be a boolean")
    text = request.get_data(as_text=True)
    if not text.strip():
        return _error("Request body must contain a sequence CSV")
    try:
        result = identify_probe(text, max_rank=max_rank, use_rsm=use_rsm)
    except GalleryUnavailableError as exc:
        return _error(str(exc), 503)
    except GaitError as exc:
        return _error(str(exc), 400)
    except OSError as exc:
        return _error(f"Gallery could not be read: {exc}", 500)
    return jsonify({"status": "success", **result})


# ---------------------------------------------------------------------------
# Version / health
# ---------------------------------------------------------------------------


@bp.route("/api/version", methods=["GET"])
def version() -> ResponseReturnValue:
    """Return the current application version."""
    return jsonify({"version": __version__})


@bp.route("/api/health", methods=["GET"])
def health_check() -> ResponseReturnValue:
    """Provide a health check endpoint for container probes.

    Reports service uptime, the configured gallery (without loading it),
    the ensemble settings, active environment overrides and scheduler
    state.
    """
    try:
        config: dict[str, Any] = load_config()
        loaded = peek_gallery()
        gallery_info: dict[str, Any] = {
            "configured": bool(config["gallery_manifest"]),
            "loaded": loaded is not None,
            "feature_set": config["gallery_features"],
        }
        if loaded is not None:
            gallery_info["entries"] = loaded.gallery.size
            gallery_info["subjects"] = len(loaded.gallery.classes)
        return jsonify(
            {
                "status": "ok",
                "version": __version__,
                "healthcheck": {
                    "ok": True,
                    "env_overrides": list(_active_env_overrides().keys()),
                },
                "server": {
                    "uptime_seconds": math.ceil(time.time() - _APP_START_TIME),
                    "started_at": time.strftime(
                        "%Y-%m-%dT%H:%M:%SZ",
                        time.gmtime(_APP_START_TIME),
                    ),
                },
                "gallery": gallery_info,
                "ensemble": dict(config["ensemble"]),
                "scheduler": _scheduler_info(),
            },
        )
    except Exception:
        logger.exception("Health check failed")
        return jsonify(
            {
                "status": "error",
                "healthcheck": {
                    "ok": False,
                    "error": "internal_error",
                },
            },
        ), 500

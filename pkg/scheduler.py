"""scheduler.py - Background gallery reloads for the identification service.

Manages a BackgroundScheduler that rebuilds the service gallery on the cron
schedule given by ``GAIT_GALLERY_RELOAD_SCHEDULE``, so sequences enrolled
into the gallery manifest become searchable without a restart.
"""

from __future__ import annotations

import logging
import threading

from apscheduler.schedulers.background import BackgroundScheduler
from apscheduler.triggers.cron import CronTrigger

from _common import GaitError
from config import load_config
from service import reload_gallery

# Initialize the scheduler
_scheduler: BackgroundScheduler = BackgroundScheduler()
reload_lock = threading.Lock()
logger = logging.getLogger(__name__)

__all__ = [
    "RELOAD_JOB_ID",
    "start_scheduler",
    "update_scheduler_jobs",
    "validate_cron",
]

RELOAD_JOB_ID = "gallery_reload"


def start_scheduler() -> None:
    """Start the background scheduler and load jobs from the configuration.

    Calling this on a running scheduler only refreshes its jobs.
    """
    if not _scheduler.running:
        _scheduler.start()
        logger.info("Background scheduler started")
    else:
        logger.debug("Background scheduler already running - refreshing jobs")
    update_scheduler_jobs()


def update_scheduler_jobs() -> None:
    """Replace the scheduled jobs with the ones the configuration asks for."""
    _scheduler.remove_all_jobs()
    cron_expr = load_config()["gallery_reload_schedule"]
    if not cron_expr:
        logger.debug("No gallery reload schedule configured")
        return
    problem = validate_cron(cron_expr)
    if problem is not None:
        logger.error("Gallery reload not scheduled: %s (%r)", problem, cron_expr)
        return
    _scheduler.add_job(
        _run_reload_job,
        CronTrigger.from_crontab(cron_expr),
        id=RELOAD_JOB_ID,
        name="Reload gallery",
        replace_existing=True,
    )
    logger.info("Scheduled gallery reload: %s", cron_expr)


def _run_reload_job() -> None:
    """Job handler: rebuild the gallery, keeping the old one on failure."""
    if not reload_lock.acquire(blocking=False):
        logger.warning("Gallery reload already in progress - skipping this run")
        return
    try:
        loaded = reload_gallery()
        logger.info("Background gallery reload finished: %d entries", loaded.gallery.size)
    except (GaitError, OSError, RuntimeError):
        logger.exception("Background gallery reload failed")
    finally:
        reload_lock.release()


def validate_cron(expr: str) -> str | None:
    """Validate a cron expression.

    Args:
        expr: A 5-field cron expression (e.g. ``"0 * * * *"``).

    Returns:
        ``None`` if valid, otherwise an error message string.

    """
    expr = expr.strip()
    if not expr:
        return "Cron expression must not be empty"

    fields = expr.split()
    if len(fields) != 5:  # noqa: PLR2004
        return (
            "Cron expression must have 5 fields"
            f" (minute hour day month weekday), got {len(fields)}"
        )

    try:
        CronTrigger.from_crontab(expr)
    except (ValueError, TypeError, AttributeError) as exc:
        return f"Invalid cron expression: {exc}"
    return None

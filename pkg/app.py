"""app.py - Application entry-point for the gait identification service.

Creates the Flask application, registers the route Blueprint defined in
:mod:`routes`, and starts the gallery reload scheduler.

The bulk of the service logic lives in the following modules:

* :mod:`service`   - gallery state and probe identification
* :mod:`features`  - feature extraction
* :mod:`ensemble`  - KNN and random subspace classification
* :mod:`scheduler` - cron-scheduled gallery reloads
* :mod:`routes`    - Flask Blueprint with all HTTP route handlers
"""

from __future__ import annotations

import logging
import os

from flask import Flask

from config import configure_logging, load_config
from routes import MAX_PROBE_BYTES, bp
from scheduler import start_scheduler

configure_logging()

logger = logging.getLogger(__name__)

__all__ = ["app", "run"]

app = Flask(__name__)
app.config["MAX_CONTENT_LENGTH"] = MAX_PROBE_BYTES
app.register_blueprint(bp)

# Start the background reload scheduler
if (
    not app.testing
    and load_config()["scheduler_enabled"]
    and (not app.debug or os.environ.get("WERKZEUG_RUN_MAIN") == "true")
):
    try:
        start_scheduler()
    except Exception:
        logger.exception(
            "Failed to start background scheduler - scheduled gallery reloads will not run.",
        )


# ---------------------------------------------------------------------------
# Entry-point
# ---------------------------------------------------------------------------


def run(host: str = "0.0.0.0", port: int | None = None) -> None:  # noqa: S104
    """Serve the application with Flask's built-in server.

    The port defaults to ``FLASK_PORT`` (5000) and debug mode follows
    ``FLASK_DEBUG``; invalid values fall back to the defaults.
    """
    cfg = load_config()
    if port is None:
        port = cfg["flask_port"]
    app.run(host=host, debug=cfg["flask_debug"], port=port)


if __name__ == "__main__":
    run()

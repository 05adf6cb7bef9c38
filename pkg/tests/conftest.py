"""Shared pytest fixtures and configuration for the test suite."""

import logging
import os
from unittest.mock import patch

import pytest

# The service app must not start a real background scheduler under test.
os.environ.setdefault("GAIT_SCHEDULER_ENABLED", "0")

from app import app as flask_app  # noqa: E402
from service import clear_gallery  # noqa: E402
from synth import write_synthetic_tree  # noqa: E402
from tests.builders import clean_dataset  # noqa: E402

# Ensure logging is configured for tests so caplog captures INFO-level messages.
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)

_OVERRIDE_ENV = (
    "GAIT_GALLERY_MANIFEST",
    "GAIT_GALLERY_FEATURES",
    "GAIT_GALLERY_RELOAD_SCHEDULE",
    "GAIT_WORKERS",
    "GAIT_SEED",
    "GAIT_SCHEDULER_ENABLED",
    "FLASK_PORT",
    "FLASK_DEBUG",
)


@pytest.fixture(autouse=True)
def mock_scheduler():
    patcher = patch("scheduler._scheduler")
    mock_bg_sched_instance = patcher.start()
    yield mock_bg_sched_instance
    patcher.stop()


@pytest.fixture(autouse=True)
def _isolate_environment(monkeypatch):
    """Drop gait-rdf environment overrides and the loaded service gallery."""
    for name in _OVERRIDE_ENV:
        monkeypatch.delenv(name, raising=False)
    clear_gallery()
    yield
    clear_gallery()


def _is_pytest_handler(handler: logging.Handler) -> bool:
    return type(handler).__module__.startswith("_pytest")


@pytest.fixture(autouse=True)
def _restore_root_logger():
    """``configure_logging`` replaces root handlers; put the test ones back.

    pytest swaps its own capture handlers between test phases, so only the
    other handlers are restored from the snapshot.
    """
    root = logging.getLogger()
    handlers = [h for h in root.handlers if not _is_pytest_handler(h)]
    level = root.level
    yield
    for handler in root.handlers:
        if handler not in handlers and not _is_pytest_handler(handler):
            handler.close()
    root.handlers[:] = handlers + [h for h in root.handlers if _is_pytest_handler(h)]
    root.setLevel(level)


@pytest.fixture
def app():
    from copy import deepcopy

    old_config = deepcopy(flask_app.config)
    flask_app.config.update(
        {
            "TESTING": True,
        },
    )

    with flask_app.app_context():
        yield flask_app

    flask_app.config = old_config


@pytest.fixture
def client(app):
    return app.test_client()


@pytest.fixture(scope="session")
def small_dataset():
    """Four noise-free synthetic subjects with four 90-frame walks each."""
    return clean_dataset(4, 4, 90, seed=3)


@pytest.fixture
def gallery_manifest(tmp_path, monkeypatch):
    """A three-subject synthetic tree configured as the service gallery."""
    manifest = write_synthetic_tree(tmp_path / "gallery", clean_dataset(3, 2, 60, seed=11))
    monkeypatch.setenv("GAIT_GALLERY_MANIFEST", str(manifest))
    return manifest

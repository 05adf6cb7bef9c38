"""run_tests_to_file.py - Run the gait-rdf test suite and capture its output.

Invokes pytest with coverage over the library modules and writes everything
to ``test_results.txt`` in the repository root.  The multi-seed statistical
experiments are marked ``slow``; set ``TEST_MARKERS="not slow"`` to skip
them.
"""

from __future__ import annotations

import os
import subprocess
import sys
from pathlib import Path


def main() -> None:
    """Run pytest and stream its output to ``test_results.txt``.

    ``TEST_TIMEOUT`` bounds the run in seconds (default 600) and
    ``TEST_MARKERS`` is passed to ``pytest -m`` when set.
    """
    repo_root = Path(__file__).resolve().parent
    existing = os.environ.get("PYTHONPATH")
    os.environ["PYTHONPATH"] = (
        f"{existing}{os.pathsep}{repo_root}" if existing else str(repo_root)
    )

    output_file = repo_root / "test_results.txt"
    timeout = int(os.environ.get("TEST_TIMEOUT", "600"))
    command = [sys.executable, "-m", "pytest", "--cov=.", "--tb=short", "tests/"]
    markers = os.environ.get("TEST_MARKERS", "").strip()
    if markers:
        command.extend(["-m", markers])

    try:
        with output_file.open("w", encoding="utf-8") as f:
            f.write(f"Command: {' '.join(command)}\n")
            f.write(f"Python: {sys.version}\n")
            f.write(f"Timeout: {timeout}s\n\n")
            f.flush()

            result = subprocess.run(
                command,
                cwd=repo_root,
                stdout=f,
                stderr=subprocess.STDOUT,
                timeout=timeout,
                check=False,
            )

            f.write(f"\nExit code: {result.returncode}\n")
    except (subprocess.TimeoutExpired, OSError) as e:
        with output_file.open("a", encoding="utf-8") as f:
            f.write(f"\nERROR: {e!s}")


if __name__ == "__main__":
    main()

"""_common.py - Shared constants and utilities for gait-rdf.

This module holds the definitions that are referenced by several other
modules: the Kinect joint table, tracking states, feature-set kinds, text
format constants, the exception hierarchy and seed derivation.
"""

from __future__ import annotations

from enum import IntEnum, StrEnum
from importlib.metadata import PackageNotFoundError
from importlib.metadata import version as _pkg_version

import numpy as np

__all__ = [
    "COORD_DECIMALS",
    "JOINT_COUNT",
    "RESULT_FORMAT",
    "ContractError",
    "FeatureKind",
    "GaitError",
    "InsufficientDataError",
    "InvalidFrameError",
    "JointId",
    "OrderingError",
    "ParseError",
    "SchemaError",
    "TrackingState",
    "__version__",
    "derive_seed",
    "format_number",
]

# Resolve the tool version from package metadata.  Falls back to a dev
# placeholder when running from a source checkout.
try:
    __version__: str = _pkg_version("gait-rdf")
except PackageNotFoundError:
    __version__ = "1.0.0+dev"
del _pkg_version

# ---------------------------------------------------------------------------
# Skeleton
# ---------------------------------------------------------------------------

#: Number of joints reported by a Kinect v1 skeleton.
JOINT_COUNT: int = 20


class JointId(IntEnum):
    """Kinect v1 joint identifiers, numbered 1..20."""

    HEAD = 1
    SHOULDER_CENTER = 2
    SHOULDER_RIGHT = 3
    SHOULDER_LEFT = 4
    ELBOW_RIGHT = 5
    ELBOW_LEFT = 6
    WRIST_RIGHT = 7
    WRIST_LEFT = 8
    HAND_RIGHT = 9
    HAND_LEFT = 10
    SPINE = 11
    HIP_CENTER = 12
    HIP_RIGHT = 13
    HIP_LEFT = 14
    KNEE_RIGHT = 15
    KNEE_LEFT = 16
    ANKLE_RIGHT = 17
    ANKLE_LEFT = 18
    FOOT_RIGHT = 19
    FOOT_LEFT = 20

    @property
    def row(self) -> int:
        """Zero-based row of this joint in a ``(20, 3)`` position array."""
        return int(self) - 1

    @property
    def label(self) -> str:
        """Human-readable name, e.g. ``"Shoulder-Center"``."""
        return "-".join(part.capitalize() for part in self.name.split("_"))


class TrackingState(IntEnum):
    """Per-joint tracking state, encoded as in the sequence CSV format."""

    NOT_TRACKED = 0
    INFERRED = 1
    TRACKED = 2


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------


class FeatureKind(StrEnum):
    """Feature sets that can be extracted from a sequence."""

    AF = "AF"
    RDF = "RDF"
    CF = "CF"
    MEAN = "MEAN"
    STD = "STD"

    @property
    def dimension(self) -> int:
        return _FEATURE_DIMENSIONS[self]


_FEATURE_DIMENSIONS: dict[FeatureKind, int] = {
    FeatureKind.AF: 20,
    FeatureKind.RDF: 20,
    FeatureKind.CF: 40,
    FeatureKind.MEAN: 10,
    FeatureKind.STD: 10,
}

# ---------------------------------------------------------------------------
# Text formats
# ---------------------------------------------------------------------------

#: Decimal places used when serializing joint coordinates.
COORD_DECIMALS: int = 6

#: printf-style format for numbers in result and feature CSVs.
RESULT_FORMAT: str = "%.6g"


def format_number(value: float) -> str:
    """Format *value* with six significant digits."""
    return RESULT_FORMAT % value


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class GaitError(Exception):
    """Base class for every error gait-rdf raises on purpose."""


class ContractError(GaitError, ValueError):
    """An operation was called with arguments that violate its contract."""


class InsufficientDataError(ContractError):
    """A sequence has fewer valid frames than a statistic needs."""


class InvalidFrameError(ContractError):
    """A per-frame operation received a frame with an untracked joint."""


class ParseError(GaitError, ValueError):
    """A line of a sequence or manifest file could not be parsed.

    Args:
        message: Description of the problem.
        line_number: One-based line number of the offending line.
        source: Optional file path, prefixed to the rendered message.

    """

    def __init__(
        self,
        message: str,
        line_number: int,
        source: str | None = None,
    ) -> None:
        self.message = message
        self.line_number = line_number
        self.source = source
        super().__init__(message, line_number, source)

    def __str__(self) -> str:
        where = f"line {self.line_number}"
        if self.source:
            where = f"{self.source}, {where}"
        return f"{where}: {self.message}"

    def with_source(self, source: str) -> ParseError:
        """Return a copy of this error that names *source*."""
        return type(self)(self.message, self.line_number, source)


class SchemaError(ParseError):
    """A line has the wrong number of columns."""


class OrderingError(ParseError):
    """Frame indices are not strictly increasing."""


# ---------------------------------------------------------------------------
# Seeds
# ---------------------------------------------------------------------------


def derive_seed(*parts: int) -> int:
    """Hash integer *parts* into a 64-bit seed.

    Used wherever a stream of draws must depend only on its coordinates
    (base seed, classifier index, subject index, ...) and never on the
    order in which streams are consumed.
    """
    if any(p < 0 for p in parts):
        msg = f"Seed parts must be non-negative, got {parts}"
        raise ContractError(msg)
    state = np.random.SeedSequence(list(parts)).generate_state(1, dtype=np.uint64)
    return int(state[0])

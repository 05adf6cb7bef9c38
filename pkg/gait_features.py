"""gait_features.py - Relative distance gait features.

Eleven per-frame distances are taken along single axes between joint pairs
(or between a joint and the midpoint of a pair)::

    dx1 = |x17 - x18|               ankles
    dx2 = |x5 - x6|                 elbows
    dx3 = |x9 - x10|                hands
    dx4 = |x1 - (x17 + x18) / 2|    head vs. mid-ankle
    dx5 = |x11 - (x17 + x18) / 2|   spine vs. mid-ankle
    dx6 = |x7 - x8|                 wrists
    dx7 = |x3 - x4|                 shoulders
    dy1 = |y1 - (y19 + y20) / 2|    head vs. mid-foot
    dy2 = |y1 - (y15 + y16) / 2|    head vs. mid-knee
    dy3 = |y19 - y20|               feet
    dz1 = |z9 - z10|                hands

A sequence is summarised by the means of ten of them (no dx7) followed by
the sample standard deviations of ten of them (no dz1): the 20-dimensional
relative distance feature vector (RDF).  Statistics are computed over valid
frames only; inferred joints are used as reported.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from _common import ContractError, InsufficientDataError, InvalidFrameError, JointId

if TYPE_CHECKING:
    from collections.abc import Sequence

    from skeleton import SkeletonFrame, SkeletonSequence

logger = logging.getLogger(__name__)

__all__ = [
    "DISTANCE_NAMES",
    "MIN_VALID_FRAMES",
    "MEAN_DISTANCES",
    "MEAN_NAMES",
    "RDF_NAMES",
    "STD_DISTANCES",
    "STD_NAMES",
    "FeatureVector",
    "RelativeDistanceSample",
    "distance_series",
    "mean_features",
    "rdf",
    "relative_distances",
    "require_valid_frames",
    "std_features",
]

MIN_VALID_FRAMES: int = 2

DISTANCE_NAMES: tuple[str, ...] = (
    "dx1", "dx2", "dx3", "dx4", "dx5", "dx6", "dx7", "dy1", "dy2", "dy3", "dz1",
)  # fmt: skip

#: Distances summarised by their mean (dx7 is deliberately absent).
MEAN_DISTANCES: tuple[str, ...] = (
    "dx1", "dx2", "dx3", "dx4", "dx5", "dx6", "dy1", "dy2", "dy3", "dz1",
)  # fmt: skip

#: Distances summarised by their standard deviation (dz1 is absent).
STD_DISTANCES: tuple[str, ...] = (
    "dx1", "dx2", "dx3", "dx4", "dx5", "dx6", "dx7", "dy1", "dy2", "dy3",
)  # fmt: skip

MEAN_NAMES: tuple[str, ...] = tuple(f"mean_{d}" for d in MEAN_DISTANCES)
STD_NAMES: tuple[str, ...] = tuple(f"std_{d}" for d in STD_DISTANCES)
RDF_NAMES: tuple[str, ...] = MEAN_NAMES + STD_NAMES

_MEAN_COLS = [DISTANCE_NAMES.index(d) for d in MEAN_DISTANCES]
_STD_COLS = [DISTANCE_NAMES.index(d) for d in STD_DISTANCES]

_X, _Y, _Z = 0, 1, 2


class RelativeDistanceSample(NamedTuple):
    """The eleven relative distances of one frame, in meters."""

    dx1: float
    dx2: float
    dx3: float
    dx4: float
    dx5: float
    dx6: float
    dx7: float
    dy1: float
    dy2: float
    dy3: float
    dz1: float


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Named, ordered real-valued feature components.

    ``values`` is stored as a read-only float64 array; names travel with
    the values so that projected subspaces stay auditable.
    """

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        names = tuple(self.names)
        values = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if len(names) != values.shape[0]:
            msg = f"{len(names)} names for {values.shape[0]} values"
            raise ContractError(msg)
        if len(set(names)) != len(names):
            msg = f"feature names must be unique: {names}"
            raise ContractError(msg)
        values.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    @property
    def dimension(self) -> int:
        return len(self.names)

    def concat(self, other: FeatureVector) -> FeatureVector:
        """Return ``self`` followed by ``other``."""
        return FeatureVector(
            self.names + other.names,
            np.concatenate([self.values, other.values]),
        )

    def select(self, names: Sequence[str]) -> FeatureVector:
        """Return the components called *names*, in that order."""
        idx = [self.names.index(n) for n in names]
        return FeatureVector(tuple(names), self.values[idx])


def _distances(positions: np.ndarray) -> np.ndarray:
    """Vectorised distances for ``(T, 20, 3)`` positions -> ``(T, 11)``."""

    def c(joint: JointId, axis: int) -> np.ndarray:
        return positions[:, joint.row, axis]

    ankle_mid_x = (c(JointId.ANKLE_RIGHT, _X) + c(JointId.ANKLE_LEFT, _X)) / 2
    return np.abs(
        np.stack(
            [
                c(JointId.ANKLE_RIGHT, _X) - c(JointId.ANKLE_LEFT, _X),
                c(JointId.ELBOW_RIGHT, _X) - c(JointId.ELBOW_LEFT, _X),
                c(JointId.HAND_RIGHT, _X) - c(JointId.HAND_LEFT, _X),
                c(JointId.HEAD, _X) - ankle_mid_x,
                c(JointId.SPINE, _X) - ankle_mid_x,
                c(JointId.WRIST_RIGHT, _X) - c(JointId.WRIST_LEFT, _X),
                c(JointId.SHOULDER_RIGHT, _X) - c(JointId.SHOULDER_LEFT, _X),
                c(JointId.HEAD, _Y)
                - (c(JointId.FOOT_RIGHT, _Y) + c(JointId.FOOT_LEFT, _Y)) / 2,
                c(JointId.HEAD, _Y)
                - (c(JointId.KNEE_RIGHT, _Y) + c(JointId.KNEE_LEFT, _Y)) / 2,
                c(JointId.FOOT_RIGHT, _Y) - c(JointId.FOOT_LEFT, _Y),
                c(JointId.HAND_RIGHT, _Z) - c(JointId.HAND_LEFT, _Z),
            ],
            axis=1,
        ),
    )


def relative_distances(frame: SkeletonFrame) -> RelativeDistanceSample:
    """Compute the eleven relative distances of a valid *frame*.

    Raises:
        InvalidFrameError: The frame has a ``NotTracked`` joint.

    """
    if not frame.is_valid:
        msg = f"frame {frame.frame_index} has untracked joints"
        raise InvalidFrameError(msg)
    row = _distances(frame.positions[np.newaxis])[0]
    return RelativeDistanceSample(*(float(v) for v in row))


def distance_series(seq: SkeletonSequence) -> np.ndarray:
    """Return the ``(V, 11)`` distance signals over the valid frames of *seq*."""
    return _distances(seq.valid_positions)


def require_valid_frames(seq: SkeletonSequence) -> np.ndarray:
    """Return the valid-frame positions of *seq*, or raise if there are too few.

    Raises:
        InsufficientDataError: Fewer than two valid frames.

    """
    positions = seq.valid_positions
    if positions.shape[0] < MIN_VALID_FRAMES:
        msg = (
            f"sequence {seq.subject_id}/{seq.sequence_id} has "
            f"{positions.shape[0]} valid frames, need {MIN_VALID_FRAMES}"
        )
        raise InsufficientDataError(msg)
    return positions


def _valid_series(seq: SkeletonSequence) -> np.ndarray:
    return _distances(require_valid_frames(seq))


def mean_features(seq: SkeletonSequence) -> FeatureVector:
    """The 10-dimensional MEAN block of the RDF."""
    series = _valid_series(seq)
    return FeatureVector(MEAN_NAMES, series[:, _MEAN_COLS].mean(axis=0))


def std_features(seq: SkeletonSequence) -> FeatureVector:
    """The 10-dimensional STD block of the RDF (sample standard deviation)."""
    series = _valid_series(seq)
    return FeatureVector(STD_NAMES, series[:, _STD_COLS].std(axis=0, ddof=1))


def rdf(seq: SkeletonSequence) -> FeatureVector:
    """Return the 20-dimensional relative distance feature vector of *seq*.

    Raises:
        InsufficientDataError: Fewer than two valid frames.

    """
    series = _valid_series(seq)
    return FeatureVector(
        RDF_NAMES,
        np.concatenate(
            [
                series[:, _MEAN_COLS].mean(axis=0),
                series[:, _STD_COLS].std(axis=0, ddof=1),
            ],
        ),
    )

"""anthro_features.py - Anthropometric features (bone lengths and height).

The AF vector holds the 19 bone lengths of the Kinect v1 skeleton followed
by the body height.  Each component is averaged over the valid frames of a
sequence after a single pass of outlier trimming: values further than two
sample standard deviations from the mean are dropped and the mean is
recomputed from the survivors.

CF is AF followed by RDF (40 components).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from _common import JOINT_COUNT, ContractError, InvalidFrameError, JointId
from gait_features import MIN_VALID_FRAMES, FeatureVector, rdf, require_valid_frames

if TYPE_CHECKING:
    from skeleton import SkeletonFrame, SkeletonSequence

logger = logging.getLogger(__name__)

__all__ = [
    "AF_NAMES",
    "BONE_GRAPH",
    "HEIGHT_CHAIN",
    "TRIM_SIGMAS",
    "AnthroSample",
    "BoneGraph",
    "af",
    "anthro_sample",
    "cf",
    "height",
    "segment_lengths",
    "trimmed_mean",
]

#: Outliers are values strictly more than this many standard deviations away.
TRIM_SIGMAS: float = 2.0

J = JointId


@dataclass(frozen=True)
class BoneGraph:
    """Connected joint pairs forming a spanning tree over the 20 joints."""

    edges: tuple[tuple[JointId, JointId], ...]

    def __post_init__(self) -> None:
        edges = tuple((JointId(a), JointId(b)) for a, b in self.edges)
        if len(edges) != JOINT_COUNT - 1:
            msg = f"a bone graph needs {JOINT_COUNT - 1} edges, got {len(edges)}"
            raise ContractError(msg)
        # Union-find: 19 edges without a cycle span all 20 joints.
        parent = {j: j for j in JointId}

        def find(j: JointId) -> JointId:
            while parent[j] != j:
                parent[j] = parent[parent[j]]
                j = parent[j]
            return j

        for a, b in edges:
            ra, rb = find(a), find(b)
            if ra == rb:
                msg = f"edge {a.label}-{b.label} closes a cycle"
                raise ContractError(msg)
            parent[ra] = rb
        object.__setattr__(self, "edges", edges)

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def names(self) -> tuple[str, ...]:
        """Feature names, e.g. ``"len_head_shoulder_center"``."""
        return tuple(f"len_{a.name.lower()}_{b.name.lower()}" for a, b in self.edges)


#: Standard Kinect v1 topology.
BONE_GRAPH = BoneGraph(
    (
        (J.HEAD, J.SHOULDER_CENTER),
        (J.SHOULDER_CENTER, J.SHOULDER_LEFT),
        (J.SHOULDER_CENTER, J.SHOULDER_RIGHT),
        (J.SHOULDER_CENTER, J.SPINE),
        (J.SHOULDER_LEFT, J.ELBOW_LEFT),
        (J.ELBOW_LEFT, J.WRIST_LEFT),
        (J.WRIST_LEFT, J.HAND_LEFT),
        (J.SHOULDER_RIGHT, J.ELBOW_RIGHT),
        (J.ELBOW_RIGHT, J.WRIST_RIGHT),
        (J.WRIST_RIGHT, J.HAND_RIGHT),
        (J.SPINE, J.HIP_CENTER),
        (J.HIP_CENTER, J.HIP_LEFT),
        (J.HIP_CENTER, J.HIP_RIGHT),
        (J.HIP_LEFT, J.KNEE_LEFT),
        (J.KNEE_LEFT, J.ANKLE_LEFT),
        (J.ANKLE_LEFT, J.FOOT_LEFT),
        (J.HIP_RIGHT, J.KNEE_RIGHT),
        (J.KNEE_RIGHT, J.ANKLE_RIGHT),
        (J.ANKLE_RIGHT, J.FOOT_RIGHT),
    ),
)

#: Neck + upper spine + lower spine; hip widths are not part of the height.
HEIGHT_CHAIN: tuple[tuple[JointId, JointId], ...] = (
    (J.HEAD, J.SHOULDER_CENTER),
    (J.SHOULDER_CENTER, J.SPINE),
    (J.SPINE, J.HIP_CENTER),
)

#: Both legs (hip-knee, knee-ankle); their sum is halved to an average leg.
HEIGHT_LEGS: tuple[tuple[JointId, JointId], ...] = (
    (J.HIP_LEFT, J.KNEE_LEFT),
    (J.KNEE_LEFT, J.ANKLE_LEFT),
    (J.HIP_RIGHT, J.KNEE_RIGHT),
    (J.KNEE_RIGHT, J.ANKLE_RIGHT),
)

AF_NAMES: tuple[str, ...] = (*BONE_GRAPH.names, "height")


@dataclass(frozen=True)
class AnthroSample:
    """Per-frame anthropometric measurements in meters."""

    segment_lengths: tuple[float, ...]
    height: float


def _pair_lengths(
    positions: np.ndarray,
    pairs: tuple[tuple[JointId, JointId], ...],
) -> np.ndarray:
    """Euclidean distances for ``(T, 20, 3)`` positions -> ``(T, len(pairs))``."""
    a = positions[:, [p[0].row for p in pairs]]
    b = positions[:, [p[1].row for p in pairs]]
    return np.linalg.norm(a - b, axis=2)


def _heights(positions: np.ndarray) -> np.ndarray:
    chain = _pair_lengths(positions, HEIGHT_CHAIN).sum(axis=1)
    legs = _pair_lengths(positions, HEIGHT_LEGS).sum(axis=1)
    return chain + legs / 2


def _require_valid(frame: SkeletonFrame) -> None:
    if not frame.is_valid:
        msg = f"frame {frame.frame_index} has untracked joints"
        raise InvalidFrameError(msg)


def segment_lengths(
    frame: SkeletonFrame,
    graph: BoneGraph = BONE_GRAPH,
) -> tuple[float, ...]:
    """Return the length of every bone of *graph* in *frame*, in edge order."""
    _require_valid(frame)
    row = _pair_lengths(frame.positions[np.newaxis], graph.edges)[0]
    return tuple(float(v) for v in row)


def height(frame: SkeletonFrame) -> float:
    """Neck + spine lengths plus the average of the two leg lengths."""
    _require_valid(frame)
    return float(_heights(frame.positions[np.newaxis])[0])


def anthro_sample(frame: SkeletonFrame, graph: BoneGraph = BONE_GRAPH) -> AnthroSample:
    return AnthroSample(segment_lengths(frame, graph), height(frame))


def trimmed_mean(values: np.ndarray) -> np.ndarray:
    """Column-wise mean after one pass of 2-sigma outlier removal.

    For each column: compute the mean and sample standard deviation, drop
    values strictly further than ``TRIM_SIGMAS`` standard deviations from
    the mean, and average the rest.  A column with zero spread, or with
    every value dropped, keeps its plain mean.

    Args:
        values: ``(n, d)`` array (or ``(n,)`` for a single column), n >= 2.

    Returns:
        ``(d,)`` array (or a 0-d array for 1-D input).

    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape[0] < MIN_VALID_FRAMES:
        msg = f"trimmed_mean needs at least {MIN_VALID_FRAMES} values, got {arr.shape[0]}"
        raise ContractError(msg)
    mu = arr.mean(axis=0)
    sigma = arr.std(axis=0, ddof=1)
    keep = np.abs(arr - mu) <= TRIM_SIGMAS * sigma
    kept = keep.sum(axis=0)
    sums = np.where(keep, arr, 0.0).sum(axis=0)
    trimmed = np.divide(sums, kept, out=np.array(mu, copy=True), where=kept > 0)
    return np.where(sigma > 0, trimmed, mu)


def af(seq: SkeletonSequence) -> FeatureVector:
    """Return the 20-dimensional anthropometric feature vector of *seq*.

    Raises:
        InsufficientDataError: Fewer than two valid frames.

    """
    positions = require_valid_frames(seq)
    samples = np.column_stack(
        [_pair_lengths(positions, BONE_GRAPH.edges), _heights(positions)],
    )
    return FeatureVector(AF_NAMES, trimmed_mean(samples))


def cf(seq: SkeletonSequence) -> FeatureVector:
    """Return the 40-dimensional combined vector: AF followed by RDF."""
    return af(seq).concat(rdf(seq))

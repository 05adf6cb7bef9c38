"""synth.py - Deterministic synthetic walkers.

Each synthetic subject has fixed bone lengths (over :data:`BONE_GRAPH`) and
gait parameters.  A sequence places the joints frame by frame:

* the hip center advances linearly along +x at the subject's speed;
* the spine, neck and head stack above it with a constant forward lean;
* shoulders and hips sit on the z axis (right side is +z, away from the
  sensor), the shoulders swaying forward and back with the arm phase;
* each limb swings in the x/y plane: its total forward offset is
  ``(A / 2) * sin(phase)`` shared among its segments in proportion to their
  length, the left limb in antiphase with the right;
* feet point forward and down from the ankles.

At zero noise every bone has exactly its configured length and the ankle
separation is ``dx1 = A_leg * |sin(phase)|``.  Noise is additive Gaussian on
every coordinate, plus occlusion of far-side joints, which are then reported
as Inferred with a corrupted position (or NotTracked, in ``"lost"`` mode).

All randomness comes from explicit seeds.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal

import numpy as np

from _common import JOINT_COUNT, ContractError, JointId, TrackingState, derive_seed
from anthro_features import BONE_GRAPH
from skeleton import Dataset, SkeletonFrame, SkeletonSequence, write_manifest, write_sequence

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

__all__ = [
    "BONE_LENGTH_RANGE",
    "DEFAULT_OCCLUDED_JOINTS",
    "MIN_PERIOD",
    "DatasetTruth",
    "NoiseConfig",
    "SequenceTruth",
    "SubjectParams",
    "generate_dataset",
    "generate_dataset_with_truth",
    "generate_sequence",
    "generate_sequence_with_truth",
    "generate_subject",
    "write_synthetic_tree",
]

BONE_LENGTH_RANGE: tuple[float, float] = (0.05, 0.6)
MIN_PERIOD: float = 10.0

J = JointId

#: Right-side joints farthest from the sensor.
DEFAULT_OCCLUDED_JOINTS: tuple[JointId, ...] = (
    J.ELBOW_RIGHT,
    J.WRIST_RIGHT,
    J.HAND_RIGHT,
    J.KNEE_RIGHT,
    J.ANKLE_RIGHT,
    J.FOOT_RIGHT,
)

# Uniform draw ranges, meters.
_AXIAL_RANGES: dict[str, tuple[float, float]] = {
    "head": (0.20, 0.30),
    "upper_spine": (0.20, 0.30),
    "lower_spine": (0.08, 0.14),
}
_PAIRED_RANGES: dict[str, tuple[float, float]] = {
    "shoulder": (0.15, 0.22),
    "upper_arm": (0.25, 0.33),
    "forearm": (0.22, 0.28),
    "hand": (0.06, 0.10),
    "hip": (0.07, 0.11),
    "thigh": (0.38, 0.50),
    "shank": (0.36, 0.46),
    "foot": (0.07, 0.12),
}
_SIDE_FACTOR = (0.97, 1.03)

_LEG_AMPLITUDE = (0.35, 0.65)
_ARM_AMPLITUDE = (0.15, 0.40)
_SHOULDER_AMPLITUDE = (0.02, 0.08)
_LEAN = (0.0, 0.12)
_PERIOD = (26.0, 40.0)
_SPEED = (0.03, 0.045)
_ARM_PHASE_JITTER = 0.3

_START_X = (-2.5, -1.5)
_START_Z = (2.2, 2.8)
_SPEED_FACTOR = (0.85, 1.15)

_HIP_CLEARANCE = 0.05

# BONE_GRAPH edge order -> (segment, side); side is None for axial bones.
_BONE_LAYOUT: tuple[tuple[str, str | None], ...] = (
    ("head", None),
    ("shoulder", "left"),
    ("shoulder", "right"),
    ("upper_spine", None),
    ("upper_arm", "left"),
    ("forearm", "left"),
    ("hand", "left"),
    ("upper_arm", "right"),
    ("forearm", "right"),
    ("hand", "right"),
    ("lower_spine", None),
    ("hip", "left"),
    ("hip", "right"),
    ("thigh", "left"),
    ("shank", "left"),
    ("foot", "left"),
    ("thigh", "right"),
    ("shank", "right"),
    ("foot", "right"),
)
_BONE_INDEX: dict[tuple[str, str | None], int] = {b: i for i, b in enumerate(_BONE_LAYOUT)}


# ---------------------------------------------------------------------------
# Parameter types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubjectParams:
    """Body and gait parameters of one synthetic subject.

    Attributes:
        subject_id: Label of the subject.
        bone_lengths: 19 lengths in :data:`BONE_GRAPH` edge order, meters.
        leg_amplitude: Peak-to-peak ankle separation along x, meters.
        arm_amplitude: Peak-to-peak hand separation along x, meters.
        shoulder_amplitude: Peak-to-peak shoulder separation along x, meters.
        lean: Forward lean of the torso, as the sine of the lean angle.
        period: Gait cycle length, frames.
        leg_phase: Phase of the right leg at frame 0, radians.
        arm_phase: Phase of the right arm at frame 0, radians.
        speed: Walking speed, meters per frame.

    """

    subject_id: str
    bone_lengths: tuple[float, ...]
    leg_amplitude: float
    arm_amplitude: float
    shoulder_amplitude: float
    lean: float
    period: float
    leg_phase: float
    arm_phase: float
    speed: float

    def __post_init__(self) -> None:
        lengths = tuple(float(v) for v in self.bone_lengths)
        object.__setattr__(self, "bone_lengths", lengths)
        if len(lengths) != len(BONE_GRAPH):
            msg = f"expected {len(BONE_GRAPH)} bone lengths, got {len(lengths)}"
            raise ContractError(msg)
        low, high = BONE_LENGTH_RANGE
        if not all(low <= v <= high for v in lengths):
            msg = f"bone lengths must lie in [{low}, {high}]"
            raise ContractError(msg)
        if self.period < MIN_PERIOD:
            msg = f"period must be at least {MIN_PERIOD} frames, got {self.period}"
            raise ContractError(msg)
        for name in ("leg_amplitude", "arm_amplitude", "shoulder_amplitude", "lean", "speed"):
            if getattr(self, name) < 0:
                msg = f"{name} must be non-negative"
                raise ContractError(msg)
        if self.lean >= 1:
            msg = f"lean must be below 1, got {self.lean}"
            raise ContractError(msg)
        for side in ("left", "right"):
            if self.shoulder_amplitude / 2 > self.bone("shoulder", side):
                msg = "shoulder_amplitude / 2 exceeds the shoulder length"
                raise ContractError(msg)
            if self.arm_amplitude / 2 > sum(self.limb("arm", side)):
                msg = "arm_amplitude / 2 exceeds the arm length"
                raise ContractError(msg)
            if self.leg_amplitude / 2 > sum(self.limb("leg", side)):
                msg = "leg_amplitude / 2 exceeds the leg length"
                raise ContractError(msg)

    def bone(self, segment: str, side: str | None = None) -> float:
        return self.bone_lengths[_BONE_INDEX[(segment, side)]]

    def limb(self, limb: str, side: str) -> tuple[float, ...]:
        segments = ("upper_arm", "forearm", "hand") if limb == "arm" else ("thigh", "shank")
        return tuple(self.bone(s, side) for s in segments)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["bone_lengths"] = dict(zip(BONE_GRAPH.names, self.bone_lengths, strict=True))
        return data


@dataclass(frozen=True)
class NoiseConfig:
    """Measurement noise applied to generated sequences.

    Attributes:
        coord_std: Gaussian noise on every coordinate, meters.
        occlusion_rate: Per-frame probability that each of *occluded_joints*
            is occluded.
        inferred_std: Extra Gaussian noise on occluded positions, meters.
        occluded_joints: Joints that can be occluded.
        occlusion_mode: ``"inferred"`` keeps a corrupted position with state
            Inferred; ``"lost"`` marks the joint NotTracked.
        seed: Salt mixed into every per-sequence noise seed.

    """

    coord_std: float = 0.0
    occlusion_rate: float = 0.0
    inferred_std: float = 0.05
    occluded_joints: tuple[JointId, ...] = DEFAULT_OCCLUDED_JOINTS
    occlusion_mode: Literal["inferred", "lost"] = "inferred"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.coord_std < 0 or self.inferred_std < 0:
            msg = "noise standard deviations must be non-negative"
            raise ContractError(msg)
        if not 0 <= self.occlusion_rate <= 1:
            msg = f"occlusion_rate must be in [0, 1], got {self.occlusion_rate}"
            raise ContractError(msg)
        if self.occlusion_mode not in ("inferred", "lost"):
            msg = f"occlusion_mode must be 'inferred' or 'lost', got {self.occlusion_mode!r}"
            raise ContractError(msg)
        if self.seed < 0:
            msg = f"seed must be non-negative, got {self.seed}"
            raise ContractError(msg)
        object.__setattr__(
            self,
            "occluded_joints",
            tuple(JointId(j) for j in self.occluded_joints),
        )

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["occluded_joints"] = [int(j) for j in self.occluded_joints]
        return data


@dataclass(frozen=True, eq=False)
class SequenceTruth:
    """What the generator knows about one sequence.

    ``occlusion_mask[t, j - 1]`` is True when joint j was occluded in frame t.
    """

    subject_id: str
    sequence_id: str
    start_x: float
    start_z: float
    speed_factor: float
    phase_shift: float
    occlusion_mask: np.ndarray

    def occluded_frames(self) -> dict[str, list[int]]:
        """Occluded frame indices per joint id, for joints occluded at least once."""
        return {
            str(int(j)): np.flatnonzero(self.occlusion_mask[:, j.row]).tolist()
            for j in JointId
            if self.occlusion_mask[:, j.row].any()
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "subject_id": self.subject_id,
            "sequence_id": self.sequence_id,
            "start_x": self.start_x,
            "start_z": self.start_z,
            "speed_factor": self.speed_factor,
            "phase_shift": self.phase_shift,
            "occluded_frames": self.occluded_frames(),
        }


@dataclass(frozen=True, eq=False)
class DatasetTruth:
    subjects: tuple[SubjectParams, ...]
    sequences: tuple[SequenceTruth, ...]
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "noise": self.noise.to_dict(),
            "subjects": [p.to_dict() for p in self.subjects],
            "sequences": [s.to_dict() for s in self.sequences],
        }


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def generate_subject(seed: int, subject_id: str) -> SubjectParams:
    """Draw body and gait parameters from fixed uniform ranges.

    Paired bones share a base length with a small independent factor per
    side.  The result depends only on *seed*.
    """
    rng = np.random.default_rng(seed)
    low, high = BONE_LENGTH_RANGE
    drawn: dict[tuple[str, str | None], float] = {}
    for segment, (a, b) in _AXIAL_RANGES.items():
        drawn[(segment, None)] = float(rng.uniform(a, b))
    for segment, (a, b) in _PAIRED_RANGES.items():
        base = rng.uniform(a, b)
        for side in ("left", "right"):
            drawn[(segment, side)] = float(np.clip(base * rng.uniform(*_SIDE_FACTOR), low, high))
    leg_phase = float(rng.uniform(0, 2 * math.pi))
    return SubjectParams(
        subject_id=subject_id,
        bone_lengths=tuple(drawn[b] for b in _BONE_LAYOUT),
        leg_amplitude=float(rng.uniform(*_LEG_AMPLITUDE)),
        arm_amplitude=float(rng.uniform(*_ARM_AMPLITUDE)),
        shoulder_amplitude=float(rng.uniform(*_SHOULDER_AMPLITUDE)),
        lean=float(rng.uniform(*_LEAN)),
        period=float(rng.uniform(*_PERIOD)),
        leg_phase=leg_phase,
        arm_phase=leg_phase + math.pi + float(rng.uniform(-_ARM_PHASE_JITTER, _ARM_PHASE_JITTER)),
        speed=float(rng.uniform(*_SPEED)),
    )


def _swing_chain(
    root: np.ndarray,
    lengths: Sequence[float],
    swing: np.ndarray,
) -> list[np.ndarray]:
    """Hang a chain of segments below *root*, offset forward by *swing* in total.

    Each segment takes a share of the swing proportional to its length and
    drops vertically by whatever keeps its length exact.
    """
    total = sum(lengths)
    joints = []
    current = root
    for length in lengths:
        dx = swing * (length / total)
        dy = -np.sqrt(np.maximum(length**2 - dx**2, 0.0))
        current = current + np.stack([dx, dy, np.zeros_like(dx)], axis=1)
        joints.append(current)
    return joints


def _kinematics(
    params: SubjectParams,
    n_frames: int,
    *,
    start_x: float,
    start_z: float,
    speed_factor: float,
    phase_shift: float,
) -> np.ndarray:
    """Noise-free ``(T, 20, 3)`` joint positions."""
    t = np.arange(n_frames, dtype=np.float64)
    omega = 2 * math.pi / params.period
    leg = np.sin(omega * t + params.leg_phase + phase_shift)
    arm = np.sin(omega * t + params.arm_phase + phase_shift)
    zeros = np.zeros(n_frames)
    b = params.bone
    pos = np.zeros((n_frames, JOINT_COUNT, 3))

    def put(joint: JointId, value: np.ndarray) -> None:
        pos[:, joint.row] = value

    leg_length = (sum(params.limb("leg", "left")) + sum(params.limb("leg", "right"))) / 2
    hip_center = np.stack(
        [
            start_x + params.speed * speed_factor * t,
            np.full(n_frames, leg_length + _HIP_CLEARANCE),
            np.full(n_frames, start_z),
        ],
        axis=1,
    )
    lean = params.lean
    upright = math.sqrt(1 - lean**2)

    def up(length: float) -> np.ndarray:
        return np.array([lean * length, upright * length, 0.0])

    spine = hip_center + up(b("lower_spine"))
    shoulder_center = spine + up(b("upper_spine"))
    put(J.HIP_CENTER, hip_center)
    put(J.SPINE, spine)
    put(J.SHOULDER_CENTER, shoulder_center)
    put(J.HEAD, shoulder_center + up(b("head")))

    for side, sign in (("right", 1.0), ("left", -1.0)):
        is_right = side == "right"
        sway = sign * (params.shoulder_amplitude / 2) * arm
        length = b("shoulder", side)
        shoulder = shoulder_center + np.stack(
            [sway, zeros, sign * np.sqrt(length**2 - sway**2)],
            axis=1,
        )
        elbow, wrist, hand = _swing_chain(
            shoulder,
            params.limb("arm", side),
            sign * (params.arm_amplitude / 2) * arm,
        )
        hip = hip_center + np.array([0.0, 0.0, sign * b("hip", side)])
        knee, ankle = _swing_chain(
            hip,
            params.limb("leg", side),
            sign * (params.leg_amplitude / 2) * leg,
        )
        foot_length = b("foot", side)
        foot = ankle + np.array([0.8 * foot_length, -0.6 * foot_length, 0.0])
        put(J.SHOULDER_RIGHT if is_right else J.SHOULDER_LEFT, shoulder)
        put(J.ELBOW_RIGHT if is_right else J.ELBOW_LEFT, elbow)
        put(J.WRIST_RIGHT if is_right else J.WRIST_LEFT, wrist)
        put(J.HAND_RIGHT if is_right else J.HAND_LEFT, hand)
        put(J.HIP_RIGHT if is_right else J.HIP_LEFT, hip)
        put(J.KNEE_RIGHT if is_right else J.KNEE_LEFT, knee)
        put(J.ANKLE_RIGHT if is_right else J.ANKLE_LEFT, ankle)
        put(J.FOOT_RIGHT if is_right else J.FOOT_LEFT, foot)
    return pos


def generate_sequence_with_truth(
    params: SubjectParams,
    n_frames: int,
    noise: NoiseConfig,
    seed: int,
    *,
    sequence_id: str = "seq01",
) -> tuple[SkeletonSequence, SequenceTruth]:
    """Generate one walk of *params* together with its ground truth.

    Draw order from *seed*: start position, speed factor and phase shift,
    then coordinate noise, occlusion draws and inferred-position noise.
    Noise arrays are always drawn, so changing a noise level never shifts
    the other draws.

    Raises:
        ContractError: *n_frames* is below 2.

    """
    if n_frames < 2:  # noqa: PLR2004
        msg = f"n_frames must be at least 2, got {n_frames}"
        raise ContractError(msg)
    rng = np.random.default_rng(seed)
    start_x = float(rng.uniform(*_START_X))
    start_z = float(rng.uniform(*_START_Z))
    speed_factor = float(rng.uniform(*_SPEED_FACTOR))
    phase_shift = float(rng.uniform(0, 2 * math.pi))
    positions = _kinematics(
        params,
        n_frames,
        start_x=start_x,
        start_z=start_z,
        speed_factor=speed_factor,
        phase_shift=phase_shift,
    )
    positions += noise.coord_std * rng.standard_normal(positions.shape)

    rows = [j.row for j in noise.occluded_joints]
    hit = rng.random((n_frames, len(rows))) < noise.occlusion_rate
    corruption = noise.inferred_std * rng.standard_normal((n_frames, len(rows), 3))
    mask = np.zeros((n_frames, JOINT_COUNT), dtype=bool)
    mask[:, rows] = hit

    states = np.full((n_frames, JOINT_COUNT), TrackingState.TRACKED, dtype=np.int8)
    if noise.occlusion_mode == "lost":
        states[mask] = TrackingState.NOT_TRACKED
    else:
        states[mask] = TrackingState.INFERRED
        positions[:, rows] += np.where(hit[..., np.newaxis], corruption, 0.0)

    frames = tuple(SkeletonFrame(t, positions[t], states[t]) for t in range(n_frames))
    sequence = SkeletonSequence(params.subject_id, sequence_id, frames)
    truth = SequenceTruth(
        params.subject_id,
        sequence_id,
        start_x,
        start_z,
        speed_factor,
        phase_shift,
        mask,
    )
    return sequence, truth


def generate_sequence(
    params: SubjectParams,
    n_frames: int,
    noise: NoiseConfig,
    seed: int,
    *,
    sequence_id: str = "seq01",
) -> SkeletonSequence:
    """Generate one walk of *params*; see :func:`generate_sequence_with_truth`."""
    return generate_sequence_with_truth(
        params,
        n_frames,
        noise,
        seed,
        sequence_id=sequence_id,
    )[0]


def generate_dataset_with_truth(
    n_subjects: int,
    sequences_per_subject: int,
    n_frames: int,
    noise: NoiseConfig,
    seed: int,
    *,
    workers: int = 1,
) -> tuple[Dataset, DatasetTruth]:
    """Generate subjects ``S001...`` with sequences ``seq01...`` each.

    Subject i is drawn from ``derive_seed(seed, 1, i)``; its sequence j from
    ``derive_seed(seed, 2, i, j, noise.seed)``.

    Raises:
        ContractError: A count is not positive.

    """
    for name, value in (
        ("n_subjects", n_subjects),
        ("sequences_per_subject", sequences_per_subject),
        ("n_frames", n_frames),
    ):
        if value < 1:
            msg = f"{name} must be positive, got {value}"
            raise ContractError(msg)
    subjects = tuple(
        generate_subject(derive_seed(seed, 1, i), f"S{i + 1:03d}") for i in range(n_subjects)
    )
    jobs = [(i, j) for i in range(n_subjects) for j in range(sequences_per_subject)]

    def _one(job: tuple[int, int]) -> tuple[SkeletonSequence, SequenceTruth]:
        i, j = job
        return generate_sequence_with_truth(
            subjects[i],
            n_frames,
            noise,
            derive_seed(seed, 2, i, j, noise.seed),
            sequence_id=f"seq{j + 1:02d}",
        )

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, jobs))
    else:
        results = [_one(job) for job in jobs]

    metadata = {
        "generator": "synth",
        "seed": str(seed),
        "subjects": str(n_subjects),
        "sequences_per_subject": str(sequences_per_subject),
        "frames": str(n_frames),
        "coord_std": repr(noise.coord_std),
        "occlusion_rate": repr(noise.occlusion_rate),
        "occlusion_mode": noise.occlusion_mode,
    }
    dataset = Dataset(tuple(seq for seq, _ in results), metadata)
    truth = DatasetTruth(subjects, tuple(t for _, t in results), noise, seed)
    logger.info(
        "Generated %d subject(s) x %d sequence(s) x %d frame(s)",
        n_subjects,
        sequences_per_subject,
        n_frames,
    )
    return dataset, truth


def generate_dataset(
    n_subjects: int,
    sequences_per_subject: int,
    n_frames: int,
    noise: NoiseConfig,
    seed: int,
    *,
    workers: int = 1,
) -> Dataset:
    return generate_dataset_with_truth(
        n_subjects,
        sequences_per_subject,
        n_frames,
        noise,
        seed,
        workers=workers,
    )[0]


def write_synthetic_tree(
    out_dir: Path | str,
    dataset: Dataset,
    truth: DatasetTruth | None = None,
) -> Path:
    """Write ``manifest.csv``, ``sequences/*.csv`` and ``truth.json`` under *out_dir*.

    Returns:
        Path of the manifest.

    """
    root = Path(out_dir)
    seq_dir = root / "sequences"
    seq_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for seq in dataset:
        rel = f"sequences/{seq.subject_id}_{seq.sequence_id}.csv"
        write_sequence(seq, root / rel)
        entries.append((seq.subject_id, seq.sequence_id, rel))
    manifest = root / "manifest.csv"
    write_manifest(manifest, entries, dataset.metadata)
    if truth is not None:
        with (root / "truth.json").open("w", encoding="utf-8", newline="\n") as fh:
            json.dump(truth.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    logger.info("Wrote %d sequence file(s) to %s", len(entries), root)
    return manifest

"""skeleton.py - Skeleton data model and sequence/manifest file I/O.

A sequence file is a CSV with one row per frame::

    frame_index,x1,y1,z1,s1,...,x20,y20,z20,s20

(81 columns; ``s`` is the tracking state, 2=Tracked, 1=Inferred,
0=NotTracked).  A header row is optional and is recognised by a
non-numeric first token.  Untracked joints are stored at ``(0, 0, 0)``.

A dataset manifest lists one sequence per row as
``subject_id,sequence_id,relative_path``; lines of the form
``# key: value`` carry dataset metadata.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from collections.abc import Iterable, Iterator, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from types import MappingProxyType
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from _common import (
    COORD_DECIMALS,
    JOINT_COUNT,
    ContractError,
    JointId,
    OrderingError,
    ParseError,
    SchemaError,
    TrackingState,
)

if TYPE_CHECKING:
    from typing import TextIO

logger = logging.getLogger(__name__)

__all__ = [
    "COLUMN_COUNT",
    "Dataset",
    "ManifestEntry",
    "Point3",
    "SkeletonFrame",
    "SkeletonSequence",
    "ValidationReport",
    "joint_position",
    "load_dataset",
    "load_manifest",
    "parse_sequence",
    "read_sequence",
    "serialize_sequence",
    "validate_sequence",
    "write_manifest",
    "write_sequence",
]

#: Columns per sequence row: frame index + (x, y, z, state) per joint.
COLUMN_COUNT: int = 1 + 4 * JOINT_COUNT

_MANIFEST_HEADER: tuple[str, str, str] = ("subject_id", "sequence_id", "relative_path")

_VALID_STATES: frozenset[int] = frozenset(int(s) for s in TrackingState)


def _sequence_header() -> list[str]:
    header = ["frame_index"]
    for j in JointId:
        header.extend(f"{axis}{int(j)}" for axis in ("x", "y", "z", "s"))
    return header


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------


class Point3(NamedTuple):
    """A 3-D position in meters, in the depth sensor's coordinate frame."""

    x: float
    y: float
    z: float


def _frozen_array(values: np.ndarray, dtype: type) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SkeletonFrame:
    """One time sample of a skeleton.

    Positions of ``NotTracked`` joints are forced to ``(0, 0, 0)``.

    Attributes:
        frame_index: Non-negative frame number taken from the source file.
        positions: ``(20, 3)`` read-only array, row ``j - 1`` is joint ``j``.
        states: ``(20,)`` read-only array of :class:`TrackingState` codes.

    """

    frame_index: int
    positions: np.ndarray
    states: np.ndarray

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            msg = f"frame_index must be non-negative, got {self.frame_index}"
            raise ContractError(msg)
        positions = np.array(self.positions, dtype=np.float64, copy=True)
        states = np.asarray(self.states, dtype=np.int8)
        if positions.shape != (JOINT_COUNT, 3):
            msg = f"positions must have shape (20, 3), got {positions.shape}"
            raise ContractError(msg)
        if states.shape != (JOINT_COUNT,):
            msg = f"states must have shape (20,), got {states.shape}"
            raise ContractError(msg)
        if not set(np.unique(states).tolist()) <= _VALID_STATES:
            msg = f"unknown tracking state in {states.tolist()}"
            raise ContractError(msg)
        if not np.isfinite(positions).all():
            msg = f"frame {self.frame_index} has non-finite coordinates"
            raise ContractError(msg)
        positions[states == TrackingState.NOT_TRACKED] = 0.0
        object.__setattr__(self, "positions", _frozen_array(positions, np.float64))
        object.__setattr__(self, "states", _frozen_array(states, np.int8))

    @property
    def is_valid(self) -> bool:
        """True when no joint is ``NotTracked``."""
        return bool((self.states != TrackingState.NOT_TRACKED).all())

    def state(self, joint: JointId) -> TrackingState:
        return TrackingState(int(self.states[JointId(joint).row]))


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    """An ordered run of frames belonging to one walk of one subject."""

    subject_id: str
    sequence_id: str
    frames: tuple[SkeletonFrame, ...]

    def __post_init__(self) -> None:
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        for prev, cur in zip(frames, frames[1:], strict=False):
            if cur.frame_index <= prev.frame_index:
                msg = (
                    f"sequence {self.key}: frame_index must strictly increase, "
                    f"got {prev.frame_index} then {cur.frame_index}"
                )
                raise ContractError(msg)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def key(self) -> tuple[str, str]:
        return (self.subject_id, self.sequence_id)

    @cached_property
    def positions(self) -> np.ndarray:
        """``(T, 20, 3)`` stacked positions of every frame."""
        if not self.frames:
            return np.zeros((0, JOINT_COUNT, 3))
        return np.stack([f.positions for f in self.frames])

    @cached_property
    def states(self) -> np.ndarray:
        """``(T, 20)`` stacked tracking states of every frame."""
        if not self.frames:
            return np.zeros((0, JOINT_COUNT), dtype=np.int8)
        return np.stack([f.states for f in self.frames])

    @cached_property
    def valid_mask(self) -> np.ndarray:
        """``(T,)`` boolean mask of frames without untracked joints."""
        return (self.states != TrackingState.NOT_TRACKED).all(axis=1)

    @property
    def valid_positions(self) -> np.ndarray:
        """``(V, 20, 3)`` positions of the valid frames only."""
        return self.positions[self.valid_mask]


@dataclass(frozen=True, eq=False)
class Dataset:
    """A collection of sequences with unique ``(subject_id, sequence_id)`` keys."""

    sequences: tuple[SkeletonSequence, ...]
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        sequences = tuple(self.sequences)
        dupes = [k for k, n in Counter(s.key for s in sequences).items() if n > 1]
        if dupes:
            msg = f"duplicate (subject_id, sequence_id) pairs: {sorted(dupes)}"
            raise ContractError(msg)
        object.__setattr__(self, "sequences", sequences)
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[SkeletonSequence]:
        return iter(self.sequences)

    @property
    def subjects(self) -> tuple[str, ...]:
        """Sorted distinct subject ids."""
        return tuple(sorted({s.subject_id for s in self.sequences}))


@dataclass(frozen=True)
class ValidationReport:
    """Frame and joint tracking statistics for one sequence."""

    total_frames: int
    valid_frames: int
    invalid_frames: int
    not_tracked_per_joint: Mapping[JointId, int]
    inferred_per_joint: Mapping[JointId, int]


# ---------------------------------------------------------------------------
# Frame / sequence operations
# ---------------------------------------------------------------------------


def joint_position(frame: SkeletonFrame, j: JointId | int) -> Point3:
    """Return the stored position of joint *j* in *frame*."""
    x, y, z = frame.positions[JointId(j).row]
    return Point3(float(x), float(y), float(z))


def validate_sequence(seq: SkeletonSequence) -> ValidationReport:
    """Count valid frames and per-joint tracking losses of *seq*.

    Purely informational; never raises and never mutates *seq*.
    """
    states = seq.states
    not_tracked = (states == TrackingState.NOT_TRACKED).sum(axis=0)
    inferred = (states == TrackingState.INFERRED).sum(axis=0)
    valid = int(seq.valid_mask.sum())
    return ValidationReport(
        total_frames=len(seq),
        valid_frames=valid,
        invalid_frames=len(seq) - valid,
        not_tracked_per_joint=MappingProxyType(
            {j: int(not_tracked[j.row]) for j in JointId},
        ),
        inferred_per_joint=MappingProxyType({j: int(inferred[j.row]) for j in JointId}),
    )


# ---------------------------------------------------------------------------
# Sequence CSV
# ---------------------------------------------------------------------------


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _parse_row(row: list[str], line_number: int) -> SkeletonFrame:
    """Convert one 81-column CSV row into a frame."""
    if len(row) != COLUMN_COUNT:
        msg = f"expected {COLUMN_COUNT} columns, got {len(row)}"
        raise SchemaError(msg, line_number)
    tokens = [t.strip() for t in row]
    try:
        frame_index = int(tokens[0])
    except ValueError:
        msg = f"frame_index {tokens[0]!r} is not an integer"
        raise ParseError(msg, line_number) from None
    if frame_index < 0:
        msg = f"frame_index {frame_index} is negative"
        raise ParseError(msg, line_number)

    positions = np.empty((JOINT_COUNT, 3))
    states = np.empty(JOINT_COUNT, dtype=np.int8)
    for j in range(JOINT_COUNT):
        base = 1 + 4 * j
        for axis in range(3):
            token = tokens[base + axis]
            try:
                value = float(token)
            except ValueError:
                msg = f"joint {j + 1}: coordinate {token!r} is not a number"
                raise ParseError(msg, line_number) from None
            if not math.isfinite(value):
                msg = f"joint {j + 1}: coordinate {token!r} is not finite"
                raise ParseError(msg, line_number)
            positions[j, axis] = value
        state_token = tokens[base + 3]
        try:
            state = int(state_token)
        except ValueError:
            msg = f"joint {j + 1}: state {state_token!r} is not an integer"
            raise ParseError(msg, line_number) from None
        if state not in _VALID_STATES:
            msg = f"joint {j + 1}: state {state} is not one of 0, 1, 2"
            raise ParseError(msg, line_number)
        states[j] = state
    return SkeletonFrame(frame_index, positions, states)


def parse_sequence(
    text_stream: Iterable[str],
    subject_id: str,
    sequence_id: str,
    *,
    source: str | None = None,
) -> SkeletonSequence:
    """Parse a sequence CSV into a :class:`SkeletonSequence`.

    Frames keep file order and their frame_index.  Blank lines are
    ignored; a header row is accepted only as the first non-blank line.

    Args:
        text_stream: Lines of the file (an open text file or list of str).
        subject_id: Subject label for the sequence.
        sequence_id: Sequence identifier, unique per subject.
        source: Optional file name reported in errors.

    Raises:
        SchemaError: A row does not have 81 columns.
        OrderingError: frame_index does not strictly increase.
        ParseError: Any other malformed token.

    """
    frames: list[SkeletonFrame] = []
    seen_row = False
    reader = csv.reader(text_stream)
    try:
        for row in reader:
            line_number = reader.line_num
            if not row or all(not t.strip() for t in row):
                continue
            if not seen_row and not _is_number(row[0].strip()):
                seen_row = True
                continue
            seen_row = True
            frame = _parse_row(row, line_number)
            if frames and frame.frame_index <= frames[-1].frame_index:
                msg = (
                    f"frame_index {frame.frame_index} does not follow "
                    f"{frames[-1].frame_index}"
                )
                raise OrderingError(msg, line_number)
            frames.append(frame)
    except ParseError as exc:
        if source and not exc.source:
            raise exc.with_source(source) from exc
        raise
    except csv.Error as exc:
        raise ParseError(str(exc), reader.line_num, source) from exc
    return SkeletonSequence(subject_id, sequence_id, tuple(frames))


def serialize_sequence(seq: SkeletonSequence, stream: TextIO) -> None:
    """Write *seq* as a sequence CSV with a header row.

    Coordinates use a fixed number of decimals, so
    ``serialize(parse(serialize(s)))`` reproduces ``serialize(s)`` exactly.
    """
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(_sequence_header())
    fmt = f"{{:.{COORD_DECIMALS}f}}"
    for frame in seq.frames:
        row = [str(frame.frame_index)]
        for j in range(JOINT_COUNT):
            x, y, z = frame.positions[j]
            row.extend((fmt.format(x), fmt.format(y), fmt.format(z)))
            row.append(str(int(frame.states[j])))
        writer.writerow(row)


def read_sequence(path: Path | str, subject_id: str, sequence_id: str) -> SkeletonSequence:
    """Open and parse the sequence CSV at *path*."""
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        return parse_sequence(fh, subject_id, sequence_id, source=str(path))


def write_sequence(seq: SkeletonSequence, path: Path | str) -> None:
    """Serialize *seq* to *path* (UTF-8, ``\\n`` line endings)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        serialize_sequence(seq, fh)


# ---------------------------------------------------------------------------
# Manifest / dataset
# ---------------------------------------------------------------------------


class ManifestEntry(NamedTuple):
    subject_id: str
    sequence_id: str
    path: Path


def load_manifest(path: Path | str) -> tuple[list[ManifestEntry], dict[str, str]]:
    """Read a dataset manifest.

    Relative sequence paths are resolved against the manifest's directory.

    Returns:
        The entries in file order and the ``# key: value`` metadata.

    Raises:
        SchemaError: A record does not have three columns.
        ParseError: A record has an empty field.

    """
    manifest_path = Path(path)
    base = manifest_path.parent
    entries: list[ManifestEntry] = []
    metadata: dict[str, str] = {}
    with manifest_path.open("r", encoding="utf-8", newline="") as fh:
        for line_number, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                key, sep, value = stripped.lstrip("#").partition(":")
                if sep and key.strip():
                    metadata[key.strip()] = value.strip()
                continue
            fields = [f.strip() for f in next(csv.reader([stripped]))]
            if tuple(fields) == _MANIFEST_HEADER:
                continue
            if len(fields) != len(_MANIFEST_HEADER):
                msg = f"expected 3 columns, got {len(fields)}"
                raise SchemaError(msg, line_number, str(manifest_path))
            if not all(fields):
                msg = "subject_id, sequence_id and relative_path must be non-empty"
                raise ParseError(msg, line_number, str(manifest_path))
            subject_id, sequence_id, rel = fields
            entries.append(ManifestEntry(subject_id, sequence_id, base / rel))
    return entries, metadata


def write_manifest(
    path: Path | str,
    entries: Iterable[tuple[str, str, str]],
    metadata: Mapping[str, str] | None = None,
) -> None:
    """Write a manifest with metadata comments, a header and one row per entry.

    Args:
        path: Destination file.
        entries: ``(subject_id, sequence_id, relative_path)`` triples.
        metadata: Optional ``key: value`` pairs written as comments.

    """
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_MANIFEST_HEADER)
        for subject_id, sequence_id, rel in entries:
            writer.writerow((subject_id, sequence_id, rel))


def load_dataset(manifest_path: Path | str, *, workers: int = 1) -> Dataset:
    """Load every sequence listed in a manifest.

    Files are parsed in parallel when *workers* > 1; the resulting dataset
    keeps manifest order.
    """
    entries, metadata = load_manifest(manifest_path)
    logger.info("Loading %d sequences from %s", len(entries), manifest_path)

    def _read(entry: ManifestEntry) -> SkeletonSequence:
        return read_sequence(entry.path, entry.subject_id, entry.sequence_id)

    if workers > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sequences = tuple(pool.map(_read, entries))
    else:
        sequences = tuple(_read(e) for e in entries)
    metadata.setdefault("source", str(manifest_path))
    return Dataset(sequences, metadata)

"""features.py - Feature-set dispatch, feature tables and gallery building.

Maps a :class:`~_common.FeatureKind` to its extractor, runs extraction over a
whole :class:`~skeleton.Dataset` (optionally on a thread pool) and writes the
resulting table as CSV.  Sequences that fail a precondition (fewer than two
valid frames) are skipped with a warning and listed in the table's skip
report instead of aborting the run.
"""

from __future__ import annotations

import csv
import logging
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from _common import RESULT_FORMAT, FeatureKind, InsufficientDataError
from anthro_features import AF_NAMES, af, cf
from ensemble import Gallery
from gait_features import (
    MEAN_NAMES,
    RDF_NAMES,
    STD_NAMES,
    FeatureVector,
    mean_features,
    rdf,
    std_features,
)

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence
    from typing import TextIO

    from skeleton import Dataset, SkeletonSequence

logger = logging.getLogger(__name__)

__all__ = [
    "FeatureTable",
    "SkippedSequence",
    "build_feature_table",
    "extract_features",
    "feature_names",
    "write_feature_csv",
    "write_skip_report",
]

_EXTRACTORS: dict[FeatureKind, Callable[[SkeletonSequence], FeatureVector]] = {
    FeatureKind.AF: af,
    FeatureKind.RDF: rdf,
    FeatureKind.CF: cf,
    FeatureKind.MEAN: mean_features,
    FeatureKind.STD: std_features,
}

_NAMES: dict[FeatureKind, tuple[str, ...]] = {
    FeatureKind.AF: AF_NAMES,
    FeatureKind.RDF: RDF_NAMES,
    FeatureKind.CF: AF_NAMES + RDF_NAMES,
    FeatureKind.MEAN: MEAN_NAMES,
    FeatureKind.STD: STD_NAMES,
}


def feature_names(kind: FeatureKind | str) -> tuple[str, ...]:
    """Return the component names of feature set *kind*."""
    return _NAMES[FeatureKind(kind)]


def extract_features(seq: SkeletonSequence, kind: FeatureKind | str) -> FeatureVector:
    """Extract feature set *kind* from *seq*.

    Raises:
        InsufficientDataError: Fewer than two valid frames.

    """
    kind = FeatureKind(kind)
    start = time.perf_counter()
    vector = _EXTRACTORS[kind](seq)
    logger.debug(
        "Extracted %s for %s/%s (%d frames) in %.2f ms",
        kind.value,
        seq.subject_id,
        seq.sequence_id,
        len(seq),
        (time.perf_counter() - start) * 1000,
    )
    return vector


class SkippedSequence(NamedTuple):
    subject_id: str
    sequence_id: str
    reason: str


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """One feature vector per extracted sequence, in dataset order.

    Attributes:
        kind: Feature set the table holds.
        names: Component names, one per column of *matrix*.
        keys: ``(subject_id, sequence_id)`` per row.
        matrix: ``(rows, dimension)`` read-only array.
        skipped: Sequences left out, with the reason.

    """

    kind: FeatureKind
    names: tuple[str, ...]
    keys: tuple[tuple[str, str], ...]
    matrix: np.ndarray
    skipped: tuple[SkippedSequence, ...] = ()

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=np.float64, copy=True).reshape(
            len(self.keys),
            len(self.names),
        )
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    def __len__(self) -> int:
        return len(self.keys)

    @cached_property
    def labels(self) -> tuple[str, ...]:
        return tuple(subject for subject, _ in self.keys)

    def vector(self, row: int) -> FeatureVector:
        return FeatureVector(self.names, self.matrix[row])

    def gallery(self, rows: Sequence[int] | None = None) -> Gallery:
        """Build a :class:`~ensemble.Gallery` from *rows* (all rows by default)."""
        idx = list(range(len(self))) if rows is None else list(rows)
        labels = self.labels
        return Gallery(tuple(labels[i] for i in idx), self.matrix[idx], self.names)

    def restrict(self, subject_ids: Iterable[str]) -> FeatureTable:
        """Return the rows and skip records of *subject_ids*, in table order."""
        wanted = set(subject_ids)
        rows = [i for i, label in enumerate(self.labels) if label in wanted]
        return FeatureTable(
            self.kind,
            self.names,
            tuple(self.keys[i] for i in rows),
            self.matrix[rows],
            tuple(s for s in self.skipped if s.subject_id in wanted),
        )


def build_feature_table(
    dataset: Dataset,
    kind: FeatureKind | str,
    *,
    workers: int = 1,
) -> FeatureTable:
    """Extract feature set *kind* from every sequence of *dataset*.

    Rows keep dataset order whatever the worker count.

    Args:
        dataset: Sequences to extract.
        kind: Feature set.
        workers: Thread count; ``1`` runs inline.

    Returns:
        The feature table, with skipped sequences recorded.

    """
    kind = FeatureKind(kind)

    def _extract(seq: SkeletonSequence) -> FeatureVector | str:
        try:
            return extract_features(seq, kind)
        except InsufficientDataError as exc:
            return str(exc)

    sequences = list(dataset)
    if workers > 1 and len(sequences) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_extract, sequences))
    else:
        results = [_extract(seq) for seq in sequences]

    keys: list[tuple[str, str]] = []
    rows: list[np.ndarray] = []
    skipped: list[SkippedSequence] = []
    for seq, result in zip(sequences, results, strict=True):
        if isinstance(result, str):
            logger.warning("Skipping %s/%s: %s", seq.subject_id, seq.sequence_id, result)
            skipped.append(SkippedSequence(seq.subject_id, seq.sequence_id, result))
            continue
        keys.append(seq.key)
        rows.append(result.values)

    names = _NAMES[kind]
    matrix = np.vstack(rows) if rows else np.empty((0, len(names)))
    logger.info(
        "Extracted %s features for %d sequence(s), skipped %d",
        kind.value,
        len(keys),
        len(skipped),
    )
    return FeatureTable(kind, names, tuple(keys), matrix, tuple(skipped))


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def write_feature_csv(table: FeatureTable, stream: TextIO) -> None:
    """Write ``subject_id,sequence_id,<names...>`` rows, values as ``%.6g``."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["subject_id", "sequence_id", *table.names])
    for (subject_id, sequence_id), row in zip(table.keys, table.matrix, strict=True):
        writer.writerow([subject_id, sequence_id, *(RESULT_FORMAT % v for v in row)])


def write_skip_report(skipped: Sequence[SkippedSequence], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SkippedSequence._fields)
    writer.writerows(skipped)

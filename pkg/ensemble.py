"""ensemble.py - Manhattan-distance KNN and the random subspace ensemble.

A probe feature vector is matched against a labelled :class:`Gallery` with
the L1 (Manhattan) distance; no feature scaling is applied.  The ensemble
draws ``L`` random subspaces of ``N`` feature indices, classifies the probe
with KNN inside each subspace and returns the majority vote.

Tie-breaking is deterministic everywhere:

* equal distances - the lower gallery index is nearer;
* equal neighbour counts among the K nearest - the class of the single
  nearest neighbour wins if it is tied, otherwise the smallest label;
* equal vote counts - the smallest label.

Indices (gallery rows, feature components, subspace members) are 0-based.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from _common import ContractError, derive_seed
from gait_features import FeatureVector

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

logger = logging.getLogger(__name__)

__all__ = [
    "MAX_SEED",
    "EnsembleConfig",
    "Gallery",
    "Identification",
    "RankedClass",
    "Subspace",
    "identify",
    "knn_classify",
    "majority_vote",
    "make_subspaces",
    "manhattan_distance",
    "project",
    "rank_classes",
    "rsm_classify",
    "rsm_rank_classes",
]

MAX_SEED: int = 2**64 - 1


@dataclass(frozen=True)
class EnsembleConfig:
    """Random subspace ensemble parameters.

    Attributes:
        L: Number of weak classifiers.
        N: Features per random subspace.
        K: Neighbours consulted by each KNN.
        seed: Base seed for the subspace draws.

    """

    L: int = 100
    N: int = 10
    K: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("L", "N", "K"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                msg = f"{name} must be a positive integer, got {value!r}"
                raise ContractError(msg)
        if not 0 <= self.seed <= MAX_SEED:
            msg = f"seed must be in [0, 2**64), got {self.seed}"
            raise ContractError(msg)


@dataclass(frozen=True, eq=False)
class Gallery:
    """Labelled reference feature vectors, one row per entry.

    Entry order is stable; it decides distance ties.
    """

    labels: tuple[str, ...]
    matrix: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        matrix = np.array(self.matrix, dtype=np.float64, copy=True)
        if not labels:
            msg = "gallery must not be empty"
            raise ContractError(msg)
        if matrix.ndim != 2 or matrix.shape[0] != len(labels):  # noqa: PLR2004
            msg = f"matrix shape {matrix.shape} does not match {len(labels)} labels"
            raise ContractError(msg)
        if self.names is not None and len(self.names) != matrix.shape[1]:
            msg = f"{len(self.names)} names for dimension {matrix.shape[1]}"
            raise ContractError(msg)
        matrix.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrix", matrix)
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[str, FeatureVector]]) -> Gallery:
        """Build a gallery from ``(label, feature)`` pairs of equal dimension."""
        pairs = list(entries)
        if not pairs:
            msg = "gallery must not be empty"
            raise ContractError(msg)
        names = pairs[0][1].names
        for label, feature in pairs:
            if feature.names != names:
                msg = f"entry {label!r} has a different feature layout"
                raise ContractError(msg)
        return cls(
            tuple(label for label, _ in pairs),
            np.vstack([feature.values for _, feature in pairs]),
            names,
        )

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.labels)))

    @property
    def entries(self) -> tuple[tuple[str, FeatureVector], ...]:
        names = self.names or tuple(f"f{i}" for i in range(self.dimension))
        return tuple(
            (label, FeatureVector(names, row))
            for label, row in zip(self.labels, self.matrix, strict=True)
        )

    def project(self, subspace: Subspace) -> Gallery:
        """Return the gallery restricted to the columns of *subspace*."""
        _check_subspace(subspace, self.dimension)
        idx = list(subspace.indices)
        names = None if self.names is None else tuple(self.names[i] for i in idx)
        return Gallery(self.labels, self.matrix[:, idx], names)


@dataclass(frozen=True)
class Subspace:
    """Distinct feature indices, stored sorted."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        indices = tuple(sorted(int(i) for i in self.indices))
        if not indices:
            msg = "a subspace needs at least one index"
            raise ContractError(msg)
        if len(set(indices)) != len(indices):
            msg = f"subspace indices must be distinct: {indices}"
            raise ContractError(msg)
        if indices[0] < 0:
            msg = f"subspace indices must be non-negative: {indices}"
            raise ContractError(msg)
        object.__setattr__(self, "indices", indices)

    def __len__(self) -> int:
        return len(self.indices)


class RankedClass(NamedTuple):
    """One candidate class and the score it was ranked by.

    ``score`` is a distance for plain KNN ranking (lower is better) and a
    vote count for ensemble ranking (higher is better).
    """

    label: str
    score: float


class Identification(NamedTuple):
    label: str
    ranking: tuple[RankedClass, ...]


# ---------------------------------------------------------------------------
# Distances and KNN
# ---------------------------------------------------------------------------


def _as_vector(v: FeatureVector | Sequence[float] | np.ndarray) -> np.ndarray:
    if isinstance(v, FeatureVector):
        return v.values
    return np.asarray(v, dtype=np.float64).reshape(-1)


def manhattan_distance(
    a: FeatureVector | Sequence[float] | np.ndarray,
    b: FeatureVector | Sequence[float] | np.ndarray,
) -> float:
    """Sum of absolute component differences.

    Raises:
        ContractError: The vectors differ in dimension.

    """
    va, vb = _as_vector(a), _as_vector(b)
    if va.shape != vb.shape:
        msg = f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}"
        raise ContractError(msg)
    return float(np.abs(va - vb).sum())


def _abs_diff(probe: np.ndarray, gallery: Gallery) -> np.ndarray:
    if probe.shape[0] != gallery.dimension:
        msg = f"probe dimension {probe.shape[0]} != gallery dimension {gallery.dimension}"
        raise ContractError(msg)
    return np.abs(gallery.matrix - probe)


def _check_k(k: int, gallery_size: int) -> None:
    if k < 1:
        msg = f"K must be positive, got {k}"
        raise ContractError(msg)
    if k > gallery_size:
        msg = f"K={k} exceeds gallery size {gallery_size}"
        raise ContractError(msg)


def _knn_from_distances(dist: np.ndarray, labels: tuple[str, ...], k: int) -> str:
    """Apply the KNN decision rule to precomputed distances."""
    if k == 1:
        # argmin returns the first minimum, i.e. the lowest gallery index.
        return labels[int(np.argmin(dist))]
    nearest = np.argsort(dist, kind="stable")[:k]
    top = [labels[i] for i in nearest]
    counts = Counter(top)
    best = max(counts.values())
    tied = sorted(label for label, n in counts.items() if n == best)
    return top[0] if top[0] in tied else tied[0]


def knn_classify(
    probe: FeatureVector | Sequence[float] | np.ndarray,
    gallery: Gallery,
    K: int,  # noqa: N803
) -> str:
    """Return the modal label among the *K* nearest gallery entries.

    Raises:
        ContractError: K is not in ``[1, len(gallery)]`` or dimensions differ.

    """
    _check_k(K, gallery.size)
    dist = _abs_diff(_as_vector(probe), gallery).sum(axis=1)
    return _knn_from_distances(dist, gallery.labels, K)


def rank_classes(
    probe: FeatureVector | Sequence[float] | np.ndarray,
    gallery: Gallery,
) -> tuple[RankedClass, ...]:
    """Rank every gallery class by the distance of its nearest entry.

    Ties keep gallery order, so the first class equals the 1-NN label.
    """
    dist = _abs_diff(_as_vector(probe), gallery).sum(axis=1)
    ranking: list[RankedClass] = []
    seen: set[str] = set()
    for i in np.argsort(dist, kind="stable"):
        label = gallery.labels[i]
        if label not in seen:
            seen.add(label)
            ranking.append(RankedClass(label, float(dist[i])))
    return tuple(ranking)


# ---------------------------------------------------------------------------
# Random subspaces
# ---------------------------------------------------------------------------


def _check_subspace(subspace: Subspace, dimension: int) -> None:
    if subspace.indices[-1] >= dimension:
        msg = f"subspace index {subspace.indices[-1]} out of range for dimension {dimension}"
        raise ContractError(msg)


@lru_cache(maxsize=64)
def make_subspaces(N1: int, config: EnsembleConfig) -> tuple[Subspace, ...]:  # noqa: N803
    """Draw ``config.L`` subspaces of ``config.N`` distinct indices from ``range(N1)``.

    Subspace ``i`` depends only on ``(config.seed, i)``, so the draws do not
    depend on evaluation order.

    Raises:
        ContractError: ``config.N > N1``.

    """
    if config.N > N1:
        msg = f"subspace dimension N={config.N} exceeds feature dimension {N1}"
        raise ContractError(msg)
    subspaces = []
    for i in range(config.L):
        rng = np.random.default_rng(derive_seed(config.seed, i))
        subspaces.append(Subspace(tuple(rng.choice(N1, size=config.N, replace=False))))
    return tuple(subspaces)


def project(feature: FeatureVector, s: Subspace) -> FeatureVector:
    """Return the components of *feature* at ``s.indices``, in index order."""
    _check_subspace(s, feature.dimension)
    idx = list(s.indices)
    return FeatureVector(tuple(feature.names[i] for i in idx), feature.values[idx])


def majority_vote(labels: Iterable[str]) -> str:
    """Most frequent label; ties go to the lexicographically smallest.

    Raises:
        ContractError: *labels* is empty.

    """
    counts = Counter(labels)
    if not counts:
        msg = "majority_vote needs at least one label"
        raise ContractError(msg)
    best = max(counts.values())
    return min(label for label, n in counts.items() if n == best)


def _subspace_distances(
    probe: np.ndarray,
    gallery: Gallery,
    config: EnsembleConfig,
) -> list[np.ndarray]:
    """Per-subspace L1 distances from *probe* to every gallery entry."""
    _check_k(config.K, gallery.size)
    absdiff = _abs_diff(probe, gallery)
    return [
        absdiff[:, list(s.indices)].sum(axis=1)
        for s in make_subspaces(gallery.dimension, config)
    ]


def rsm_classify(
    probe: FeatureVector | Sequence[float] | np.ndarray,
    gallery: Gallery,
    config: EnsembleConfig,
) -> str:
    """Classify *probe* by majority vote of ``config.L`` subspace KNNs."""
    distances = _subspace_distances(_as_vector(probe), gallery, config)
    return majority_vote(
        _knn_from_distances(d, gallery.labels, config.K) for d in distances
    )


def _rsm_ranking(
    distances: list[np.ndarray],
    votes: Counter[str],
    gallery: Gallery,
) -> tuple[RankedClass, ...]:
    classes = gallery.classes
    codes = np.array([classes.index(label) for label in gallery.labels])
    order = np.argsort(codes, kind="stable")
    starts = np.flatnonzero(np.r_[True, np.diff(codes[order]) != 0])
    stacked = np.vstack(distances)[:, order]
    # (L, C) nearest-entry distance of each class in each subspace
    mean_min = np.minimum.reduceat(stacked, starts, axis=1).mean(axis=0)
    # the majority_vote winner leads its vote tier, so rank 1 is the prediction
    winner = majority_vote(votes.elements())
    ranked = sorted(
        range(len(classes)),
        key=lambda c: (
            -votes[classes[c]],
            classes[c] != winner,
            mean_min[c],
            classes[c],
        ),
    )
    return tuple(RankedClass(classes[c], float(votes[classes[c]])) for c in ranked)


def rsm_rank_classes(
    probe: FeatureVector | Sequence[float] | np.ndarray,
    gallery: Gallery,
    config: EnsembleConfig,
) -> tuple[RankedClass, ...]:
    """Rank classes by ensemble vote count.

    The :func:`majority_vote` winner comes first.  Other ties are broken by
    the class's nearest-entry distance averaged over the subspaces, then by
    label.  Classes without votes are still ranked.
    """
    distances = _subspace_distances(_as_vector(probe), gallery, config)
    votes = Counter(_knn_from_distances(d, gallery.labels, config.K) for d in distances)
    return _rsm_ranking(distances, votes, gallery)


def identify(
    probe: FeatureVector | Sequence[float] | np.ndarray,
    gallery: Gallery,
    config: EnsembleConfig,
    *,
    use_rsm: bool = True,
) -> Identification:
    """Predict the label of *probe* and rank every gallery class.

    With ``use_rsm`` the label is :func:`rsm_classify`'s and the ranking is
    :func:`rsm_rank_classes`'s; otherwise plain :func:`knn_classify` with
    ``config.K`` and :func:`rank_classes`.  Each path computes its distances
    once.
    """
    vector = _as_vector(probe)
    if not use_rsm:
        _check_k(config.K, gallery.size)
        dist = _abs_diff(vector, gallery).sum(axis=1)
        return Identification(
            _knn_from_distances(dist, gallery.labels, config.K),
            rank_classes(vector, gallery),
        )
    distances = _subspace_distances(vector, gallery, config)
    weak = [_knn_from_distances(d, gallery.labels, config.K) for d in distances]
    return Identification(
        majority_vote(weak),
        _rsm_ranking(distances, Counter(weak), gallery),
    )
